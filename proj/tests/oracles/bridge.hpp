#pragma once

// Conversions from library types into the plain containers the oracles use,
// plus the finite-difference gradient checks shared by unit and acceptance
// tests.

#include <cmath>

#include "emocolor/classifier.hpp"
#include "emocolor/random.hpp"
#include "emocolor/transform.hpp"
#include "oracles.hpp"

namespace oracle {

inline Mat to_mat(const emocolor::Matrix& m) {
  Mat out(m.rows(), Vec(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  }
  return out;
}

inline Vec flat(const emocolor::Matrix& m) { return Vec(m.values().begin(), m.values().end()); }

inline std::vector<Pair> to_pairs(const emocolor::PairDataset& data,
                                  std::span<const std::size_t> batch) {
  std::vector<Pair> out;
  for (std::size_t idx : batch) {
    const auto& p = data.pairs[idx];
    const auto s = data.stimulus_row(p);
    const auto c = data.color_row(p);
    out.push_back({Vec(s.begin(), s.end()), Vec(c.begin(), c.end()), p.target});
  }
  return out;
}

/// Random small transform problem. Features are nonnegative with a random
/// sign flip on some coordinates so both live and dead relu regions occur.
struct TransformProblem {
  emocolor::PairDataset data;
  emocolor::Matrix weights;
  std::vector<std::size_t> batch;
};

inline TransformProblem random_transform_problem(std::uint64_t seed) {
  emocolor::Rng rng(seed);
  const std::size_t d = 3 + rng.below(10);
  const std::size_t k = 2 + rng.below(9);
  const std::size_t n = 3 + rng.below(6);
  TransformProblem p;
  p.data.stimulus_features = emocolor::Matrix(n, d);
  p.data.color_features = emocolor::Matrix(emocolor::kNumColors, d);
  for (auto& v : p.data.stimulus_features.values()) v = rng.normal();
  for (auto& v : p.data.color_features.values()) v = rng.normal();
  for (std::size_t i = 0; i < n; ++i) {
    p.data.stimulus_ids.push_back("s" + std::to_string(i));
    for (std::size_t j = 0; j < emocolor::kNumColors; ++j) {
      p.data.pairs.push_back({i, emocolor::color_from_index(j), rng.uniform()});
    }
  }
  p.weights = emocolor::Matrix(d, k);
  for (auto& v : p.weights.values()) v = rng.normal();
  for (std::size_t i = 0; i < p.data.pairs.size(); ++i) {
    if (rng.uniform() < 0.7) p.batch.push_back(i);
  }
  if (p.batch.empty()) p.batch.push_back(0);
  return p;
}

/// True when every pair in the batch is away from the relu kink, where a
/// central difference is not a valid derivative estimate.
inline bool away_from_kink(const TransformProblem& p, double margin) {
  const Mat w = to_mat(p.weights);
  for (const auto& pair : to_pairs(p.data, p.batch)) {
    if (std::abs(cosine(project(w, pair.stimulus), project(w, pair.color))) < margin) return false;
  }
  return true;
}

/// Relative error of the analytic transform gradient against central
/// differences of the oracle loss.
inline double transform_gradient_error(const TransformProblem& p, double h) {
  const auto analytic = emocolor::gradient(p.weights, p.data, p.batch);
  Mat w = to_mat(p.weights);
  const auto pairs = to_pairs(p.data, p.batch);
  Vec numeric;
  for (auto& row : w) {
    for (double& x : row) {
      numeric.push_back(central_difference([&] { return transform_loss(w, pairs); }, &x, h));
    }
  }
  return relative_error(flat(analytic.grad), numeric);
}

struct HeadProblem {
  emocolor::MlpHead head;
  emocolor::Matrix x;
  std::vector<emocolor::Emotion> labels;
  std::vector<std::size_t> batch;
};

inline HeadProblem random_head_problem(std::uint64_t seed) {
  emocolor::Rng rng(seed);
  const std::size_t d = 2 + rng.below(8);
  const std::size_t h = 2 + rng.below(8);
  const std::size_t n = 3 + rng.below(8);
  HeadProblem p;
  p.head = emocolor::MlpHead::initialize(d, h, seed);
  for (auto& b : p.head.b1) b = 0.1 * rng.normal();
  for (auto& b : p.head.b2) b = 0.1 * rng.normal();
  p.x = emocolor::Matrix(n, d);
  for (auto& v : p.x.values()) v = rng.normal();
  for (std::size_t i = 0; i < n; ++i) {
    p.labels.push_back(emocolor::emotion_from_index(rng.below(emocolor::kNumColors)));
    p.batch.push_back(i);
  }
  return p;
}

inline Head to_head(const emocolor::MlpHead& h) { return {to_mat(h.w1), h.b1, to_mat(h.w2), h.b2}; }

/// True when no hidden pre-activation sits within `margin` of zero.
inline bool head_away_from_kink(const HeadProblem& p, double margin) {
  const Head head = to_head(p.head);
  for (std::size_t i = 0; i < p.x.rows(); ++i) {
    const auto row = p.x.row(i);
    const Vec pre = project(head.w1, Vec(row.begin(), row.end()));
    for (std::size_t j = 0; j < pre.size(); ++j) {
      if (std::abs(pre[j] + head.b1[j]) < margin) return false;
    }
  }
  return true;
}

/// Largest relative error over the four head parameter tensors.
inline double head_gradient_error(const HeadProblem& p, double h) {
  const auto analytic = emocolor::head_gradient(p.head, p.x, p.labels, p.batch);
  Head head = to_head(p.head);
  Mat x;
  std::vector<int> labels;
  for (std::size_t i : p.batch) {
    const auto row = p.x.row(i);
    x.emplace_back(row.begin(), row.end());
    labels.push_back(static_cast<int>(emocolor::index_of(p.labels[i])));
  }
  const auto loss = [&] { return head_loss(head, x, labels); };
  const auto fd_matrix = [&](Mat& m) {
    Vec out;
    for (auto& row : m) {
      for (double& v : row) out.push_back(central_difference(loss, &v, h));
    }
    return out;
  };
  const auto fd_vector = [&](Vec& v) {
    Vec out;
    for (double& x : v) out.push_back(central_difference(loss, &x, h));
    return out;
  };
  double err = relative_error(flat(analytic.w1), fd_matrix(head.w1));
  err = std::max(err, relative_error(analytic.b1, fd_vector(head.b1)));
  err = std::max(err, relative_error(flat(analytic.w2), fd_matrix(head.w2)));
  err = std::max(err, relative_error(analytic.b2, fd_vector(head.b2)));
  return err;
}

}  // namespace oracle
