#include "emocolor/evaluation.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <sstream>

namespace emocolor {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;
};

MeanStd mean_std(std::span<const double> v) {
  MeanStd m;
  if (v.empty()) return m;
  const double n = static_cast<double>(v.size());
  for (double x : v) m.mean += x / n;
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.stddev = std::sqrt(ss / (n - 1.0));
  }
  return m;
}

double pearson_r(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    fail(ErrorKind::kDegenerate, "correlation undefined: zero variance in " +
                                     std::string(sxx == 0.0 ? "x" : "y"));
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

void check_pair(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    fail(ErrorKind::kInvalidArgument, "pearson: lengths differ (" + std::to_string(x.size()) +
                                          " vs " + std::to_string(y.size()) + ")");
  }
  if (x.size() < 3) fail(ErrorKind::kInvalidArgument, "pearson: need at least 3 samples");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
      fail(ErrorKind::kNumerical, "pearson: non-finite value at index " + std::to_string(i));
    }
  }
}

std::vector<double> targets_of(const PairDataset& data) {
  std::vector<double> t;
  t.reserve(data.size());
  for (const auto& p : data.pairs) t.push_back(p.target);
  return t;
}

// Correlation of the held-out matrix after relabeling against the targets,
// pair by pair.
CorrelationResult control_on_predictions(const PairDataset& data, const SimilarityMatrix& held,
                                         const ColorSequence& s) {
  const SimilarityMatrix permuted = permute_colors(held, s);
  std::vector<double> pred, target;
  for (const auto& p : data.pairs) {
    pred.push_back(permuted.values(p.stimulus, index_of(p.color)));
    target.push_back(p.target);
  }
  CorrelationResult r = pearson(pred, target);
  r.condition = "transformed";
  r.permutation = s;
  return r;
}

}  // namespace

ColorSequence ColorSequence::parse(const std::string& text) {
  ColorSequence s;
  std::string cleaned;
  for (char c : text) {
    if (c != ' ') cleaned += c;
  }
  std::stringstream ss(cleaned);
  std::string item;
  std::size_t i = 0;
  std::array<bool, kNumColors> seen{};
  while (std::getline(ss, item, ',')) {
    if (i >= kNumColors) fail(ErrorKind::kInvalidArgument, "color sequence has more than 5 entries");
    if (item.size() != 1 || item[0] < '0' || item[0] > '4') {
      fail(ErrorKind::kInvalidArgument, "color sequence entries must be 0-4, got '" + item + "'");
    }
    const std::size_t v = static_cast<std::size_t>(item[0] - '0');
    if (seen[v]) fail(ErrorKind::kInvalidArgument, "color sequence repeats " + item);
    seen[v] = true;
    s.perm[i++] = v;
  }
  if (i != kNumColors) fail(ErrorKind::kInvalidArgument, "color sequence needs 5 entries: " + text);
  return s;
}

ColorSequence ColorSequence::random_derangement(Rng& rng) {
  ColorSequence s;
  do {
    s = identity();
    rng.shuffle(std::span<std::size_t>(s.perm));
  } while (!s.is_derangement());
  return s;
}

bool ColorSequence::is_identity() const {
  for (std::size_t j = 0; j < kNumColors; ++j) {
    if (perm[j] != j) return false;
  }
  return true;
}

bool ColorSequence::is_derangement() const {
  for (std::size_t j = 0; j < kNumColors; ++j) {
    if (perm[j] == j) return false;
  }
  return true;
}

ColorSequence ColorSequence::inverse() const {
  ColorSequence s;
  for (std::size_t j = 0; j < kNumColors; ++j) s.perm[perm[j]] = j;
  return s;
}

ColorSequence ColorSequence::after(const ColorSequence& first) const {
  ColorSequence s;
  for (std::size_t j = 0; j < kNumColors; ++j) s.perm[j] = first.perm[perm[j]];
  return s;
}

std::string ColorSequence::to_string() const {
  std::string out;
  for (std::size_t j = 0; j < kNumColors; ++j) {
    if (j) out += ',';
    out += static_cast<char>('0' + perm[j]);
  }
  return out;
}

CorrelationResult pearson(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  CorrelationResult out;
  out.n = x.size();
  out.r = pearson_r(x, y);
  const double df = static_cast<double>(out.n - 2);
  if (std::abs(out.r) >= 1.0) {
    out.p_value = 0.0;
  } else {
    const double t = out.r * std::sqrt(df / (1.0 - out.r * out.r));
    const boost::math::students_t dist(df);
    out.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
  }
  return out;
}

double resampling_p_value(std::span<const double> x, std::span<const double> y, std::size_t rounds,
                          std::uint64_t seed) {
  check_pair(x, y);
  if (rounds == 0) fail(ErrorKind::kInvalidArgument, "resampling needs at least one round");
  const double observed = std::abs(pearson_r(x, y));
  Rng rng(seed);
  std::vector<double> shuffled(y.begin(), y.end());
  std::size_t extreme = 0;
  for (std::size_t r = 0; r < rounds; ++r) {
    rng.shuffle(shuffled);
    extreme += std::abs(pearson_r(x, shuffled)) >= observed;
  }
  return static_cast<double>(extreme + 1) / static_cast<double>(rounds + 1);
}

SimilarityMatrix permute_colors(const SimilarityMatrix& m, const ColorSequence& s) {
  SimilarityMatrix out = m;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < kNumColors; ++j) out.values(i, j) = m.values(i, s.perm[j]);
  }
  return out;
}

DecisionTable permute_colors(const DecisionTable& t, const ColorSequence& s) {
  DecisionTable out = t;
  for (std::size_t i = 0; i < t.size(); ++i) {
    for (std::size_t j = 0; j < kNumColors; ++j) out.rows[i][j] = t.rows[i][s.perm[j]];
  }
  return out;
}

std::vector<double> flatten(const DecisionTable& t) {
  std::vector<double> v;
  v.reserve(t.size() * kNumColors);
  for (const auto& row : t.rows) v.insert(v.end(), row.begin(), row.end());
  return v;
}

std::vector<double> flatten(const SimilarityMatrix& m) {
  const auto values = m.values.values();
  return {values.begin(), values.end()};
}

CorrelationResult correlation_experiment(const DecisionTable& human, const SimilarityMatrix& model,
                                         const ColorSequence& s, ModelValues values) {
  if (human.size() != model.rows()) {
    fail(ErrorKind::kInvalidArgument, "human table has " + std::to_string(human.size()) +
                                          " rows, model has " + std::to_string(model.rows()));
  }
  for (std::size_t i = 0; i < human.size(); ++i) {
    if (human.stimulus_ids[i] != model.stimulus_ids[i]) {
      fail(ErrorKind::kInvalidArgument, "stimulus id mismatch at row " + std::to_string(i) + ": " +
                                            human.stimulus_ids[i] + " vs " +
                                            model.stimulus_ids[i]);
    }
  }
  const SimilarityMatrix permuted = permute_colors(model, s);
  const std::vector<double> x = values == ModelValues::kProbabilities
                                    ? flatten(decision_table(permuted).table)
                                    : flatten(permuted);
  CorrelationResult r = pearson(x, flatten(human));
  r.condition = model.transformed ? "transformed" : "raw";
  r.permutation = s;
  return r;
}

SimilarityMatrix held_out_matrix(const PairDataset& data, const CrossValidation& cv) {
  SimilarityMatrix m;
  m.values = Matrix(data.stimulus_features.rows(), kNumColors);
  m.stimulus_ids = data.stimulus_ids;
  m.transformed = true;
  for (std::size_t i = 0; i < data.size(); ++i) {
    m.values(data.pairs[i].stimulus, index_of(data.pairs[i].color)) = cv.predictions[i];
  }
  return m;
}

TransformedCorrelation transformed_correlation(const PairDataset& data, const TrainConfig& cfg,
                                               std::size_t trials, std::size_t folds,
                                               std::span<const ColorSequence> controls) {
  if (trials == 0) fail(ErrorKind::kInvalidArgument, "trials must be positive");
  const std::vector<double> targets = targets_of(data);
  TransformedCorrelation out;
  out.pooled_r.resize(trials);
  for (std::size_t t = 0; t < trials; ++t) {
    TrainConfig c = cfg;
    c.seed = cfg.seed + 1000 * t;
    CrossValidation cv = cross_validate(data, c, folds);
    CorrelationResult r = pearson(cv.predictions, targets);
    r.condition = "transformed";
    out.pooled_r[t] = r.r;
    if (t == 0) {
      out.first = r;
      for (std::size_t f = 0; f < folds; ++f) {
        std::vector<double> p, y;
        for (std::size_t i = 0; i < data.size(); ++i) {
          if (cv.fold_of[i] != f) continue;
          p.push_back(cv.predictions[i]);
          y.push_back(targets[i]);
        }
        try {
          out.per_fold_r.push_back(pearson(p, y).r);
        } catch (const Error&) {
          out.per_fold_r.push_back(kNaN);
        }
      }
      out.cv = std::move(cv);
    }
  }
  const MeanStd ms = mean_std(out.pooled_r);
  out.mean_r = ms.mean;
  out.std_r = ms.stddev;
  const SimilarityMatrix held = held_out_matrix(data, out.cv);
  for (const auto& s : controls) out.controls.push_back(control_on_predictions(data, held, s));
  return out;
}

CorrelationResult retrained_permutation_control(const PairDataset& data, const TrainConfig& cfg,
                                                const ColorSequence& s, std::size_t folds) {
  PairDataset relabeled = data;
  for (std::size_t j = 0; j < kNumColors; ++j) {
    std::ranges::copy(data.color_features.row(s.perm[j]), relabeled.color_features.row(j).begin());
  }
  const CrossValidation cv = cross_validate(relabeled, cfg, folds);
  CorrelationResult r = pearson(cv.predictions, targets_of(data));
  r.condition = "transformed";
  r.permutation = s;
  return r;
}

std::size_t SweepResult::argmax() const {
  std::size_t best = npos;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!points[i].defined) continue;
    if (best == npos || points[i].mean > points[best].mean) best = i;
  }
  return best;
}

std::vector<std::size_t> default_k_grid() { return {25, 50, 75, 100, 125, 150, 175}; }

SweepResult sweep_output_features(const PairDataset& data, const TrainConfig& cfg,
                                  std::span<const std::size_t> k_list, std::size_t trials,
                                  std::size_t folds) {
  if (trials == 0) fail(ErrorKind::kInvalidArgument, "trials must be positive");
  SweepResult out;
  out.axis = "k";
  out.metric = "pooled_r";
  const std::vector<double> targets = targets_of(data);
  out.points.resize(k_list.size());
  const std::size_t jobs = k_list.size() * trials;
  std::vector<double> values(jobs, kNaN);
  std::vector<std::exception_ptr> errors(jobs);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t job = 0; job < jobs; ++job) {
    const std::size_t k = k_list[job / trials];
    const std::size_t t = job % trials;
    if (k == 0) continue;
    try {
      TrainConfig c = cfg;
      c.k = k;
      c.seed = cfg.seed + 1000 * t;
      values[job] = pearson(cross_validate(data, c, folds).predictions, targets).r;
    } catch (...) {
      errors[job] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  for (std::size_t p = 0; p < k_list.size(); ++p) {
    SweepPoint& pt = out.points[p];
    pt.label = std::to_string(k_list[p]);
    pt.defined = k_list[p] != 0;
    if (!pt.defined) {
      pt.mean = pt.stddev = kNaN;
      continue;
    }
    pt.values.assign(values.begin() + static_cast<std::ptrdiff_t>(p * trials),
                     values.begin() + static_cast<std::ptrdiff_t>((p + 1) * trials));
    const MeanStd ms = mean_std(pt.values);
    pt.mean = ms.mean;
    pt.stddev = ms.stddev;
  }
  return out;
}

SweepResult sweep_layers(std::span<const LayerInput> layers, const ClassificationConfig& cfg,
                         bool against_actual) {
  SweepResult out;
  out.axis = "layer";
  out.metric = against_actual ? "accuracy_vs_actual" : "accuracy_vs_human";
  for (const auto& layer : layers) {
    const ClassificationResult r =
        run_classification(layer.inputs, ClassifyMode::kTransformed, cfg);
    if (against_actual && !r.vs_actual) {
      fail(ErrorKind::kInvalidArgument, "layer sweep against actual labels needs actual labels");
    }
    const AccuracyStats& s = against_actual ? *r.vs_actual : r.vs_human;
    out.points.push_back({layer.layer_name, true, s.per_trial, s.mean, s.stddev});
  }
  return out;
}

void write_sweep_csv(const std::filesystem::path& path, const SweepResult& sweep) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << sweep.axis << ",metric,mean,std,trials,defined\n";
  char buf[128];
  for (const auto& p : sweep.points) {
    std::snprintf(buf, sizeof buf, ",%s,%.17g,%.17g,%zu,%d\n", sweep.metric.c_str(), p.mean,
                  p.stddev, p.values.size(), p.defined ? 1 : 0);
    out << p.label << buf;
  }
}

}  // namespace emocolor
