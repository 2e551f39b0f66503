#include "emocolor/transform.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <nlohmann/json.hpp>

#include "emocolor/kernels.hpp"
#include "emocolor/random.hpp"

namespace emocolor {

namespace {

using nlohmann::json;

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// relu(cos(u, v)) with the degeneracy rule for zero vectors.
ForwardResult clipped_cosine(std::span<const double> u, std::span<const double> v) {
  ForwardResult r;
  const double nu = norm2(u);
  const double nv = norm2(v);
  if (nu == 0.0 || nv == 0.0) {
    r.degenerate = true;
    return r;
  }
  r.cosine = std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
  r.similarity = r.cosine > 0.0 ? r.cosine : 0.0;
  return r;
}

Matrix project(const Matrix& x, const Matrix& w, Backend backend) {
  Matrix out(x.rows(), w.cols());
  if (x.rows() == 0) return out;
  if (backend == Backend::kParallel) {
    kernels::gemm<double>(x.values(), w.values(), out.values(), x.rows(), x.cols(), w.cols());
  } else {
    kernels::reference::gemm<double>(x.values(), w.values(), out.values(), x.rows(), x.cols(),
                                     w.cols());
  }
  return out;
}

void check_weights(const Matrix& w, const PairDataset& data) {
  if (w.rows() != data.dim()) {
    fail(ErrorKind::kInvalidArgument, "transform input dim " + std::to_string(w.rows()) +
                                          " does not match feature dim " +
                                          std::to_string(data.dim()));
  }
  if (w.cols() == 0) fail(ErrorKind::kInvalidArgument, "transform has k = 0");
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return idx;
}

json config_to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
          {"epochs", c.epochs},               {"k", c.k},
          {"seed", c.seed},                   {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},       {"adam_epsilon", c.adam_epsilon}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.k = j.value("k", c.k);
  c.seed = j.value("seed", c.seed);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.adam_epsilon = j.value("adam_epsilon", c.adam_epsilon);
  return c;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    fail(ErrorKind::kInvalidArgument, "learning_rate must be positive");
  }
  if (batch_size == 0) fail(ErrorKind::kInvalidArgument, "batch_size must be positive");
  if (k == 0) fail(ErrorKind::kInvalidArgument, "k must be positive");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0)) {
    fail(ErrorKind::kInvalidArgument, "Adam betas must lie in (0, 1)");
  }
  if (!(adam_epsilon > 0.0)) fail(ErrorKind::kInvalidArgument, "adam_epsilon must be positive");
}

LinearTransform LinearTransform::identity(std::size_t d) {
  LinearTransform t;
  t.weights = Matrix(d, d);
  for (std::size_t i = 0; i < d; ++i) t.weights(i, i) = 1.0;
  t.config.k = d;
  return t;
}

LinearTransform LinearTransform::initialize(std::size_t d, std::size_t k, std::uint64_t seed) {
  if (d == 0 || k == 0) fail(ErrorKind::kInvalidArgument, "transform dims must be positive");
  LinearTransform t;
  t.weights = Matrix(d, k);
  t.seed = seed;
  t.config.k = k;
  t.config.seed = seed;
  Rng rng(seed);
  const double limit = std::sqrt(6.0 / static_cast<double>(d + k));
  for (double& w : t.weights.values()) w = rng.uniform(-limit, limit);
  return t;
}

void PairDataset::validate() const {
  if (color_features.rows() != kNumColors) {
    fail(ErrorKind::kInvalidArgument, "pair dataset needs 5 color feature rows");
  }
  if (stimulus_features.cols() != color_features.cols()) {
    fail(ErrorKind::kInvalidArgument, "stimulus and color feature dims differ");
  }
  if (stimulus_ids.size() != stimulus_features.rows()) {
    fail(ErrorKind::kInvalidArgument, "stimulus id count does not match feature rows");
  }
  for (const auto& p : pairs) {
    if (p.stimulus >= stimulus_features.rows()) {
      fail(ErrorKind::kInvalidArgument, "pair references a missing stimulus row");
    }
    if (!(p.target >= 0.0 && p.target <= 1.0)) {
      fail(ErrorKind::kInvalidArgument, "pair target outside [0, 1] for stimulus " +
                                            stimulus_ids[p.stimulus]);
    }
  }
}

PairDataset build_pairs(std::span<const FeatureVector> stimulus_features,
                        std::span<const FeatureVector> color_features, const DecisionTable& human) {
  if (color_features.size() != kNumColors) {
    fail(ErrorKind::kInvalidArgument, "expected 5 color feature vectors");
  }
  PairDataset data;
  data.stimulus_features = to_matrix(stimulus_features);
  data.color_features = to_matrix(color_features);
  for (std::size_t i = 0; i < stimulus_features.size(); ++i) {
    const auto& id = stimulus_features[i].source_id;
    const std::size_t h = human.find(id);
    if (h == DecisionTable::npos) fail(ErrorKind::kNotFound, "no human data for stimulus " + id);
    data.stimulus_ids.push_back(id);
    for (std::size_t j = 0; j < kNumColors; ++j) {
      data.pairs.push_back({i, color_from_index(j), human.rows[h][j]});
    }
  }
  data.validate();
  return data;
}

ForwardResult forward(const Matrix& weights, std::span<const double> stimulus,
                      std::span<const double> color) {
  if (stimulus.size() != weights.rows() || color.size() != weights.rows()) {
    fail(ErrorKind::kInvalidArgument, "forward: feature dim does not match transform");
  }
  const std::size_t k = weights.cols();
  std::vector<double> u(k, 0.0), v(k, 0.0);
  for (std::size_t i = 0; i < weights.rows(); ++i) {
    const auto w = weights.row(i);
    for (std::size_t j = 0; j < k; ++j) {
      u[j] += stimulus[i] * w[j];
      v[j] += color[i] * w[j];
    }
  }
  return clipped_cosine(u, v);
}

GradientResult gradient(const Matrix& weights, const PairDataset& data,
                        std::span<const std::size_t> batch, Backend backend) {
  check_weights(weights, data);
  if (batch.empty()) fail(ErrorKind::kInvalidArgument, "gradient: empty batch");
  const std::size_t n = batch.size();
  const std::size_t d = weights.rows();
  const std::size_t k = weights.cols();

  Matrix a(n, d), b(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    const auto& p = data.pairs.at(batch[r]);
    std::ranges::copy(data.stimulus_row(p), a.row(r).begin());
    std::ranges::copy(data.color_row(p), b.row(r).begin());
  }
  const Matrix u = project(a, weights, backend);
  const Matrix v = project(b, weights, backend);

  GradientResult out;
  Matrix du(n, k), dv(n, k);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto& p = data.pairs[batch[r]];
    const auto ur = u.row(r);
    const auto vr = v.row(r);
    const double nu = norm2(ur);
    const double nv = norm2(vr);
    if (nu == 0.0 || nv == 0.0) {
      ++out.degenerate;
      out.loss += loss(0.0, p.target) * inv_n;
      continue;
    }
    const double c = dot(ur, vr) / (nu * nv);
    const double pred = c > 0.0 ? std::min(c, 1.0) : 0.0;
    out.loss += loss(pred, p.target) * inv_n;
    if (!(c > 0.0)) continue;
    const double g = 2.0 * (pred - p.target) * inv_n;
    const double inv_uv = 1.0 / (nu * nv);
    const double cu = c / (nu * nu);
    const double cv = c / (nv * nv);
    for (std::size_t j = 0; j < k; ++j) {
      du(r, j) = g * (vr[j] * inv_uv - cu * ur[j]);
      dv(r, j) = g * (ur[j] * inv_uv - cv * vr[j]);
    }
  }

  out.grad = Matrix(d, k);
  Matrix gb(d, k);
  if (backend == Backend::kParallel) {
    kernels::gemm_tn<double>(a.values(), du.values(), out.grad.values(), n, d, k);
    kernels::gemm_tn<double>(b.values(), dv.values(), gb.values(), n, d, k);
  } else {
    kernels::reference::gemm_tn<double>(a.values(), du.values(), out.grad.values(), n, d, k);
    kernels::reference::gemm_tn<double>(b.values(), dv.values(), gb.values(), n, d, k);
  }
  auto g = out.grad.values();
  const auto h = gb.values();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += h[i];
  return out;
}

std::vector<ForwardResult> predict(const Matrix& weights, const PairDataset& data,
                                   std::span<const std::size_t> indices) {
  check_weights(weights, data);
  const Matrix u = project(data.stimulus_features, weights, Backend::kParallel);
  const Matrix v = project(data.color_features, weights, Backend::kParallel);
  std::vector<std::size_t> all;
  if (indices.empty()) {
    all = all_indices(data.size());
    indices = all;
  }
  std::vector<ForwardResult> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    const auto& p = data.pairs.at(i);
    out.push_back(clipped_cosine(u.row(p.stimulus), v.row(index_of(p.color))));
  }
  return out;
}

double mean_loss(const Matrix& weights, const PairDataset& data,
                 std::span<const std::size_t> indices) {
  if (indices.empty()) fail(ErrorKind::kInvalidArgument, "mean_loss: no pairs");
  const auto preds = predict(weights, data, indices);
  double total = 0.0;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    total += loss(preds[i].similarity, data.pairs[indices[i]].target);
  }
  return total / static_cast<double>(indices.size());
}

std::vector<std::size_t> FoldAssignment::members(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] == fold) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldAssignment::complement(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] != fold) out.push_back(i);
  }
  return out;
}

FoldAssignment kfold_split(std::size_t n, std::size_t folds, std::uint64_t seed) {
  if (folds == 0) fail(ErrorKind::kInvalidArgument, "kfold_split: zero folds");
  if (n < folds) {
    fail(ErrorKind::kInvalidArgument, "kfold_split: " + std::to_string(n) + " items for " +
                                          std::to_string(folds) + " folds");
  }
  Rng rng(seed);
  const auto perm = rng.permutation(n);
  FoldAssignment fa;
  fa.folds = folds;
  fa.fold_of.assign(n, 0);
  const std::size_t base = n / folds;
  const std::size_t extra = n % folds;
  std::size_t pos = 0;
  for (std::size_t f = 0; f < folds; ++f) {
    const std::size_t size = base + (f < extra ? 1 : 0);
    for (std::size_t i = 0; i < size; ++i) fa.fold_of[perm[pos++]] = f;
  }
  return fa;
}

TrainResult train(const PairDataset& data, std::span<const std::size_t> train_indices,
                  const TrainConfig& cfg) {
  cfg.validate();
  data.validate();
  if (train_indices.empty()) fail(ErrorKind::kInvalidArgument, "train: no training pairs");
  for (std::size_t i : train_indices) {
    if (i >= data.size()) fail(ErrorKind::kInvalidArgument, "train: pair index out of range");
  }

  TrainResult result;
  result.transform = LinearTransform::initialize(data.dim(), cfg.k, cfg.seed);
  result.transform.config = cfg;
  Matrix& w = result.transform.weights;

  // Weight init consumes its own generator; shuffling uses a second stream
  // so changing k does not change the batch order.
  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(train_indices.begin(), train_indices.end());
  AdamState state(w.size());
  const AdamConfig adam = cfg.adam();

  auto record_loss = [&](std::size_t epoch) {
    const double l = mean_loss(w, data, train_indices);
    result.loss_history.push_back(l);
    if (!std::isfinite(l)) {
      throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) +
                                 " (non-finite loss)",
                             result.loss_history);
    }
  };

  record_loss(0);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - start);
      const std::span<const std::size_t> batch(order.data() + start, len);
      const GradientResult g = gradient(w, data, batch);
      try {
        adam_step(w.values(), g.grad.values(), state, adam);
      } catch (const Error& e) {
        throw TrainingDiverged(std::string(e.what()) + " at epoch " + std::to_string(epoch),
                               result.loss_history);
      }
    }
    record_loss(epoch);
  }
  for (const auto& r : predict(w, data, train_indices)) result.degenerate_pairs += r.degenerate;
  return result;
}

TrainResult train(const PairDataset& data, const TrainConfig& cfg) {
  const auto idx = all_indices(data.size());
  return train(data, idx, cfg);
}

CrossValidation cross_validate(const PairDataset& data, const TrainConfig& cfg,
                               std::size_t folds, FoldGrouping grouping) {
  cfg.validate();
  data.validate();
  CrossValidation cv;
  cv.folds = folds;
  const std::size_t n = data.size();
  if (n < folds) {
    fail(ErrorKind::kInvalidArgument, "cross_validate needs at least " + std::to_string(folds) +
                                          " pairs, got " + std::to_string(n));
  }
  if (grouping == FoldGrouping::kPairs) {
    cv.fold_of = kfold_split(n, folds, cfg.seed).fold_of;
  } else {
    const auto by_stimulus = kfold_split(data.stimulus_features.rows(), folds, cfg.seed);
    cv.fold_of.resize(n);
    for (std::size_t i = 0; i < n; ++i) cv.fold_of[i] = by_stimulus.fold_of[data.pairs[i].stimulus];
  }
  cv.predictions.assign(n, 0.0);
  cv.degenerate.assign(n, false);
  cv.loss_histories.resize(folds);

  FoldAssignment fa{cv.fold_of, folds};
  std::vector<std::exception_ptr> errors(folds);
  std::vector<std::vector<ForwardResult>> held(folds);
  std::vector<std::vector<std::size_t>> members(folds);

#pragma omp parallel for schedule(dynamic)
  for (std::size_t f = 0; f < folds; ++f) {
    try {
      members[f] = fa.members(f);
      const auto train_idx = fa.complement(f);
      TrainConfig fold_cfg = cfg;
      fold_cfg.seed = cfg.seed + f;
      TrainResult r = train(data, train_idx, fold_cfg);
      cv.loss_histories[f] = std::move(r.loss_history);
      held[f] = predict(r.transform.weights, data, members[f]);
    } catch (...) {
      errors[f] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  for (std::size_t f = 0; f < folds; ++f) {
    for (std::size_t i = 0; i < members[f].size(); ++i) {
      cv.predictions[members[f][i]] = held[f][i].similarity;
      cv.degenerate[members[f][i]] = held[f][i].degenerate;
    }
  }
  return cv;
}

SimilarityMatrix transformed_similarity(const LinearTransform& transform, const PairDataset& data) {
  check_weights(transform.weights, data);
  const Matrix u = project(data.stimulus_features, transform.weights, Backend::kParallel);
  const Matrix v = project(data.color_features, transform.weights, Backend::kParallel);
  SimilarityMatrix s;
  s.values = Matrix(u.rows(), kNumColors);
  for (std::size_t i = 0; i < u.rows(); ++i) {
    for (std::size_t j = 0; j < kNumColors; ++j) {
      s.values(i, j) = clipped_cosine(u.row(i), v.row(j)).similarity;
    }
  }
  s.stimulus_ids = data.stimulus_ids;
  s.model_id = transform.model_id;
  s.layer_name = transform.layer_name;
  s.transformed = true;
  return s;
}

void save_transform(const std::filesystem::path& prefix, const LinearTransform& t) {
  const std::filesystem::path meta = prefix.string() + ".transform.json";
  const std::filesystem::path bin = prefix.string() + ".transform.bin";
  if (meta.has_parent_path()) std::filesystem::create_directories(meta.parent_path());
  json j = {{"d_in", t.d_in()},         {"k", t.k()},
            {"seed", t.seed},           {"model_id", t.model_id},
            {"layer_name", t.layer_name}, {"config", config_to_json(t.config)}};
  std::ofstream m(meta);
  if (!m) fail(ErrorKind::kIo, "cannot write " + meta.string());
  m << j.dump(2) << '\n';

  std::ofstream b(bin, std::ios::binary);
  if (!b) fail(ErrorKind::kIo, "cannot write " + bin.string());
  std::vector<float> buf(t.weights.size());
  std::ranges::transform(t.weights.values(), buf.begin(),
                         [](double v) { return static_cast<float>(v); });
  b.write(reinterpret_cast<const char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!b) fail(ErrorKind::kIo, "short write to " + bin.string());
}

LinearTransform load_transform(const std::filesystem::path& path) {
  std::string stem = path.string();
  for (const char* suffix : {".transform.json", ".transform.bin"}) {
    const std::string s(suffix);
    if (stem.size() > s.size() && stem.ends_with(s)) stem.resize(stem.size() - s.size());
  }
  const std::filesystem::path meta = stem + ".transform.json";
  const std::filesystem::path bin = stem + ".transform.bin";
  std::ifstream m(meta);
  if (!m) fail(ErrorKind::kNotFound, "transform not found: " + meta.string());
  json j;
  try {
    m >> j;
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, meta.string() + ": " + e.what());
  }
  LinearTransform t;
  const auto d = j.at("d_in").get<std::size_t>();
  const auto k = j.at("k").get<std::size_t>();
  t.seed = j.value("seed", std::uint64_t{0});
  t.model_id = j.value("model_id", "");
  t.layer_name = j.value("layer_name", "");
  if (j.contains("config")) t.config = config_from_json(j["config"]);

  std::ifstream b(bin, std::ios::binary);
  if (!b) fail(ErrorKind::kNotFound, "transform weights not found: " + bin.string());
  std::vector<float> buf(d * k);
  b.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (b.gcount() != static_cast<std::streamsize>(buf.size() * sizeof(float))) {
    fail(ErrorKind::kFormat, bin.string() + ": expected " + std::to_string(d * k) + " floats");
  }
  t.weights = Matrix(d, k);
  for (std::size_t i = 0; i < buf.size(); ++i) {
    if (!std::isfinite(buf[i])) fail(ErrorKind::kNumerical, bin.string() + ": non-finite weight");
    t.weights.values()[i] = buf[i];
  }
  return t;
}

void write_loss_history_csv(const std::filesystem::path& path,
                            const std::vector<std::vector<double>>& histories) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << "fold,epoch,loss\n";
  char buf[64];
  for (std::size_t f = 0; f < histories.size(); ++f) {
    for (std::size_t e = 0; e < histories[f].size(); ++e) {
      std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g\n", f, e, histories[f][e]);
      out << buf;
    }
  }
}

}  // namespace emocolor
