#include "emocolor/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <exception>

#include "emocolor/kernels.hpp"
#include "emocolor/random.hpp"

namespace emocolor {

namespace {

struct Activations {
  std::vector<double> pre;     // hidden pre-activation
  std::vector<double> hidden;  // relu(pre)
  ColorRow logits{};
};

Activations activate(const MlpHead& head, std::span<const double> x) {
  if (x.size() != head.d_in()) {
    fail(ErrorKind::kInvalidArgument, "head input dim " + std::to_string(x.size()) +
                                          " does not match " + std::to_string(head.d_in()));
  }
  const std::size_t h = head.hidden();
  Activations a;
  a.pre = head.b1;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const auto w = head.w1.row(i);
    for (std::size_t j = 0; j < h; ++j) a.pre[j] += xi * w[j];
  }
  a.hidden.resize(h);
  for (std::size_t j = 0; j < h; ++j) a.hidden[j] = a.pre[j] > 0.0 ? a.pre[j] : 0.0;
  for (std::size_t c = 0; c < kNumColors; ++c) a.logits[c] = head.b2[c];
  for (std::size_t j = 0; j < h; ++j) {
    const auto w = head.w2.row(j);
    for (std::size_t c = 0; c < kNumColors; ++c) a.logits[c] += a.hidden[j] * w[c];
  }
  return a;
}

ColorRow softmax(const ColorRow& z) {
  const double mx = *std::max_element(z.begin(), z.end());
  ColorRow p{};
  double sum = 0.0;
  for (std::size_t c = 0; c < kNumColors; ++c) {
    p[c] = std::exp(z[c] - mx);
    sum += p[c];
  }
  for (double& v : p) v /= sum;
  return p;
}

double log_sum_exp(const ColorRow& z) {
  const double mx = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - mx);
  return mx + std::log(s);
}

Prediction argmax(const ColorRow& row) {
  for (double v : row) {
    if (!std::isfinite(v)) fail(ErrorKind::kNumerical, "non-finite score in classification row");
  }
  std::size_t best = 0;
  for (std::size_t j = 1; j < kNumColors; ++j) {
    if (row[j] > row[best]) best = j;
  }
  Prediction p;
  p.emotion = emotion_from_index(best);
  for (std::size_t j = 0; j < kNumColors; ++j) p.tie = p.tie || (j != best && row[j] == row[best]);
  return p;
}

double mean_ce(const MlpHead& head, const Matrix& x, std::span<const Emotion> labels) {
  double total = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto a = activate(head, x.row(r));
    total += log_sum_exp(a.logits) - a.logits[index_of(labels[r])];
  }
  return total / static_cast<double>(x.rows());
}

AccuracyStats summarize(std::vector<double> values) {
  AccuracyStats s;
  s.per_trial = std::move(values);
  const double n = static_cast<double>(s.per_trial.size());
  for (double v : s.per_trial) s.mean += v / n;
  double ss = 0.0;
  for (double v : s.per_trial) ss += (v - s.mean) * (v - s.mean);
  s.stddev = s.per_trial.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  s.max = *std::max_element(s.per_trial.begin(), s.per_trial.end());
  return s;
}

Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) std::ranges::copy(m.row(rows[i]), out.row(i).begin());
  return out;
}

struct TrialOutput {
  std::vector<Emotion> predictions;
  std::size_t ties = 0;
};

TrialOutput raw_trial(const PairDataset& data) {
  const Matrix sims = kernels::cosine_matrix(data.stimulus_features, data.color_features);
  TrialOutput out;
  for (std::size_t i = 0; i < sims.rows(); ++i) {
    ColorRow row{};
    for (std::size_t j = 0; j < kNumColors; ++j) row[j] = sims(i, j);
    for (double v : row) {
      if (std::isnan(v)) fail(ErrorKind::kDegenerate, "zero feature vector: " + data.stimulus_ids[i]);
    }
    const Prediction p = similarity_classify(row);
    out.predictions.push_back(p.emotion);
    out.ties += p.tie;
  }
  return out;
}

TrialOutput transformed_trial(const PairDataset& data, const ClassificationConfig& cfg,
                              std::uint64_t seed) {
  TrainConfig tc = cfg.transform;
  tc.seed = seed;
  const CrossValidation cv = cross_validate(data, tc, cfg.folds, FoldGrouping::kStimuli);
  const std::size_t n = data.stimulus_features.rows();
  std::vector<ColorRow> rows(n, ColorRow{});
  for (std::size_t i = 0; i < data.size(); ++i) {
    rows[data.pairs[i].stimulus][index_of(data.pairs[i].color)] = cv.predictions[i];
  }
  TrialOutput out;
  for (const auto& row : rows) {
    const Prediction p = similarity_classify(row);
    out.predictions.push_back(p.emotion);
    out.ties += p.tie;
  }
  return out;
}

TrialOutput head_trial(const PairDataset& data, std::span<const Emotion> labels,
                       const ClassificationConfig& cfg, std::uint64_t seed) {
  const std::size_t n = data.stimulus_features.rows();
  const FoldAssignment fa = kfold_split(n, cfg.folds, seed);
  TrialOutput out;
  out.predictions.assign(n, Emotion::kAnger);
  for (std::size_t f = 0; f < cfg.folds; ++f) {
    const auto train_rows = fa.complement(f);
    const Matrix x = select_rows(data.stimulus_features, train_rows);
    std::vector<Emotion> y;
    for (std::size_t r : train_rows) y.push_back(labels[r]);
    HeadConfig hc = cfg.head;
    hc.seed = seed + f;
    const HeadTrainResult trained = train_head(x, y, hc);
    for (std::size_t r : fa.members(f)) {
      const Prediction p = head_classify(trained.head, data.stimulus_features.row(r));
      out.predictions[r] = p.emotion;
      out.ties += p.tie;
    }
  }
  return out;
}

}  // namespace

MlpHead MlpHead::initialize(std::size_t d_in, std::size_t hidden, std::uint64_t seed) {
  if (d_in == 0 || hidden == 0) fail(ErrorKind::kInvalidArgument, "head dims must be positive");
  MlpHead h = zeros(d_in, hidden);
  Rng rng(seed);
  const double l1 = std::sqrt(6.0 / static_cast<double>(d_in + hidden));
  for (double& w : h.w1.values()) w = rng.uniform(-l1, l1);
  const double l2 = std::sqrt(6.0 / static_cast<double>(hidden + kNumColors));
  for (double& w : h.w2.values()) w = rng.uniform(-l2, l2);
  return h;
}

MlpHead MlpHead::zeros(std::size_t d_in, std::size_t hidden) {
  MlpHead h;
  h.w1 = Matrix(d_in, hidden);
  h.b1.assign(hidden, 0.0);
  h.w2 = Matrix(hidden, kNumColors);
  h.b2.assign(kNumColors, 0.0);
  return h;
}

ColorRow head_forward(const MlpHead& head, std::span<const double> x) {
  const ColorRow p = softmax(activate(head, x).logits);
  for (double v : p) {
    if (!std::isfinite(v)) fail(ErrorKind::kNumerical, "non-finite head activation");
  }
  return p;
}

HeadGradient head_gradient(const MlpHead& head, const Matrix& x, std::span<const Emotion> labels,
                           std::span<const std::size_t> batch) {
  if (batch.empty()) fail(ErrorKind::kInvalidArgument, "head_gradient: empty batch");
  if (labels.size() != x.rows()) fail(ErrorKind::kInvalidArgument, "label count != rows");
  const std::size_t h = head.hidden();
  HeadGradient g;
  g.w1 = Matrix(head.d_in(), h);
  g.b1.assign(h, 0.0);
  g.w2 = Matrix(h, kNumColors);
  g.b2.assign(kNumColors, 0.0);
  const double inv_n = 1.0 / static_cast<double>(batch.size());

  std::vector<double> dpre(h);
  for (std::size_t r : batch) {
    const auto xr = x.row(r);
    const Activations a = activate(head, xr);
    const std::size_t y = index_of(labels[r]);
    g.loss += (log_sum_exp(a.logits) - a.logits[y]) * inv_n;

    ColorRow dz = softmax(a.logits);
    dz[y] -= 1.0;
    for (double& v : dz) v *= inv_n;

    for (std::size_t c = 0; c < kNumColors; ++c) g.b2[c] += dz[c];
    for (std::size_t j = 0; j < h; ++j) {
      double dh = 0.0;
      for (std::size_t c = 0; c < kNumColors; ++c) {
        g.w2(j, c) += a.hidden[j] * dz[c];
        dh += head.w2(j, c) * dz[c];
      }
      dpre[j] = a.pre[j] > 0.0 ? dh : 0.0;
      g.b1[j] += dpre[j];
    }
    for (std::size_t i = 0; i < xr.size(); ++i) {
      const double xi = xr[i];
      if (xi == 0.0) continue;
      auto row = g.w1.row(i);
      for (std::size_t j = 0; j < h; ++j) row[j] += xi * dpre[j];
    }
  }
  return g;
}

HeadTrainResult train_head(const Matrix& x, std::span<const Emotion> labels, const HeadConfig& cfg) {
  if (x.rows() == 0) fail(ErrorKind::kInvalidArgument, "train_head: no examples");
  if (labels.size() != x.rows()) fail(ErrorKind::kInvalidArgument, "label count != rows");
  if (cfg.batch_size == 0 || !(cfg.learning_rate > 0.0)) {
    fail(ErrorKind::kInvalidArgument, "train_head: batch size and learning rate must be positive");
  }
  HeadTrainResult result;
  result.head = MlpHead::initialize(x.cols(), cfg.hidden, cfg.seed);
  MlpHead& head = result.head;
  const AdamConfig adam{cfg.learning_rate, 0.9, 0.999, 1e-8};
  AdamState s_w1(head.w1.size()), s_b1(head.b1.size()), s_w2(head.w2.size()),
      s_b2(head.b2.size());

  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(x.rows());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  auto record = [&](std::size_t epoch) {
    const double l = mean_ce(head, x, labels);
    result.loss_history.push_back(l);
    if (!std::isfinite(l)) {
      throw TrainingDiverged("head training diverged at epoch " + std::to_string(epoch),
                             result.loss_history);
    }
  };
  record(0);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - start);
      const HeadGradient g = head_gradient(head, x, labels, {order.data() + start, len});
      try {
        adam_step(head.w1.values(), g.w1.values(), s_w1, adam);
        adam_step(head.b1, g.b1, s_b1, adam);
        adam_step(head.w2.values(), g.w2.values(), s_w2, adam);
        adam_step(head.b2, g.b2, s_b2, adam);
      } catch (const Error& e) {
        throw TrainingDiverged(std::string(e.what()) + " at epoch " + std::to_string(epoch),
                               result.loss_history);
      }
    }
    record(epoch);
  }
  return result;
}

Prediction similarity_classify(const ColorRow& row) { return argmax(row); }

Prediction head_classify(const MlpHead& head, std::span<const double> x) {
  return argmax(head_forward(head, x));
}

double accuracy(std::span<const Emotion> preds, std::span<const Emotion> truth) {
  if (preds.size() != truth.size()) {
    fail(ErrorKind::kInvalidArgument, "accuracy: " + std::to_string(preds.size()) +
                                          " predictions for " + std::to_string(truth.size()) +
                                          " labels");
  }
  if (preds.empty()) fail(ErrorKind::kInvalidArgument, "accuracy: empty lists");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == truth[i];
  return 100.0 * static_cast<double>(hits) / static_cast<double>(preds.size());
}

ChanceBaseline chance_baseline(std::span<const Emotion> truth, std::size_t runs,
                               std::uint64_t seed) {
  if (truth.empty()) fail(ErrorKind::kInvalidArgument, "chance_baseline: empty truth");
  if (runs == 0) fail(ErrorKind::kInvalidArgument, "chance_baseline: zero runs");
  Rng rng(seed);
  std::vector<double> acc;
  acc.reserve(runs);
  std::vector<Emotion> preds(truth.size());
  for (std::size_t r = 0; r < runs; ++r) {
    for (auto& p : preds) p = emotion_from_index(rng.below(kNumColors));
    acc.push_back(accuracy(preds, truth));
  }
  const AccuracyStats s = summarize(std::move(acc));
  return {s.mean, s.stddev, runs};
}

std::string to_string(ClassifyMode mode) {
  switch (mode) {
    case ClassifyMode::kRaw: return "raw";
    case ClassifyMode::kTransformed: return "transformed";
    case ClassifyMode::kHeadHuman: return "head-human";
    case ClassifyMode::kHeadActual: return "head-actual";
  }
  return "unknown";
}

ClassifyMode parse_classify_mode(const std::string& s) {
  for (auto m : {ClassifyMode::kRaw, ClassifyMode::kTransformed, ClassifyMode::kHeadHuman,
                 ClassifyMode::kHeadActual}) {
    if (to_string(m) == s) return m;
  }
  fail(ErrorKind::kInvalidArgument,
       "unknown classify mode '" + s + "' (expected raw|transformed|head-human|head-actual)");
}

ClassificationResult run_classification(const ClassificationInputs& inputs, ClassifyMode mode,
                                        const ClassificationConfig& cfg) {
  const PairDataset& data = inputs.data;
  data.validate();
  const std::size_t n = data.stimulus_features.rows();
  if (inputs.human_labels.size() != n) {
    fail(ErrorKind::kInvalidArgument, "need one human label per stimulus");
  }
  if (inputs.actual_labels && inputs.actual_labels->size() != n) {
    fail(ErrorKind::kInvalidArgument, "need one actual label per stimulus");
  }
  if (mode == ClassifyMode::kHeadActual && !inputs.actual_labels) {
    fail(ErrorKind::kInvalidArgument, "head-actual needs actual class labels in the manifest");
  }
  if (cfg.trials == 0) fail(ErrorKind::kInvalidArgument, "trials must be positive");

  const std::size_t trials = mode == ClassifyMode::kRaw ? 1 : cfg.trials;
  std::vector<TrialOutput> outputs(trials);
  std::vector<std::exception_ptr> errors(trials);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t t = 0; t < trials; ++t) {
    try {
      const std::uint64_t seed = cfg.seed + t;
      switch (mode) {
        case ClassifyMode::kRaw: outputs[t] = raw_trial(data); break;
        case ClassifyMode::kTransformed: outputs[t] = transformed_trial(data, cfg, seed); break;
        case ClassifyMode::kHeadHuman:
          outputs[t] = head_trial(data, inputs.human_labels, cfg, seed);
          break;
        case ClassifyMode::kHeadActual:
          outputs[t] = head_trial(data, *inputs.actual_labels, cfg, seed);
          break;
      }
    } catch (...) {
      errors[t] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  ClassificationResult result;
  result.mode = mode;
  result.trials = trials;
  result.seed = cfg.seed;
  result.epochs = mode == ClassifyMode::kTransformed ? cfg.transform.epochs
                  : mode == ClassifyMode::kRaw       ? 0
                                                     : cfg.head.epochs;
  std::vector<double> human, actual;
  for (const auto& o : outputs) {
    human.push_back(accuracy(o.predictions, inputs.human_labels));
    if (inputs.actual_labels) actual.push_back(accuracy(o.predictions, *inputs.actual_labels));
  }
  result.vs_human = summarize(std::move(human));
  if (inputs.actual_labels) result.vs_actual = summarize(std::move(actual));
  result.predictions = outputs.back().predictions;
  result.ties = outputs.back().ties;
  return result;
}

}  // namespace emocolor
