#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emocolor/decision.hpp"
#include "emocolor/error.hpp"
#include "emocolor/matrix.hpp"
#include "emocolor/optimizer.hpp"
#include "emocolor/stimuli.hpp"
#include "emocolor/transform.hpp"

namespace emocolor {

/// Two-layer softmax head: softmax(W2^T relu(W1^T x + b1) + b2).
struct MlpHead {
  Matrix w1;  // d_in x hidden
  std::vector<double> b1;
  Matrix w2;  // hidden x 5
  std::vector<double> b2;

  std::size_t d_in() const { return w1.rows(); }
  std::size_t hidden() const { return w1.cols(); }

  /// Glorot-uniform weights from `seed`, zero biases.
  static MlpHead initialize(std::size_t d_in, std::size_t hidden, std::uint64_t seed);
  static MlpHead zeros(std::size_t d_in, std::size_t hidden);
};

ColorRow head_forward(const MlpHead& head, std::span<const double> x);

struct HeadGradient {
  Matrix w1;
  std::vector<double> b1;
  Matrix w2;
  std::vector<double> b2;
  double loss = 0.0;  // mean cross-entropy over the batch
};

/// Backprop gradient of the mean cross-entropy over rows `batch` of `x`.
HeadGradient head_gradient(const MlpHead& head, const Matrix& x, std::span<const Emotion> labels,
                           std::span<const std::size_t> batch);

struct HeadConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 10;
  std::size_t epochs = 15;
  std::size_t hidden = 75;
  std::uint64_t seed = 0;
};

struct HeadTrainResult {
  MlpHead head;
  std::vector<double> loss_history;  // entry 0 before training, then per epoch
};

HeadTrainResult train_head(const Matrix& x, std::span<const Emotion> labels, const HeadConfig& cfg);

struct Prediction {
  Emotion emotion = Emotion::kAnger;
  bool tie = false;
};

/// Emotion of the most similar color; ties go to the lowest color index.
Prediction similarity_classify(const ColorRow& row);

/// Argmax of the head's probabilities, same tie rule.
Prediction head_classify(const MlpHead& head, std::span<const double> x);

/// Percent of positions where preds and truth agree.
double accuracy(std::span<const Emotion> preds, std::span<const Emotion> truth);

struct ChanceBaseline {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation over runs
  std::size_t runs = 0;
};

/// Uniform-random predictions, `runs` times.
ChanceBaseline chance_baseline(std::span<const Emotion> truth, std::size_t runs,
                               std::uint64_t seed);

enum class ClassifyMode { kRaw, kTransformed, kHeadHuman, kHeadActual };

std::string to_string(ClassifyMode mode);
ClassifyMode parse_classify_mode(const std::string& s);

struct ClassificationInputs {
  PairDataset data;  // targets = human decision probabilities
  std::vector<Emotion> human_labels;
  std::optional<std::vector<Emotion>> actual_labels;
};

struct ClassificationConfig {
  std::size_t trials = 50;
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  TrainConfig transform;
  HeadConfig head;
};

struct AccuracyStats {
  double mean = 0.0;
  double stddev = 0.0;
  double max = 0.0;
  std::vector<double> per_trial;
};

struct ClassificationResult {
  ClassifyMode mode = ClassifyMode::kRaw;
  std::vector<Emotion> predictions;  // last trial
  std::size_t ties = 0;              // last trial
  AccuracyStats vs_human;
  std::optional<AccuracyStats> vs_actual;
  std::size_t trials = 0;
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
};

/// One classification method. Learned modes use stimulus-grouped folds and report
/// held-out predictions only; trial t uses seed + t.
ClassificationResult run_classification(const ClassificationInputs& inputs, ClassifyMode mode,
                                        const ClassificationConfig& cfg);

}  // namespace emocolor
