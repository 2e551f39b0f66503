#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "emocolor/decision.hpp"
#include "emocolor/error.hpp"
#include "emocolor/matrix.hpp"
#include "emocolor/optimizer.hpp"
#include "emocolor/stimuli.hpp"

namespace emocolor {

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 10;
  std::size_t epochs = 30;
  std::size_t k = 75;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  AdamConfig adam() const { return {learning_rate, adam_beta1, adam_beta2, adam_epsilon}; }
  void validate() const;
};

/// d_in x k weight matrix; transformed features are W^T x. No bias.
struct LinearTransform {
  Matrix weights;
  std::string model_id;
  std::string layer_name;
  std::uint64_t seed = 0;
  TrainConfig config;

  std::size_t d_in() const { return weights.rows(); }
  std::size_t k() const { return weights.cols(); }

  static LinearTransform identity(std::size_t d);
  /// Uniform(-sqrt(6/(d+k)), +sqrt(6/(d+k))) from `seed`, row-major draw order.
  static LinearTransform initialize(std::size_t d, std::size_t k, std::uint64_t seed);
};

/// One (stimulus, color) cell with its human decision probability.
struct SimilarityPair {
  std::size_t stimulus = 0;  // row of PairDataset::stimulus_features
  Color color = Color::kRed;
  double target = 0.0;
};

/// Feature tables plus the pair list that indexes them.
struct PairDataset {
  Matrix stimulus_features;  // n_stimuli x d
  Matrix color_features;     // 5 x d, color index order
  std::vector<std::string> stimulus_ids;
  std::vector<SimilarityPair> pairs;

  std::size_t dim() const { return stimulus_features.cols(); }
  std::size_t size() const { return pairs.size(); }
  std::span<const double> stimulus_row(const SimilarityPair& p) const {
    return stimulus_features.row(p.stimulus);
  }
  std::span<const double> color_row(const SimilarityPair& p) const {
    return color_features.row(index_of(p.color));
  }
  void validate() const;
};

/// Pairs in stimulus-major, color-minor order. Human rows are matched to
/// stimulus features by id; every stimulus must have a human row.
PairDataset build_pairs(std::span<const FeatureVector> stimulus_features,
                        std::span<const FeatureVector> color_features, const DecisionTable& human);

struct ForwardResult {
  double similarity = 0.0;  // relu(cosine), in [0, 1]
  double cosine = 0.0;      // pre-clip
  bool degenerate = false;  // a transformed vector was zero
};

ForwardResult forward(const Matrix& weights, std::span<const double> stimulus,
                      std::span<const double> color);

inline double loss(double pred, double target) { return (pred - target) * (pred - target); }

enum class Backend { kParallel, kReference };

struct GradientResult {
  Matrix grad;  // d x k, gradient of the mean batch loss
  double loss = 0.0;
  std::size_t degenerate = 0;
};

/// Analytic d(mean L2 loss)/dW over `batch` (indices into data.pairs),
/// chained through relu, cosine and the linear map.
GradientResult gradient(const Matrix& weights, const PairDataset& data,
                        std::span<const std::size_t> batch, Backend backend = Backend::kParallel);

/// Predicted similarity for each listed pair (all pairs when `indices` is
/// empty).
std::vector<ForwardResult> predict(const Matrix& weights, const PairDataset& data,
                                   std::span<const std::size_t> indices = {});

double mean_loss(const Matrix& weights, const PairDataset& data,
                 std::span<const std::size_t> indices);

struct FoldAssignment {
  std::vector<std::size_t> fold_of;
  std::size_t folds = 0;

  std::vector<std::size_t> members(std::size_t fold) const;
  std::vector<std::size_t> complement(std::size_t fold) const;
};

/// Seeded permutation cut into contiguous chunks; sizes differ by at most one
/// (the first n % k folds are one larger).
FoldAssignment kfold_split(std::size_t n, std::size_t folds, std::uint64_t seed);

/// Thrown when training produces a non-finite loss; carries the history.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& message, std::vector<double> history)
      : Error(ErrorKind::kNumerical, message), history_(std::move(history)) {}
  const std::vector<double>& history() const { return history_; }

 private:
  std::vector<double> history_;
};

struct TrainResult {
  LinearTransform transform;
  /// Mean training loss: entry 0 before any update, then one per epoch.
  std::vector<double> loss_history;
  std::size_t degenerate_pairs = 0;
};

/// Adam on the mean L2 loss over minibatches; the training index list is
/// reshuffled every epoch with the run's generator.
TrainResult train(const PairDataset& data, std::span<const std::size_t> train_indices,
                  const TrainConfig& cfg);
TrainResult train(const PairDataset& data, const TrainConfig& cfg);

enum class FoldGrouping { kPairs, kStimuli };

struct CrossValidation {
  std::vector<double> predictions;  // held-out similarity per pair
  std::vector<std::size_t> fold_of;
  std::vector<bool> degenerate;
  std::vector<std::vector<double>> loss_histories;  // per fold
  std::size_t folds = 0;
};

/// k-fold cross-validation. Split seed is cfg.seed; fold f trains with seed
/// cfg.seed + f. With kStimuli, all five pairs of a stimulus share a fold.
CrossValidation cross_validate(const PairDataset& data, const TrainConfig& cfg,
                               std::size_t folds = 5, FoldGrouping grouping = FoldGrouping::kPairs);

/// relu(cos(W^T s, W^T c)) for every stimulus/color, as a similarity table.
SimilarityMatrix transformed_similarity(const LinearTransform& transform, const PairDataset& data);

/// `<prefix>.transform.json` + `<prefix>.transform.bin` (float32, row-major).
void save_transform(const std::filesystem::path& prefix, const LinearTransform& t);
LinearTransform load_transform(const std::filesystem::path& path);

void write_loss_history_csv(const std::filesystem::path& path,
                            const std::vector<std::vector<double>>& histories);

}  // namespace emocolor
