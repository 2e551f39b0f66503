#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emocolor/classifier.hpp"
#include "emocolor/decision.hpp"
#include "emocolor/random.hpp"
#include "emocolor/transform.hpp"

namespace emocolor {

/// Permutation of the five color indices. Applied to a model table, column j
/// of the output is column perm[j] of the input.
struct ColorSequence {
  std::array<std::size_t, kNumColors> perm{0, 1, 2, 3, 4};

  static ColorSequence identity() { return {}; }
  /// "4,3,0,2,1" (spaces allowed). Throws unless it is a permutation of 0..4.
  static ColorSequence parse(const std::string& text);
  static ColorSequence random_derangement(Rng& rng);

  bool is_identity() const;
  bool is_derangement() const;
  ColorSequence inverse() const;
  /// Sequence equal to applying `first`, then *this.
  ColorSequence after(const ColorSequence& first) const;
  std::string to_string() const;

  bool operator==(const ColorSequence&) const = default;
};

struct CorrelationResult {
  double r = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
  std::string condition = "raw";  // raw | transformed
  ColorSequence permutation;
  std::optional<double> resampling_p;
};

/// Pearson r with a two-tailed p from the t transform with n-2 degrees of
/// freedom. Requires n >= 3 and nonzero variance in both inputs.
CorrelationResult pearson(std::span<const double> x, std::span<const double> y);

/// Two-tailed permutation p-value: share of `rounds` shuffles of y with
/// |r| >= |r_observed|, with the usual +1 correction.
double resampling_p_value(std::span<const double> x, std::span<const double> y, std::size_t rounds,
                          std::uint64_t seed);

SimilarityMatrix permute_colors(const SimilarityMatrix& m, const ColorSequence& s);
DecisionTable permute_colors(const DecisionTable& t, const ColorSequence& s);

/// Stimulus-major, color-minor flattening.
std::vector<double> flatten(const DecisionTable& t);
std::vector<double> flatten(const SimilarityMatrix& m);

enum class ModelValues {
  kProbabilities,  // normalize similarity rows into decision probabilities first
  kSimilarities,   // correlate the similarity entries directly
};

/// Correlate human decision probabilities with the model table after applying
/// `s` to the model's color columns. Ids must match in order.
CorrelationResult correlation_experiment(const DecisionTable& human, const SimilarityMatrix& model,
                                         const ColorSequence& s = ColorSequence::identity(),
                                         ModelValues values = ModelValues::kProbabilities);

/// Held-out predictions (from cross_validate) arranged as a similarity table.
SimilarityMatrix held_out_matrix(const PairDataset& data, const CrossValidation& cv);

struct TransformedCorrelation {
  std::vector<double> pooled_r;  // one per trial
  double mean_r = 0.0;
  double std_r = 0.0;
  CorrelationResult first;                  // trial 0, pooled
  std::vector<double> per_fold_r;           // trial 0; NaN where undefined
  std::vector<CorrelationResult> controls;  // trial 0 predictions, per sequence
  CrossValidation cv;                       // trial 0
};

/// Pooled held-out R of the transformed model over `trials` runs (trial t
/// uses seed cfg.seed + 1000 t). Held-out similarities are correlated with the
/// pair targets without renormalization; each control sequence relabels the
/// trial-0 prediction columns.
TransformedCorrelation transformed_correlation(const PairDataset& data, const TrainConfig& cfg,
                                               std::size_t trials, std::size_t folds,
                                               std::span<const ColorSequence> controls = {});

/// Relabels the color features by `s`, retrains with cross-validation and
/// correlates the held-out similarities with the unchanged targets.
CorrelationResult retrained_permutation_control(const PairDataset& data, const TrainConfig& cfg,
                                                const ColorSequence& s, std::size_t folds = 5);

struct SweepPoint {
  std::string label;
  bool defined = true;  // false for k = 0
  std::vector<double> values;  // per trial
  double mean = 0.0;
  double stddev = 0.0;
};

struct SweepResult {
  std::string axis;    // "k" or "layer"
  std::string metric;  // "pooled_r" or "accuracy_vs_human" / "accuracy_vs_actual"
  std::vector<SweepPoint> points;

  /// Index of the defined point with the largest mean, or npos.
  std::size_t argmax() const;
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

std::vector<std::size_t> default_k_grid();  // 25, 50, ..., 175

/// Pooled held-out R per k, averaged over trials; trial t uses
/// cfg.seed + 1000 t at every k.
SweepResult sweep_output_features(const PairDataset& data, const TrainConfig& cfg,
                                  std::span<const std::size_t> k_list, std::size_t trials = 1,
                                  std::size_t folds = 5);

struct LayerInput {
  std::string layer_name;
  ClassificationInputs inputs;
};

/// Transformed-similarity classification accuracy per layer.
SweepResult sweep_layers(std::span<const LayerInput> layers, const ClassificationConfig& cfg,
                         bool against_actual = false);

void write_sweep_csv(const std::filesystem::path& path, const SweepResult& sweep);

}  // namespace emocolor
