#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "emocolor/classifier.hpp"
#include "emocolor/features.hpp"
#include "emocolor/human_data.hpp"
#include "emocolor/matrix.hpp"
#include "emocolor/random.hpp"
#include "emocolor/stimuli.hpp"
#include "emocolor/transform.hpp"

// Generators for desk-scale experiments where the ground truth is known.

namespace emocolor::synthetic {

/// rows x cols matrix with orthonormal columns (modified Gram-Schmidt on
/// Gaussian columns).
Matrix random_orthonormal(std::size_t rows, std::size_t cols, Rng& rng);

struct PlantedConfig {
  std::size_t d = 32;
  std::size_t k_star = 8;
  std::size_t n_stimuli = 50;
  double noise = 0.02;     // target noise sd
  double nuisance = 0.3;   // feature noise outside the hidden map
  double offset = 3.0;     // shared positive offset, as in post-relu features
  std::uint64_t seed = 0;
};

/// Targets come from a hidden orthonormal map H (d x k*):
///   t = clip(relu(cos(H^T s, H^T c)) + noise, 0, 1).
/// Color anchors are orthonormal in the hidden space; raw features carry a
/// shared offset direction orthogonal to H, so raw cosine is a weak predictor.
struct PlantedTask {
  PairDataset data;
  Matrix hidden;
};

PlantedTask make_planted_task(const PlantedConfig& cfg);

struct PrototypeConfig {
  std::size_t per_class = 10;
  std::size_t d = 64;
  double spread = 1.0;  // stimulus noise sd around its class prototype
  std::size_t participants = 56;
  double temperature = 0.1;  // participants choose softmax(cos / temperature)
  std::uint64_t seed = 0;
};

/// Five-class task: color features are class prototypes, stimulus features
/// are prototype + noise, human histograms come from simulated participants.
ClassificationInputs make_prototype_task(const PrototypeConfig& cfg);

struct ImageSetConfig {
  std::size_t per_class = 10;
  int size = 64;
  std::uint64_t seed = 0;
};

/// Grayscale images whose brightness layout depends on the emotion class.
StimulusSet make_stimulus_images(const ImageSetConfig& cfg);

struct ParticipantConfig {
  std::size_t participants = 56;
  double association = 0.5;  // probability of the class's associated color
  std::uint64_t seed = 0;
  std::int64_t start_time_ms = 1'700'000'000'000;
};

/// One session per participant, one response per stimulus. Stimuli without a
/// true emotion get uniform choices.
std::vector<TrialRecord> simulate_participants(const StimulusSet& stimuli,
                                               const ParticipantConfig& cfg);

/// Graph whose `flat` output is the flattened input (input_size 2, raw pixel
/// values). Writes the graph and its sidecar.
ModelSpec write_identity_fixture(const std::filesystem::path& graph_path);

/// Small pooling network (input_size 32) exporting `grid` (8x8 average pool,
/// 48 values), `global` (channel means), `fc` (fixed dense + relu, 16) and
/// `constant` (input-independent ones, 48). Writes the graph and its sidecar.
ModelSpec write_pooling_fixture(const std::filesystem::path& graph_path,
                                const std::string& layer = "grid");

}  // namespace emocolor::synthetic
