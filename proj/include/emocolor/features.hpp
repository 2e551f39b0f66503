#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emocolor/matrix.hpp"
#include "emocolor/onnx_graph.hpp"
#include "emocolor/stimuli.hpp"

namespace emocolor {

enum class ChannelOrder { kRgb, kBgr };
enum class TensorLayout { kNchw, kNhwc };

/// Which graph to run, which tensor to read, and how to feed images in.
/// Loaded from the `<graph>.meta.json` sidecar.
struct ModelSpec {
  std::filesystem::path graph_path;
  std::string model_id;
  std::string layer_name;
  std::string input_name;  // empty: the graph's first non-initializer input
  int input_size = kModelInputSize;
  ChannelOrder channel_order = ChannelOrder::kRgb;
  TensorLayout layout = TensorLayout::kNchw;
  std::array<float, 3> mean = {0.0f, 0.0f, 0.0f};
  std::array<float, 3> scale = {1.0f, 1.0f, 1.0f};

  /// Reads `<graph_path>.meta.json` (falling back to `<stem>.meta.json`).
  static ModelSpec load(const std::filesystem::path& graph_path);
  static std::filesystem::path sidecar_path(const std::filesystem::path& graph_path);
  void save_sidecar() const;
  void validate() const;
};

struct FeatureVector {
  std::vector<float> values;
  std::string model_id;
  std::string layer_name;
  std::string source_id;

  std::size_t dim() const { return values.size(); }
};

/// Image -> input tensor: channel reorder, then (v - mean[c]) * scale[c].
/// The image must already be input_size x input_size.
onnx::Tensor preprocess(const RgbImage& img, const ModelSpec& spec);

/// A loaded backbone bound to one exported tensor. Immutable after
/// construction; extract() may be called concurrently.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(ModelSpec spec);
  FeatureExtractor(ModelSpec spec, onnx::Graph graph);

  const ModelSpec& spec() const { return spec_; }

  /// Resizes to the model input size when needed, then runs the graph.
  FeatureVector extract(const RgbImage& img, const std::string& source_id) const;

  /// Element-wise extract(); images may run in parallel, order is preserved.
  /// The first failure (by position) is rethrown with its image id.
  std::vector<FeatureVector> extract_batch(const StimulusSet& images) const;

 private:
  ModelSpec spec_;
  onnx::Graph graph_;
  std::string input_name_;
};

/// Feature store: `<prefix>.features.json` + `<prefix>.features.bin`
/// (little-endian float32, one row per id, manifest order).
struct FeatureStore {
  static void save(const std::filesystem::path& prefix, std::span<const FeatureVector> vectors);
  static std::vector<FeatureVector> load(const std::filesystem::path& path);
  /// Accepts a prefix, `*.features.json` or `*.features.bin` path.
  static std::filesystem::path prefix_of(const std::filesystem::path& path);
};

/// Stacks vectors into a rows x dim matrix of doubles. All dims must agree.
Matrix to_matrix(std::span<const FeatureVector> vectors);

}  // namespace emocolor
