#include "emocolor/features.hpp"

#include <cmath>
#include <cstring>
#include <exception>
#include <fstream>

#include <nlohmann/json.hpp>

#include "emocolor/error.hpp"

namespace emocolor {

namespace {

std::string ends_trimmed(const std::string& s, const std::string& suffix) {
  if (s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0) {
    return s.substr(0, s.size() - suffix.size());
  }
  return s;
}

}  // namespace

std::filesystem::path ModelSpec::sidecar_path(const std::filesystem::path& graph_path) {
  return std::filesystem::path(graph_path.string() + ".meta.json");
}

ModelSpec ModelSpec::load(const std::filesystem::path& graph_path) {
  auto meta = sidecar_path(graph_path);
  if (!std::filesystem::exists(meta)) {
    auto alt = graph_path;
    alt.replace_extension(".meta.json");
    if (std::filesystem::exists(alt)) meta = alt;
  }
  std::ifstream in(meta);
  if (!in) fail(ErrorKind::kNotFound, "model sidecar not found: " + meta.string());
  nlohmann::json doc;
  try {
    in >> doc;
    ModelSpec spec;
    spec.graph_path = graph_path;
    spec.model_id = doc.at("model_id").get<std::string>();
    spec.layer_name = doc.at("layer_name").get<std::string>();
    spec.input_size = doc.value("input_size", kModelInputSize);
    spec.input_name = doc.value("input_name", std::string{});
    const auto order = doc.value("channel_order", std::string("rgb"));
    if (order != "rgb" && order != "bgr") fail(ErrorKind::kFormat, "channel_order must be rgb or bgr");
    spec.channel_order = order == "bgr" ? ChannelOrder::kBgr : ChannelOrder::kRgb;
    const auto layout = doc.value("layout", std::string("nchw"));
    if (layout != "nchw" && layout != "nhwc") fail(ErrorKind::kFormat, "layout must be nchw or nhwc");
    spec.layout = layout == "nhwc" ? TensorLayout::kNhwc : TensorLayout::kNchw;
    if (doc.contains("mean")) spec.mean = doc["mean"].get<std::array<float, 3>>();
    if (doc.contains("scale")) spec.scale = doc["scale"].get<std::array<float, 3>>();
    spec.validate();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, "model sidecar " + meta.string() + ": " + e.what());
  }
}

void ModelSpec::save_sidecar() const {
  nlohmann::json doc = {
      {"model_id", model_id},
      {"layer_name", layer_name},
      {"input_size", input_size},
      {"channel_order", channel_order == ChannelOrder::kBgr ? "bgr" : "rgb"},
      {"layout", layout == TensorLayout::kNhwc ? "nhwc" : "nchw"},
      {"mean", mean},
      {"scale", scale},
  };
  if (!input_name.empty()) doc["input_name"] = input_name;
  std::ofstream out(sidecar_path(graph_path));
  if (!out) fail(ErrorKind::kIo, "cannot write sidecar for " + graph_path.string());
  out << doc.dump(2) << '\n';
}

void ModelSpec::validate() const {
  if (input_size <= 0) fail(ErrorKind::kInvalidArgument, "input_size must be positive");
  if (layer_name.empty()) fail(ErrorKind::kInvalidArgument, "layer_name is empty");
  for (float s : scale) {
    if (!std::isfinite(s)) fail(ErrorKind::kInvalidArgument, "non-finite preprocessing scale");
  }
}

onnx::Tensor preprocess(const RgbImage& img, const ModelSpec& spec) {
  if (img.width != spec.input_size || img.height != spec.input_size || !img.valid()) {
    fail(ErrorKind::kInvalidArgument,
         "preprocess: image is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
             ", model expects " + std::to_string(spec.input_size) + "x" +
             std::to_string(spec.input_size));
  }
  const auto h = static_cast<std::size_t>(img.height);
  const auto w = static_cast<std::size_t>(img.width);
  std::vector<float> data(3 * h * w);
  const bool bgr = spec.channel_order == ChannelOrder::kBgr;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t src = (y * w + x) * 3;
      for (std::size_t c = 0; c < 3; ++c) {
        const float v = img.data[src + (bgr ? 2 - c : c)];
        const float out = (v - spec.mean[c]) * spec.scale[c];
        if (spec.layout == TensorLayout::kNchw) {
          data[(c * h + y) * w + x] = out;
        } else {
          data[(y * w + x) * 3 + c] = out;
        }
      }
    }
  }
  const auto hi = static_cast<std::int64_t>(h);
  const auto wi = static_cast<std::int64_t>(w);
  if (spec.layout == TensorLayout::kNchw) return onnx::Tensor::floats({1, 3, hi, wi}, std::move(data));
  return onnx::Tensor::floats({1, hi, wi, 3}, std::move(data));
}

FeatureExtractor::FeatureExtractor(ModelSpec spec)
    : FeatureExtractor(spec, onnx::Graph::load(spec.graph_path)) {}

FeatureExtractor::FeatureExtractor(ModelSpec spec, onnx::Graph graph)
    : spec_(std::move(spec)), graph_(std::move(graph)) {
  spec_.validate();
  if (graph_.inputs().empty()) fail(ErrorKind::kFormat, "graph has no inputs");
  input_name_ = spec_.input_name.empty() ? graph_.inputs().front().name : spec_.input_name;
  if (!graph_.has_value(spec_.layer_name)) {
    fail(ErrorKind::kNotFound, "unknown layer '" + spec_.layer_name + "' in " +
                                   spec_.graph_path.string());
  }
}

FeatureVector FeatureExtractor::extract(const RgbImage& img, const std::string& source_id) const {
  const RgbImage sized = (img.width == spec_.input_size && img.height == spec_.input_size)
                             ? img
                             : resize_bilinear(img, spec_.input_size, spec_.input_size);
  const auto outputs = graph_.run({{input_name_, preprocess(sized, spec_)}}, {spec_.layer_name});
  const onnx::Tensor& t = outputs.at(spec_.layer_name);
  FeatureVector fv;
  fv.model_id = spec_.model_id;
  fv.layer_name = spec_.layer_name;
  fv.source_id = source_id;
  if (t.is_float()) {
    fv.values = t.f;
  } else {
    fv.values.assign(t.i.begin(), t.i.end());
  }
  for (float v : fv.values) {
    if (!std::isfinite(v)) {
      fail(ErrorKind::kNumerical, "non-finite activation in " + spec_.layer_name + " for " + source_id);
    }
  }
  if (fv.values.empty()) fail(ErrorKind::kNumerical, "empty activation for " + source_id);
  return fv;
}

std::vector<FeatureVector> FeatureExtractor::extract_batch(const StimulusSet& images) const {
  const auto& entries = images.entries();
  std::vector<FeatureVector> out(entries.size());
  std::vector<std::exception_ptr> errors(entries.size());
  const auto n = static_cast<std::int64_t>(entries.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    try {
      out[idx] = extract(entries[idx].image, entries[idx].image_id);
    } catch (...) {
      errors[idx] = std::current_exception();
    }
  }
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const Error& e) {
      throw Error(e.kind(), "extracting " + entries[i].image_id + ": " + e.what());
    } catch (const std::exception& e) {
      throw Error(ErrorKind::kNumerical, "extracting " + entries[i].image_id + ": " + e.what());
    }
  }
  return out;
}

std::filesystem::path FeatureStore::prefix_of(const std::filesystem::path& path) {
  std::string s = path.string();
  s = ends_trimmed(s, ".features.json");
  s = ends_trimmed(s, ".features.bin");
  return s;
}

void FeatureStore::save(const std::filesystem::path& prefix, std::span<const FeatureVector> vectors) {
  const auto base = prefix_of(prefix);
  if (base.has_parent_path()) std::filesystem::create_directories(base.parent_path());
  nlohmann::json ids = nlohmann::json::array();
  std::size_t dim = vectors.empty() ? 0 : vectors.front().dim();
  std::string model_id = vectors.empty() ? "" : vectors.front().model_id;
  std::string layer = vectors.empty() ? "" : vectors.front().layer_name;
  std::ofstream bin(base.string() + ".features.bin", std::ios::binary);
  if (!bin) fail(ErrorKind::kIo, "cannot write " + base.string() + ".features.bin");
  for (const auto& v : vectors) {
    if (v.dim() != dim) fail(ErrorKind::kInvalidArgument, "feature store rows differ in dim");
    ids.push_back(v.source_id);
    bin.write(reinterpret_cast<const char*>(v.values.data()),
              static_cast<std::streamsize>(v.values.size() * sizeof(float)));
  }
  std::ofstream meta(base.string() + ".features.json");
  if (!meta) fail(ErrorKind::kIo, "cannot write " + base.string() + ".features.json");
  meta << nlohmann::json{{"model_id", model_id}, {"layer_name", layer}, {"dim", dim}, {"ids", ids}}
              .dump(2)
       << '\n';
}

std::vector<FeatureVector> FeatureStore::load(const std::filesystem::path& path) {
  const auto base = prefix_of(path);
  std::ifstream meta(base.string() + ".features.json");
  if (!meta) fail(ErrorKind::kNotFound, "feature manifest not found: " + base.string() + ".features.json");
  nlohmann::json doc;
  try {
    meta >> doc;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("feature manifest: ") + e.what());
  }
  const auto dim = doc.at("dim").get<std::size_t>();
  const auto ids = doc.at("ids").get<std::vector<std::string>>();
  std::ifstream bin(base.string() + ".features.bin", std::ios::binary);
  if (!bin) fail(ErrorKind::kNotFound, "feature data not found: " + base.string() + ".features.bin");
  std::vector<FeatureVector> out;
  for (const auto& id : ids) {
    FeatureVector v;
    v.model_id = doc.value("model_id", "");
    v.layer_name = doc.value("layer_name", "");
    v.source_id = id;
    v.values.resize(dim);
    bin.read(reinterpret_cast<char*>(v.values.data()), static_cast<std::streamsize>(dim * sizeof(float)));
    if (!bin) fail(ErrorKind::kFormat, "feature data shorter than manifest: " + base.string());
    out.push_back(std::move(v));
  }
  return out;
}

Matrix to_matrix(std::span<const FeatureVector> vectors) {
  if (vectors.empty()) return {};
  const std::size_t dim = vectors.front().dim();
  Matrix m(vectors.size(), dim);
  for (std::size_t r = 0; r < vectors.size(); ++r) {
    if (vectors[r].dim() != dim) {
      fail(ErrorKind::kInvalidArgument, "feature dims differ: " + vectors[r].source_id);
    }
    for (std::size_t c = 0; c < dim; ++c) m(r, c) = vectors[r].values[c];
  }
  return m;
}

}  // namespace emocolor
