#include "emocolor/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "emocolor/decision.hpp"
#include "emocolor/onnx_graph.hpp"
#include "emocolor/random.hpp"

namespace emocolor::synthetic {

namespace {

double column_dot(const Matrix& m, std::size_t a, std::size_t b) {
  double s = 0.0;
  for (std::size_t r = 0; r < m.rows(); ++r) s += m(r, a) * m(r, b);
  return s;
}

// Row vector x (length d) projected onto H (d x k): H^T x.
std::vector<double> project(const Matrix& h, std::span<const double> x) {
  std::vector<double> out(h.cols(), 0.0);
  for (std::size_t i = 0; i < h.rows(); ++i) {
    for (std::size_t j = 0; j < h.cols(); ++j) out[j] += x[i] * h(i, j);
  }
  return out;
}

std::string padded(const char* prefix, std::size_t i, int width = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, i);
  return buf;
}

}  // namespace

Matrix random_orthonormal(std::size_t rows, std::size_t cols, Rng& rng) {
  if (cols > rows) fail(ErrorKind::kInvalidArgument, "orthonormal columns exceed dimension");
  Matrix q(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) q(r, c) = rng.normal();
  }
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t p = 0; p < c; ++p) {
      const double proj = column_dot(q, c, p);
      for (std::size_t r = 0; r < rows; ++r) q(r, c) -= proj * q(r, p);
    }
    const double norm = std::sqrt(column_dot(q, c, c));
    if (norm < 1e-12) fail(ErrorKind::kNumerical, "Gram-Schmidt produced a zero column");
    for (std::size_t r = 0; r < rows; ++r) q(r, c) /= norm;
  }
  return q;
}

PlantedTask make_planted_task(const PlantedConfig& cfg) {
  const std::size_t d = cfg.d;
  const std::size_t ks = cfg.k_star;
  if (ks == 0 || ks + 1 > d) fail(ErrorKind::kInvalidArgument, "planted task needs 0 < k* < d");
  if (ks < kNumColors) fail(ErrorKind::kInvalidArgument, "planted task needs k* >= 5");
  Rng rng(cfg.seed);

  const Matrix basis = random_orthonormal(d, ks + 1, rng);
  Matrix h(d, ks);
  std::vector<double> offset_dir(d);
  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t c = 0; c < ks; ++c) h(r, c) = basis(r, c);
    offset_dir[r] = basis(r, ks);
  }
  const Matrix anchors = random_orthonormal(ks, kNumColors, rng);  // k* x 5

  PlantedTask task;
  PairDataset& data = task.data;
  data.color_features = Matrix(kNumColors, d);
  for (std::size_t c = 0; c < kNumColors; ++c) {
    std::vector<double> nuisance(d);
    for (double& v : nuisance) v = cfg.nuisance * rng.normal();
    const auto inside = project(h, nuisance);
    for (std::size_t r = 0; r < d; ++r) {
      double v = nuisance[r] + cfg.offset * offset_dir[r];
      for (std::size_t j = 0; j < ks; ++j) v += h(r, j) * (anchors(j, c) - inside[j]);
      data.color_features(c, r) = v;
    }
  }

  data.stimulus_features = Matrix(cfg.n_stimuli, d);
  for (std::size_t i = 0; i < cfg.n_stimuli; ++i) {
    std::vector<double> z(ks);
    for (double& v : z) v = rng.normal();
    const double scale = cfg.offset * std::abs(1.0 + 0.2 * rng.normal());
    for (std::size_t r = 0; r < d; ++r) {
      double v = cfg.nuisance * rng.normal() + scale * offset_dir[r];
      for (std::size_t j = 0; j < ks; ++j) v += h(r, j) * z[j];
      data.stimulus_features(i, r) = v;
    }
    data.stimulus_ids.push_back(padded("planted_", i));
  }

  for (std::size_t i = 0; i < cfg.n_stimuli; ++i) {
    const auto u = project(h, data.stimulus_features.row(i));
    for (std::size_t c = 0; c < kNumColors; ++c) {
      const auto v = project(h, data.color_features.row(c));
      const double clean = std::max(0.0, cosine(u, v));
      const double t = std::clamp(clean + cfg.noise * rng.normal(), 0.0, 1.0);
      data.pairs.push_back({i, color_from_index(c), t});
    }
  }
  task.hidden = std::move(h);
  data.validate();
  return task;
}

ClassificationInputs make_prototype_task(const PrototypeConfig& cfg) {
  Rng rng(cfg.seed);
  const std::size_t n = cfg.per_class * kNumColors;
  ClassificationInputs in;
  PairDataset& data = in.data;
  data.color_features = Matrix(kNumColors, cfg.d);
  for (double& v : data.color_features.values()) v = rng.normal();

  data.stimulus_features = Matrix(n, cfg.d);
  std::vector<Emotion> actual;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t cls = i % kNumColors;
    for (std::size_t r = 0; r < cfg.d; ++r) {
      data.stimulus_features(i, r) = data.color_features(cls, r) + cfg.spread * rng.normal();
    }
    data.stimulus_ids.push_back(padded("proto_", i));
    actual.push_back(emotion_from_index(cls));
  }

  for (std::size_t i = 0; i < n; ++i) {
    ColorRow logits{};
    for (std::size_t c = 0; c < kNumColors; ++c) {
      logits[c] = cosine(data.stimulus_features.row(i), data.color_features.row(c)) / cfg.temperature;
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    ColorRow p{};
    double sum = 0.0;
    for (std::size_t c = 0; c < kNumColors; ++c) sum += p[c] = std::exp(logits[c] - mx);
    ResponseHistogram h;
    h.image_id = data.stimulus_ids[i];
    for (std::size_t v = 0; v < cfg.participants; ++v) {
      double u = rng.uniform() * sum;
      std::size_t c = 0;
      while (c + 1 < kNumColors && u >= p[c]) u -= p[c++];
      h.counts[c] += 1;
      h.total += 1;
    }
    const ColorRow probs = to_probabilities(h);
    for (std::size_t c = 0; c < kNumColors; ++c) {
      data.pairs.push_back({i, color_from_index(c), probs[c]});
    }
    in.human_labels.push_back(emotion_for_color(majority_label(h).color));
  }
  in.actual_labels = std::move(actual);
  data.validate();
  return in;
}

StimulusSet make_stimulus_images(const ImageSetConfig& cfg) {
  constexpr int kCells = 4;
  if (cfg.size < kCells) fail(ErrorKind::kInvalidArgument, "synthetic images need size >= 4");
  // Class templates are fixed so that every seed draws from the same classes.
  Rng templates(0x5eedf00dULL);
  std::array<std::array<double, kCells * kCells>, kNumColors> level{};
  for (auto& t : level) {
    for (double& v : t) v = templates.uniform(30.0, 225.0);
  }
  Rng rng(cfg.seed);
  std::vector<StimulusEntry> entries;
  const int cell = (cfg.size + kCells - 1) / kCells;
  for (std::size_t i = 0; i < cfg.per_class * kNumColors; ++i) {
    const std::size_t cls = i % kNumColors;
    std::array<double, kCells * kCells> jitter{};
    for (double& j : jitter) j = 25.0 * rng.normal();
    RgbImage img(cfg.size, cfg.size);
    for (int y = 0; y < cfg.size; ++y) {
      for (int x = 0; x < cfg.size; ++x) {
        const int c = (y / cell) * kCells + (x / cell);
        const double v = level[cls][c] + jitter[c] + 8.0 * rng.normal();
        const auto g = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        img.set(x, y, {g, g, g});
      }
    }
    StimulusEntry e;
    e.image_id = padded("img_", i);
    e.file = e.image_id + ".png";
    e.image = std::move(img);
    e.true_emotion = emotion_from_index(cls);
    entries.push_back(std::move(e));
  }
  return StimulusSet(std::move(entries));
}

std::vector<TrialRecord> simulate_participants(const StimulusSet& stimuli,
                                               const ParticipantConfig& cfg) {
  Rng rng(cfg.seed);
  std::vector<TrialRecord> out;
  std::int64_t clock = cfg.start_time_ms;
  for (std::size_t p = 0; p < cfg.participants; ++p) {
    const std::string session = padded("sim-session-", p, 4);
    const std::string participant = padded("P", p, 3);
    std::vector<std::size_t> order = rng.permutation(stimuli.size());
    for (std::size_t idx : order) {
      const StimulusEntry& e = stimuli.entries()[idx];
      TrialRecord t;
      t.session_id = session;
      t.participant_id = participant;
      t.image_id = e.image_id;
      if (e.true_emotion && rng.uniform() < cfg.association) {
        t.chosen = color_for_emotion(*e.true_emotion);
      } else if (e.true_emotion) {
        // One of the four other colors.
        std::size_t c = rng.below(kNumColors - 1);
        if (c >= index_of(color_for_emotion(*e.true_emotion))) ++c;
        t.chosen = color_from_index(c);
      } else {
        t.chosen = color_from_index(rng.below(kNumColors));
      }
      rng.shuffle(std::span<Color>(t.presented_order));
      t.response_time = std::round(800.0 + 1500.0 * rng.uniform());
      clock += static_cast<std::int64_t>(t.response_time) + 500;
      t.timestamp = clock;
      out.push_back(t);
    }
  }
  return out;
}

ModelSpec write_identity_fixture(const std::filesystem::path& graph_path) {
  using onnx::GraphBuilder;
  GraphBuilder b("identity_fixture");
  b.input("input", {1, 3, 2, 2});
  b.node("Flatten", {"input"}, {"flat"}, {{"axis", std::int64_t{1}}});
  b.output("flat");
  if (graph_path.has_parent_path()) std::filesystem::create_directories(graph_path.parent_path());
  b.save(graph_path);
  ModelSpec spec;
  spec.graph_path = graph_path;
  spec.model_id = "identity-fixture";
  spec.layer_name = "flat";
  spec.input_size = 2;
  spec.save_sidecar();
  return spec;
}

ModelSpec write_pooling_fixture(const std::filesystem::path& graph_path, const std::string& layer) {
  using onnx::GraphBuilder;
  using onnx::Tensor;
  constexpr std::int64_t kGrid = 48;
  constexpr std::int64_t kHidden = 16;
  Rng rng(0xf1c7u);
  std::vector<float> fc_w(kGrid * kHidden);
  for (float& w : fc_w) w = static_cast<float>(rng.normal() / std::sqrt(double(kGrid)));
  std::vector<float> fc_b(kHidden);
  for (float& v : fc_b) v = static_cast<float>(0.1 * rng.normal());

  GraphBuilder b("pooling_fixture");
  b.input("input", {1, 3, 32, 32});
  b.initializer("fc.weight", Tensor::floats({kGrid, kHidden}, fc_w));
  b.initializer("fc.bias", Tensor::floats({kHidden}, fc_b));
  b.initializer("zeros", Tensor::floats({kGrid}, std::vector<float>(kGrid, 0.0f)));
  b.initializer("ones", Tensor::floats({kGrid}, std::vector<float>(kGrid, 1.0f)));
  b.node("AveragePool", {"input"}, {"pool"},
         {{"kernel_shape", std::vector<std::int64_t>{8, 8}},
          {"strides", std::vector<std::int64_t>{8, 8}}});
  b.node("Flatten", {"pool"}, {"grid"}, {{"axis", std::int64_t{1}}});
  b.node("GlobalAveragePool", {"input"}, {"gap"});
  b.node("Flatten", {"gap"}, {"global"}, {{"axis", std::int64_t{1}}});
  b.node("Gemm", {"grid", "fc.weight", "fc.bias"}, {"fc_pre"});
  b.node("Relu", {"fc_pre"}, {"fc"});
  b.node("Mul", {"grid", "zeros"}, {"zeroed"});
  b.node("Add", {"zeroed", "ones"}, {"constant"});
  b.output("fc");
  b.output("global");
  b.output("constant");
  if (graph_path.has_parent_path()) std::filesystem::create_directories(graph_path.parent_path());
  b.save(graph_path);

  ModelSpec spec;
  spec.graph_path = graph_path;
  spec.model_id = "pooling-fixture";
  spec.layer_name = layer;
  spec.input_size = 32;
  spec.mean = {127.5f, 127.5f, 127.5f};
  spec.scale = {1.0f / 127.5f, 1.0f / 127.5f, 1.0f / 127.5f};
  spec.save_sidecar();
  return spec;
}

}  // namespace emocolor::synthetic
