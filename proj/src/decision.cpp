#include "emocolor/decision.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "emocolor/error.hpp"
#include "emocolor/kernels.hpp"

namespace emocolor {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

ColorRow SimilarityMatrix::row(std::size_t i) const {
  ColorRow r{};
  for (std::size_t j = 0; j < kNumColors; ++j) r[j] = values(i, j);
  return r;
}

std::size_t DecisionTable::find(const std::string& id) const {
  for (std::size_t i = 0; i < stimulus_ids.size(); ++i) {
    if (stimulus_ids[i] == id) return i;
  }
  return npos;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    fail(ErrorKind::kInvalidArgument, "cosine: dims differ (" + std::to_string(a.size()) + " vs " +
                                          std::to_string(b.size()) + ")");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) fail(ErrorKind::kDegenerate, "cosine of a zero vector is undefined");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double cosine(const FeatureVector& a, const FeatureVector& b) {
  const std::vector<double> x(a.values.begin(), a.values.end());
  const std::vector<double> y(b.values.begin(), b.values.end());
  return cosine(x, y);
}

SimilarityMatrix similarity_matrix(std::span<const FeatureVector> stimulus_features,
                                   std::span<const FeatureVector> color_features) {
  if (color_features.size() != kNumColors) {
    fail(ErrorKind::kInvalidArgument, "expected 5 color feature vectors, got " +
                                          std::to_string(color_features.size()));
  }
  for (std::size_t j = 0; j < kNumColors; ++j) {
    const auto& id = color_features[j].source_id;
    if (!id.empty() && parse_color(id) && index_of(*parse_color(id)) != j) {
      fail(ErrorKind::kInvalidArgument, "color features are not in color index order");
    }
  }
  const Matrix stim = to_matrix(stimulus_features);
  const Matrix colors = to_matrix(color_features);
  if (!stim.empty() && stim.cols() != colors.cols()) {
    fail(ErrorKind::kInvalidArgument, "stimulus and color feature dims differ");
  }
  auto check_nonzero = [](const Matrix& m, std::span<const FeatureVector> src) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
      bool any = false;
      for (double v : m.row(r)) any = any || v != 0.0;
      if (!any) fail(ErrorKind::kDegenerate, "zero feature vector: " + src[r].source_id);
    }
  };
  check_nonzero(stim, stimulus_features);
  check_nonzero(colors, color_features);

  SimilarityMatrix out;
  out.values = stim.empty() ? Matrix(0, kNumColors) : kernels::cosine_matrix(stim, colors);
  for (const auto& f : stimulus_features) out.stimulus_ids.push_back(f.source_id);
  out.model_id = color_features.front().model_id;
  out.layer_name = color_features.front().layer_name;
  return out;
}

DecisionRow decision_probabilities(const ColorRow& scores) {
  DecisionRow out;
  double sum = 0.0;
  for (std::size_t j = 0; j < kNumColors; ++j) {
    if (!std::isfinite(scores[j])) fail(ErrorKind::kNumerical, "non-finite similarity score");
    out.probs[j] = scores[j] < 0.0 ? 0.0 : scores[j];
    out.clamped = out.clamped || scores[j] < 0.0;
    sum += out.probs[j];
  }
  if (sum <= 0.0) {
    out.probs.fill(1.0 / static_cast<double>(kNumColors));
    out.degenerate = true;
    return out;
  }
  for (double& p : out.probs) p /= sum;
  return out;
}

DecisionSummary decision_table(const SimilarityMatrix& sims) {
  DecisionSummary s;
  s.table.stimulus_ids = sims.stimulus_ids;
  for (std::size_t i = 0; i < sims.rows(); ++i) {
    const DecisionRow r = decision_probabilities(sims.row(i));
    s.table.rows.push_back(r.probs);
    s.clamped_rows += r.clamped ? 1 : 0;
    s.degenerate_rows += r.degenerate ? 1 : 0;
  }
  return s;
}

void write_color_table_csv(const std::filesystem::path& path, const std::string& id_header,
                           const std::vector<std::string>& ids, const std::vector<ColorRow>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << id_header;
  for (Color c : kAllColors) out << ',' << name_of(c);
  out << '\n';
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out << ids[i];
    for (double v : rows[i]) out << ',' << format_double(v);
    out << '\n';
  }
}

DecisionTable read_color_table_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kNotFound, "table not found: " + path.string());
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::kFormat, "empty CSV: " + path.string());
  const auto header = split_csv(line);
  if (header.size() < 1 + kNumColors) fail(ErrorKind::kFormat, "CSV header too short: " + path.string());
  for (std::size_t j = 0; j < kNumColors; ++j) {
    if (header[1 + j] != name_of(color_from_index(j))) {
      fail(ErrorKind::kFormat, "CSV columns must be red,green,blue,black,yellow: " + path.string());
    }
  }
  DecisionTable table;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() < 1 + kNumColors) {
      fail(ErrorKind::kFormat, path.string() + ":" + std::to_string(line_no) + ": too few fields");
    }
    ColorRow row{};
    for (std::size_t j = 0; j < kNumColors; ++j) {
      try {
        row[j] = std::stod(fields[1 + j]);
      } catch (const std::exception&) {
        fail(ErrorKind::kFormat, path.string() + ":" + std::to_string(line_no) + ": bad number");
      }
    }
    table.stimulus_ids.push_back(fields[0]);
    table.rows.push_back(row);
  }
  return table;
}

void write_similarity_csv(const std::filesystem::path& path, const SimilarityMatrix& sims) {
  std::vector<ColorRow> rows;
  for (std::size_t i = 0; i < sims.rows(); ++i) rows.push_back(sims.row(i));
  write_color_table_csv(path, "stimulus_id", sims.stimulus_ids, rows);
}

SimilarityMatrix read_similarity_csv(const std::filesystem::path& path) {
  const DecisionTable t = read_color_table_csv(path);
  SimilarityMatrix s;
  s.stimulus_ids = t.stimulus_ids;
  s.values = Matrix(t.size(), kNumColors);
  for (std::size_t i = 0; i < t.size(); ++i) {
    for (std::size_t j = 0; j < kNumColors; ++j) s.values(i, j) = t.rows[i][j];
  }
  return s;
}

}  // namespace emocolor
