#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "emocolor/features.hpp"
#include "emocolor/matrix.hpp"
#include "emocolor/stimuli.hpp"

namespace emocolor {

using ColorRow = std::array<double, kNumColors>;

/// Stimuli x 5 colors table of cosine similarities.
struct SimilarityMatrix {
  Matrix values;  // n_stimuli x kNumColors
  std::vector<std::string> stimulus_ids;
  std::string model_id;
  std::string layer_name;
  bool transformed = false;

  std::size_t rows() const { return values.rows(); }
  ColorRow row(std::size_t i) const;
};

/// Per-stimulus 5-way probabilities (human histograms or model decisions).
struct DecisionTable {
  std::vector<std::string> stimulus_ids;
  std::vector<ColorRow> rows;

  std::size_t size() const { return rows.size(); }
  /// Index of `id`, or npos.
  std::size_t find(const std::string& id) const;
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

double cosine(std::span<const double> a, std::span<const double> b);
double cosine(const FeatureVector& a, const FeatureVector& b);

/// entry (i, j) = cosine(stimulus_i, color_j). color_features must hold the
/// five colors in color index order.
SimilarityMatrix similarity_matrix(std::span<const FeatureVector> stimulus_features,
                                   std::span<const FeatureVector> color_features);

struct DecisionRow {
  ColorRow probs{};
  bool clamped = false;     // at least one negative score was set to 0
  bool degenerate = false;  // nothing positive left; uniform returned
};

/// Negative scores clamp to 0, then the row is normalized to sum 1; an
/// all-zero row maps to uniform.
DecisionRow decision_probabilities(const ColorRow& scores);

struct DecisionSummary {
  DecisionTable table;
  std::size_t clamped_rows = 0;
  std::size_t degenerate_rows = 0;
};

DecisionSummary decision_table(const SimilarityMatrix& sims);

/// CSV with header `<id_header>,red,green,blue,black,yellow`.
void write_color_table_csv(const std::filesystem::path& path, const std::string& id_header,
                           const std::vector<std::string>& ids, const std::vector<ColorRow>& rows);
DecisionTable read_color_table_csv(const std::filesystem::path& path);

void write_similarity_csv(const std::filesystem::path& path, const SimilarityMatrix& sims);
SimilarityMatrix read_similarity_csv(const std::filesystem::path& path);

}  // namespace emocolor
