#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "emocolor/decision.hpp"
#include "emocolor/stimuli.hpp"

namespace emocolor {

/// One forced-choice response. JSON field names match the member names.
struct TrialRecord {
  std::string session_id;
  std::string participant_id;
  std::string image_id;
  Color chosen = Color::kRed;
  std::array<Color, kNumColors> presented_order = kAllColors;  // swatch screen positions
  std::int64_t timestamp = 0;                                  // UTC milliseconds
  double response_time = 0.0;                                  // milliseconds

  bool operator==(const TrialRecord&) const = default;
};

/// One JSON object, no trailing newline. Colors are written by name.
std::string to_json_line(const TrialRecord& t);
/// Accepts color names or indices. Throws Error(kFormat) naming the bad field.
TrialRecord parse_trial(const std::string& json_text);

std::vector<TrialRecord> read_trials_jsonl(const std::filesystem::path& path);
std::vector<TrialRecord> read_trials_jsonl(std::istream& in, const std::string& source);
void write_trials_jsonl(const std::filesystem::path& path, std::span<const TrialRecord> trials);

struct ResponseHistogram {
  std::string image_id;
  std::array<std::size_t, kNumColors> counts{};
  std::size_t total = 0;

  static constexpr std::size_t kLowDataThreshold = 10;
  bool low_data() const { return total < kLowDataThreshold; }
};

struct AggregateResult {
  std::vector<ResponseHistogram> histograms;
  std::vector<TrialRecord> duplicates;  // later responses of a (participant, image) pair
};

/// Histograms in `known_ids` order when given (images without responses are
/// omitted), otherwise sorted by id. For each (participant, image) only the
/// earliest response counts. Unknown image ids throw when `known_ids` is given.
AggregateResult aggregate(std::span<const TrialRecord> trials,
                          std::optional<std::span<const std::string>> known_ids = std::nullopt);

ColorRow to_probabilities(const ResponseHistogram& h);

struct MajorityLabel {
  Color color = Color::kRed;
  bool tie = false;
};

MajorityLabel majority_label(const ResponseHistogram& h);

DecisionTable to_decision_table(std::span<const ResponseHistogram> histograms);

/// CSV `image_id,red,green,blue,black,yellow,total`.
void write_histogram_csv(const std::filesystem::path& path,
                         std::span<const ResponseHistogram> histograms);
std::vector<ResponseHistogram> read_histogram_csv(const std::filesystem::path& path);

struct TrialFilter {
  std::optional<double> min_response_time;
  std::optional<double> max_response_time;
  std::set<std::string> exclude_sessions;
  /// Drop sessions that did not answer this many distinct images.
  std::optional<std::size_t> complete_session_size;
};

std::vector<TrialRecord> filter_trials(std::span<const TrialRecord> trials, const TrialFilter& f);

}  // namespace emocolor
