#include "emocolor/human_data.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

#include "emocolor/error.hpp"

namespace emocolor {

namespace {

using nlohmann::json;

Color color_field(const json& v, const char* field) {
  if (v.is_string()) {
    if (auto c = parse_color(v.get<std::string>())) return *c;
  } else if (v.is_number_integer()) {
    const auto i = v.get<std::int64_t>();
    if (i >= 0 && i < static_cast<std::int64_t>(kNumColors)) {
      return color_from_index(static_cast<std::size_t>(i));
    }
  }
  fail(ErrorKind::kFormat, std::string("trial field '") + field + "' is not a color: " + v.dump());
}

// Deterministic order for records sharing a timestamp.
bool earlier(const TrialRecord& a, const TrialRecord& b) {
  return std::tie(a.timestamp, a.session_id, a.response_time) <
         std::tie(b.timestamp, b.session_id, b.response_time);
}

}  // namespace

std::string to_json_line(const TrialRecord& t) {
  json order = json::array();
  for (Color c : t.presented_order) order.push_back(std::string(name_of(c)));
  const json j = {{"session_id", t.session_id},
                  {"participant_id", t.participant_id},
                  {"image_id", t.image_id},
                  {"chosen", std::string(name_of(t.chosen))},
                  {"presented_order", order},
                  {"timestamp", t.timestamp},
                  {"response_time", t.response_time}};
  return j.dump();
}

TrialRecord parse_trial(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, std::string("malformed trial JSON: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorKind::kFormat, "trial must be a JSON object");
  auto need = [&](const char* field) -> const json& {
    if (!j.contains(field)) fail(ErrorKind::kFormat, std::string("trial missing '") + field + "'");
    return j.at(field);
  };
  auto need_string = [&](const char* field) {
    const json& v = need(field);
    if (!v.is_string() || v.get<std::string>().empty()) {
      fail(ErrorKind::kFormat, std::string("trial field '") + field + "' must be a nonempty string");
    }
    return v.get<std::string>();
  };
  TrialRecord t;
  t.session_id = need_string("session_id");
  t.participant_id = need_string("participant_id");
  t.image_id = need_string("image_id");
  t.chosen = color_field(need("chosen"), "chosen");

  const json& order = need("presented_order");
  if (!order.is_array() || order.size() != kNumColors) {
    fail(ErrorKind::kFormat, "trial field 'presented_order' must list 5 colors");
  }
  std::array<bool, kNumColors> seen{};
  for (std::size_t i = 0; i < kNumColors; ++i) {
    t.presented_order[i] = color_field(order[i], "presented_order");
    const std::size_t idx = index_of(t.presented_order[i]);
    if (seen[idx]) fail(ErrorKind::kFormat, "trial field 'presented_order' repeats a color");
    seen[idx] = true;
  }

  const json& ts = need("timestamp");
  if (!ts.is_number_integer()) fail(ErrorKind::kFormat, "trial field 'timestamp' must be an integer");
  t.timestamp = ts.get<std::int64_t>();
  const json& rt = need("response_time");
  if (!rt.is_number() || rt.get<double>() < 0.0) {
    fail(ErrorKind::kFormat, "trial field 'response_time' must be a nonnegative number");
  }
  t.response_time = rt.get<double>();
  return t;
}

std::vector<TrialRecord> read_trials_jsonl(std::istream& in, const std::string& source) {
  std::vector<TrialRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_trial(line));
    } catch (const Error& e) {
      fail(e.kind(), source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<TrialRecord> read_trials_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kNotFound, "trial log not found: " + path.string());
  return read_trials_jsonl(in, path.string());
}

void write_trials_jsonl(const std::filesystem::path& path, std::span<const TrialRecord> trials) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  for (const auto& t : trials) out << to_json_line(t) << '\n';
}

AggregateResult aggregate(std::span<const TrialRecord> trials,
                          std::optional<std::span<const std::string>> known_ids) {
  std::unordered_set<std::string> known;
  if (known_ids) known.insert(known_ids->begin(), known_ids->end());

  // Earliest response per (participant, image).
  std::map<std::pair<std::string, std::string>, const TrialRecord*> first;
  for (const auto& t : trials) {
    if (known_ids && !known.contains(t.image_id)) {
      fail(ErrorKind::kInvalidArgument, "trial from session " + t.session_id +
                                            " references unknown image_id '" + t.image_id + "'");
    }
    auto [it, inserted] = first.try_emplace({t.participant_id, t.image_id}, &t);
    if (!inserted && earlier(t, *it->second)) it->second = &t;
  }

  AggregateResult out;
  std::map<std::string, ResponseHistogram> by_image;
  for (const auto& t : trials) {
    if (first.at({t.participant_id, t.image_id}) != &t) {
      out.duplicates.push_back(t);
      continue;
    }
    auto& h = by_image[t.image_id];
    h.image_id = t.image_id;
    h.counts[index_of(t.chosen)] += 1;
    h.total += 1;
  }
  std::ranges::sort(out.duplicates, earlier);

  if (known_ids) {
    for (const auto& id : *known_ids) {
      if (auto it = by_image.find(id); it != by_image.end()) out.histograms.push_back(it->second);
    }
  } else {
    for (auto& [id, h] : by_image) out.histograms.push_back(h);
  }
  return out;
}

ColorRow to_probabilities(const ResponseHistogram& h) {
  if (h.total == 0) fail(ErrorKind::kDegenerate, "image " + h.image_id + " has no responses");
  ColorRow p{};
  for (std::size_t j = 0; j < kNumColors; ++j) {
    p[j] = static_cast<double>(h.counts[j]) / static_cast<double>(h.total);
  }
  return p;
}

MajorityLabel majority_label(const ResponseHistogram& h) {
  if (h.total == 0) fail(ErrorKind::kDegenerate, "image " + h.image_id + " has no responses");
  std::size_t best = 0;
  for (std::size_t j = 1; j < kNumColors; ++j) {
    if (h.counts[j] > h.counts[best]) best = j;
  }
  MajorityLabel m{color_from_index(best), false};
  for (std::size_t j = 0; j < kNumColors; ++j) {
    m.tie = m.tie || (j != best && h.counts[j] == h.counts[best]);
  }
  return m;
}

DecisionTable to_decision_table(std::span<const ResponseHistogram> histograms) {
  DecisionTable t;
  for (const auto& h : histograms) {
    t.stimulus_ids.push_back(h.image_id);
    t.rows.push_back(to_probabilities(h));
  }
  return t;
}

void write_histogram_csv(const std::filesystem::path& path,
                         std::span<const ResponseHistogram> histograms) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << "image_id";
  for (Color c : kAllColors) out << ',' << name_of(c);
  out << ",total\n";
  for (const auto& h : histograms) {
    out << h.image_id;
    for (std::size_t n : h.counts) out << ',' << n;
    out << ',' << h.total << '\n';
  }
}

std::vector<ResponseHistogram> read_histogram_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kNotFound, "histogram CSV not found: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("image_id,red,green,blue,black,yellow,total", 0) != 0) {
    fail(ErrorKind::kFormat, path.string() + ": expected header image_id,red,green,blue,black,yellow,total");
  }
  std::vector<ResponseHistogram> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != kNumColors + 2) {
      fail(ErrorKind::kFormat, path.string() + ":" + std::to_string(line_no) + ": expected 7 fields");
    }
    ResponseHistogram h;
    h.image_id = fields[0];
    try {
      std::size_t sum = 0;
      for (std::size_t j = 0; j < kNumColors; ++j) {
        h.counts[j] = std::stoull(fields[1 + j]);
        sum += h.counts[j];
      }
      h.total = std::stoull(fields[kNumColors + 1]);
      if (sum != h.total) {
        fail(ErrorKind::kFormat, path.string() + ":" + std::to_string(line_no) + ": total != sum of counts");
      }
    } catch (const std::logic_error&) {
      fail(ErrorKind::kFormat, path.string() + ":" + std::to_string(line_no) + ": bad count");
    }
    out.push_back(h);
  }
  return out;
}

std::vector<TrialRecord> filter_trials(std::span<const TrialRecord> trials, const TrialFilter& f) {
  std::unordered_map<std::string, std::unordered_set<std::string>> answered;
  if (f.complete_session_size) {
    for (const auto& t : trials) answered[t.session_id].insert(t.image_id);
  }
  std::vector<TrialRecord> out;
  for (const auto& t : trials) {
    if (f.min_response_time && t.response_time < *f.min_response_time) continue;
    if (f.max_response_time && t.response_time > *f.max_response_time) continue;
    if (f.exclude_sessions.contains(t.session_id)) continue;
    if (f.complete_session_size && answered[t.session_id].size() < *f.complete_session_size) continue;
    out.push_back(t);
  }
  return out;
}

}  // namespace emocolor
