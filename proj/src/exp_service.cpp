#include "emocolor/exp_service.hpp"

#include <fcntl.h>
#include <openssl/rand.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <ostream>
#include <set>

namespace emocolor {

using nlohmann::json;

struct ExperimentService::SessionState {
  Session session;
  std::set<std::string> images;
  std::map<std::string, TrialRecord> records;  // by image_id
};

struct ExperimentService::Snapshot {
  std::map<std::string, std::shared_ptr<const SessionState>> sessions;
  std::size_t trial_count = 0;
};

namespace {

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

int open_append(const std::filesystem::path& p) {
  const int fd = ::open(p.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) fail(ErrorKind::kIo, "cannot open " + p.string() + ": " + std::strerror(errno));
  return fd;
}

// Drops a torn final line left by a crash between write and fsync. Such a
// record was never acknowledged.
std::vector<std::string> read_complete_lines(const std::filesystem::path& p) {
  std::vector<std::string> lines;
  std::ifstream in(p, std::ios::binary);
  if (!in) return lines;
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  const std::size_t keep = content.rfind('\n') == std::string::npos ? 0 : content.rfind('\n') + 1;
  if (keep != content.size()) std::filesystem::resize_file(p, keep);
  std::size_t start = 0;
  while (start < keep) {
    const std::size_t end = content.find('\n', start);
    if (end > start) lines.push_back(content.substr(start, end - start));
    start = end + 1;
  }
  return lines;
}

}  // namespace

std::string random_token_hex(std::size_t bytes) {
  std::vector<unsigned char> buf(bytes);
  if (RAND_bytes(buf.data(), static_cast<int>(buf.size())) != 1) {
    fail(ErrorKind::kIo, "system random generator unavailable");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned char b : buf) {
    out += kHex[b >> 4];
    out += kHex[b & 15];
  }
  return out;
}

std::string session_to_json(const Session& s) {
  json swatches = json::array();
  for (Color c : kAllColors) {
    const Rgb rgb = swatch_rgb(c);
    swatches.push_back({{"name", name_of(c)}, {"rgb", {rgb.r, rgb.g, rgb.b}}});
  }
  return json{{"session_id", s.session_id},
              {"stimulus_order", s.stimulus_order},
              {"created_at", s.created_at},
              {"completed", s.completed},
              {"answered", s.answered},
              {"swatches", swatches}}
      .dump();
}

ExperimentService::ExperimentService(StimulusSet stimuli, std::filesystem::path data_dir,
                                     ServiceOptions options)
    : stimuli_(std::move(stimuli)), data_dir_(std::move(data_dir)) {
  if (stimuli_.size() == 0) fail(ErrorKind::kInvalidArgument, "experiment manifest is empty");
  if (options.order_seed) order_rng_.emplace(*options.order_seed);
  for (const auto& e : stimuli_.entries()) {
    if (e.image.valid()) png_cache_[e.image_id] = encode_png(to_grayscale(e.image));
  }
  std::filesystem::create_directories(data_dir_);
  replay();
  sessions_fd_ = open_append(data_dir_ / "sessions.jsonl");
  trials_fd_ = open_append(trials_path());
}

ExperimentService::~ExperimentService() {
  if (sessions_fd_ >= 0) ::close(sessions_fd_);
  if (trials_fd_ >= 0) ::close(trials_fd_);
}

std::filesystem::path ExperimentService::trials_path() const { return data_dir_ / "trials.jsonl"; }

std::shared_ptr<const ExperimentService::Snapshot> ExperimentService::snapshot() const {
  return std::atomic_load(&snapshot_);
}

void ExperimentService::publish(std::shared_ptr<const Snapshot> next) {
  std::atomic_store(&snapshot_, std::move(next));
}

void ExperimentService::replay() {
  auto snap = std::make_shared<Snapshot>();
  for (const auto& line : read_complete_lines(data_dir_ / "sessions.jsonl")) {
    const json j = json::parse(line);
    auto st = std::make_shared<SessionState>();
    st->session.session_id = j.at("session_id").get<std::string>();
    st->session.stimulus_order = j.at("stimulus_order").get<std::vector<std::string>>();
    st->session.created_at = j.at("created_at").get<std::int64_t>();
    st->images.insert(st->session.stimulus_order.begin(), st->session.stimulus_order.end());
    snap->sessions[st->session.session_id] = st;
  }
  for (const auto& line : read_complete_lines(trials_path())) {
    const TrialRecord t = parse_trial(line);
    auto it = snap->sessions.find(t.session_id);
    if (it == snap->sessions.end()) {
      fail(ErrorKind::kFormat, "trial log references unknown session " + t.session_id);
    }
    auto st = std::make_shared<SessionState>(*it->second);
    st->records.emplace(t.image_id, t);
    st->session.completed = st->records.size() == st->session.stimulus_order.size();
    it->second = st;
    snap->trial_count += 1;
  }
  publish(snap);
}

void ExperimentService::append_line(int fd, const std::string& line) {
  const std::string data = line + '\n';
  std::size_t written = 0;
  while (written < data.size()) {
    const ssize_t n = ::write(fd, data.data() + written, data.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail(ErrorKind::kIo, std::string("append failed: ") + std::strerror(errno));
    }
    written += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0) fail(ErrorKind::kIo, std::string("fsync failed: ") + std::strerror(errno));
}

Session ExperimentService::create_session() {
  std::lock_guard lock(write_mutex_);
  auto st = std::make_shared<SessionState>();
  st->session.session_id = random_token_hex(16);
  st->session.stimulus_order = stimuli_.ids();
  if (order_rng_) {
    order_rng_->shuffle(st->session.stimulus_order);
  } else {
    std::uint64_t seed = 0;
    if (RAND_bytes(reinterpret_cast<unsigned char*>(&seed), sizeof seed) != 1) {
      fail(ErrorKind::kIo, "system random generator unavailable");
    }
    Rng rng(seed);
    rng.shuffle(st->session.stimulus_order);
  }
  st->session.created_at = now_ms();
  st->images.insert(st->session.stimulus_order.begin(), st->session.stimulus_order.end());

  const json line = {{"session_id", st->session.session_id},
                     {"stimulus_order", st->session.stimulus_order},
                     {"created_at", st->session.created_at}};
  append_line(sessions_fd_, line.dump());

  auto next = std::make_shared<Snapshot>(*snapshot());
  next->sessions[st->session.session_id] = st;
  publish(next);
  return st->session;
}

std::optional<Session> ExperimentService::session(const std::string& id) const {
  const auto snap = snapshot();
  const auto it = snap->sessions.find(id);
  if (it == snap->sessions.end()) return std::nullopt;
  Session out = it->second->session;
  for (const auto& image : out.stimulus_order) {
    if (it->second->records.contains(image)) out.answered.push_back(image);
  }
  return out;
}

RecordOutcome ExperimentService::record_trial(const TrialRecord& trial) {
  std::lock_guard lock(write_mutex_);
  const auto snap = snapshot();
  const auto it = snap->sessions.find(trial.session_id);
  if (it == snap->sessions.end()) {
    throw ServiceError(404, ErrorKind::kNotFound, "unknown session " + trial.session_id);
  }
  const SessionState& st = *it->second;
  if (!st.images.contains(trial.image_id)) {
    throw ServiceError(400, ErrorKind::kInvalidArgument,
                       "image " + trial.image_id + " is not part of session " + trial.session_id);
  }
  if (const auto r = st.records.find(trial.image_id); r != st.records.end()) {
    if (r->second == trial) return RecordOutcome::kDuplicate;
    throw ServiceError(409, ErrorKind::kConflict,
                       "a different response for image " + trial.image_id + " is already stored");
  }
  append_line(trials_fd_, to_json_line(trial));

  auto updated = std::make_shared<SessionState>(st);
  updated->records.emplace(trial.image_id, trial);
  updated->session.completed = updated->records.size() == updated->session.stimulus_order.size();
  auto next = std::make_shared<Snapshot>(*snap);
  next->sessions[trial.session_id] = updated;
  next->trial_count += 1;
  publish(next);
  return RecordOutcome::kStored;
}

void ExperimentService::export_trials(std::ostream& out) const {
  // Only lines that were complete when export began; appends during the
  // stream are not included.
  std::size_t limit = 0;
  {
    std::error_code ec;
    limit = static_cast<std::size_t>(std::filesystem::file_size(trials_path(), ec));
    if (ec) return;
  }
  std::ifstream in(trials_path(), std::ios::binary);
  char buf[1 << 16];
  std::size_t left = limit;
  while (left > 0 && in) {
    in.read(buf, static_cast<std::streamsize>(std::min(left, sizeof buf)));
    const auto n = static_cast<std::size_t>(in.gcount());
    if (n == 0) break;
    out.write(buf, static_cast<std::streamsize>(n));
    left -= n;
  }
}

std::size_t ExperimentService::trial_count() const { return snapshot()->trial_count; }

std::string ExperimentService::stimulus_png(const std::string& image_id) const {
  const auto it = png_cache_.find(image_id);
  if (it == png_cache_.end()) {
    throw ServiceError(404, ErrorKind::kNotFound, "unknown stimulus " + image_id);
  }
  return it->second;
}

}  // namespace emocolor
