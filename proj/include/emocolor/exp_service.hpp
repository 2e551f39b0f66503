#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "emocolor/error.hpp"
#include "emocolor/human_data.hpp"
#include "emocolor/random.hpp"
#include "emocolor/stimuli.hpp"

namespace httplib {
class Server;
}

namespace emocolor {

struct Session {
  std::string session_id;  // 128-bit random token, hex
  std::vector<std::string> stimulus_order;
  std::int64_t created_at = 0;  // UTC ms
  bool completed = false;
  std::vector<std::string> answered;  // image ids with a stored response, in stimulus order
};

/// Error carrying the HTTP status the route should answer with.
class ServiceError : public Error {
 public:
  ServiceError(int status, ErrorKind kind, const std::string& message)
      : Error(kind, message), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

enum class RecordOutcome { kStored, kDuplicate };

struct ServiceOptions {
  /// Fixes the stimulus-order generator (tests). Tokens always come from the
  /// system CSPRNG.
  std::optional<std::uint64_t> order_seed;
};

/// Forced-choice experiment state. Sessions and trials live in append-only
/// JSONL files under the data directory and are replayed on construction.
/// Writers are serialized; readers work on immutable snapshots.
class ExperimentService {
 public:
  ExperimentService(StimulusSet stimuli, std::filesystem::path data_dir,
                    ServiceOptions options = {});
  ~ExperimentService();
  ExperimentService(const ExperimentService&) = delete;
  ExperimentService& operator=(const ExperimentService&) = delete;

  Session create_session();
  std::optional<Session> session(const std::string& id) const;

  /// Appends and fsyncs before returning. Exact repeats of a stored record
  /// return kDuplicate; a different payload for the same (session, image)
  /// throws 409; unknown session 404; image outside the session 400.
  RecordOutcome record_trial(const TrialRecord& trial);

  /// Streams the trial log in append order without loading it.
  void export_trials(std::ostream& out) const;
  std::filesystem::path trials_path() const;
  std::size_t trial_count() const;

  /// Grayscale PNG of a stimulus, as shown to participants.
  std::string stimulus_png(const std::string& image_id) const;

  const StimulusSet& stimuli() const { return stimuli_; }

 private:
  struct SessionState;
  struct Snapshot;

  std::shared_ptr<const Snapshot> snapshot() const;
  void publish(std::shared_ptr<const Snapshot> next);
  void append_line(int fd, const std::string& line);
  void replay();

  StimulusSet stimuli_;
  std::filesystem::path data_dir_;
  int sessions_fd_ = -1;
  int trials_fd_ = -1;
  std::mutex write_mutex_;
  std::shared_ptr<const Snapshot> snapshot_;
  std::optional<Rng> order_rng_;
  std::map<std::string, std::string> png_cache_;
};

std::string session_to_json(const Session& s);
std::string random_token_hex(std::size_t bytes = 16);

struct ServerOptions {
  std::filesystem::path ui_dir;  // served at /, optional
  std::optional<std::string> export_token;
};

/// Registers /api/session, /api/stimuli/{id}, /api/trials, /api/export and
/// the static UI mount on `server`.
void register_routes(httplib::Server& server, ExperimentService& service,
                     const ServerOptions& options);

/// Blocks serving on host:port until the server stops.
void serve(ExperimentService& service, const std::string& host, int port,
           const ServerOptions& options);

}  // namespace emocolor
