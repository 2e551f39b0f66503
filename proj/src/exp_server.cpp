#include <cstdlib>
#include <fstream>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "emocolor/exp_service.hpp"

namespace emocolor {

namespace {

using nlohmann::json;

void send_error(httplib::Response& res, int status, std::string_view kind,
                const std::string& message) {
  res.status = status;
  res.set_content(json{{"error", std::string(kind)}, {"message", message}}.dump(), "application/json");
}

bool authorized(const httplib::Request& req, const std::string& token) {
  const std::string header = req.get_header_value("Authorization");
  if (header == "Bearer " + token) return true;
  return req.has_param("token") && req.get_param_value("token") == token;
}

}  // namespace

void register_routes(httplib::Server& server, ExperimentService& service,
                     const ServerOptions& options) {
  server.Get("/api/session", [&service](const httplib::Request&, httplib::Response& res) {
    res.set_content(session_to_json(service.create_session()), "application/json");
  });

  server.Get(R"(/api/session/([0-9a-f]+))",
             [&service](const httplib::Request& req, httplib::Response& res) {
               const auto s = service.session(req.matches[1]);
               if (!s) return send_error(res, 404, "not_found", "unknown session");
               res.set_content(session_to_json(*s), "application/json");
             });

  server.Get(R"(/api/stimuli/([^/]+))",
             [&service](const httplib::Request& req, httplib::Response& res) {
               try {
                 res.set_content(service.stimulus_png(req.matches[1]), "image/png");
               } catch (const ServiceError& e) {
                 send_error(res, e.status(), to_string(e.kind()), e.what());
               }
             });

  server.Post("/api/trials", [&service](const httplib::Request& req, httplib::Response& res) {
    TrialRecord trial;
    try {
      trial = parse_trial(req.body);
    } catch (const Error& e) {
      return send_error(res, 400, "bad_request", e.what());
    }
    try {
      const RecordOutcome outcome = service.record_trial(trial);
      res.set_content(
          json{{"status", outcome == RecordOutcome::kStored ? "stored" : "duplicate"}}.dump(),
          "application/json");
    } catch (const ServiceError& e) {
      send_error(res, e.status(), to_string(e.kind()), e.what());
    } catch (const Error& e) {
      send_error(res, 500, to_string(e.kind()), e.what());
    }
  });

  const auto token = options.export_token;
  server.Get("/api/export", [&service, token](const httplib::Request& req, httplib::Response& res) {
    if (!token || token->empty()) {
      return send_error(res, 403, "forbidden", "export disabled: EXP_EXPORT_TOKEN is not set");
    }
    if (!authorized(req, *token)) return send_error(res, 401, "unauthorized", "bad export token");

    std::error_code ec;
    const auto path = service.trials_path();
    const auto size = static_cast<std::size_t>(std::filesystem::file_size(path, ec));
    auto in = std::make_shared<std::ifstream>(path, std::ios::binary);
    const std::size_t limit = ec ? 0 : size;
    res.set_chunked_content_provider(
        "application/x-ndjson", [in, limit](std::size_t offset, httplib::DataSink& sink) {
          if (offset >= limit || !*in) {
            sink.done();
            return true;
          }
          char buf[1 << 16];
          in->read(buf, static_cast<std::streamsize>(std::min(limit - offset, sizeof buf)));
          const auto n = static_cast<std::size_t>(in->gcount());
          if (n == 0) {
            sink.done();
            return true;
          }
          return sink.write(buf, n);
        });
  });

  if (!options.ui_dir.empty() && std::filesystem::is_directory(options.ui_dir)) {
    server.set_mount_point("/", options.ui_dir.string());
  }
}

void serve(ExperimentService& service, const std::string& host, int port,
           const ServerOptions& options) {
  httplib::Server server;
  register_routes(server, service, options);
  if (!server.listen(host, port)) {
    fail(ErrorKind::kIo, "cannot listen on " + host + ":" + std::to_string(port));
  }
}

}  // namespace emocolor
