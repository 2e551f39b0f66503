#include "emocolor/report.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace emocolor {

using nlohmann::json;

namespace {

std::string hex(const unsigned char* data, unsigned int len) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[data[i] >> 4];
    out += kHex[data[i] & 15];
  }
  return out;
}

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) {
      fail(ErrorKind::kIo, "SHA-256 unavailable");
    }
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx_, data, n); }
  std::string finish() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_, md, &len);
    return hex(md, len);
  }

 private:
  EVP_MD_CTX* ctx_;
};

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json accuracy_json(const AccuracyStats& s) {
  return {{"mean", s.mean}, {"std", s.stddev}, {"max", s.max}, {"per_trial", s.per_trial}};
}

std::string fmt(const json& v, int decimals) {
  if (!v.is_number()) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v.get<double>());
  return buf;
}

std::string mean_pm(const json& mean, const json& sd, int decimals) {
  if (!mean.is_number()) return "-";
  if (!sd.is_number()) return fmt(mean, decimals);
  return fmt(mean, decimals) + " ± " + fmt(sd, decimals);
}

std::string model_key(const json& a) {
  return a.value("model_id", "") + "/" + a.value("layer_name", "");
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.finish();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kNotFound, "cannot hash missing file " + path.string());
  Sha256 h;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    h.update(buf, static_cast<std::size_t>(in.gcount()));
  }
  return h.finish();
}

InputHashes hash_inputs(std::span<const std::filesystem::path> paths) {
  InputHashes out;
  for (const auto& p : paths) out[p.filename().string()] = sha256_file(p);
  return out;
}

std::string dataset_hash(const InputHashes& inputs) {
  std::string lines;
  for (const auto& [name, hash] : inputs) lines += name + ":" + hash + "\n";
  return sha256_hex(lines);
}

json correlation_artifact(const CorrelationResult& r, const std::string& model_id,
                          const std::string& layer_name, const InputHashes& inputs) {
  json j = {{"kind", "correlation"},        {"model_id", model_id},
            {"layer_name", layer_name},     {"condition", r.condition},
            {"r", r.r},                     {"p_value", r.p_value},
            {"n", r.n},                     {"permutation", r.permutation.to_string()},
            {"inputs", inputs}};
  if (r.resampling_p) j["resampling_p"] = *r.resampling_p;
  return j;
}

json transform_artifact(const TransformedCorrelation& t, const TrainConfig& cfg, std::size_t trials,
                        const std::string& model_id, const std::string& layer_name,
                        const InputHashes& inputs) {
  json controls = json::array();
  for (const auto& c : t.controls) {
    controls.push_back({{"sequence", c.permutation.to_string()}, {"r", c.r}, {"p_value", c.p_value}});
  }
  json per_fold = json::array();
  for (double r : t.per_fold_r) per_fold.push_back(number_or_null(r));
  return {{"kind", "transform_cv"},
          {"model_id", model_id},
          {"layer_name", layer_name},
          {"k", cfg.k},
          {"seed", cfg.seed},
          {"epochs", cfg.epochs},
          {"learning_rate", cfg.learning_rate},
          {"batch_size", cfg.batch_size},
          {"trials", trials},
          {"pooled_r", t.pooled_r},
          {"mean_r", t.mean_r},
          {"std_r", t.std_r},
          {"p_value", t.first.p_value},
          {"n", t.first.n},
          {"per_fold_r", per_fold},
          {"controls", controls},
          {"inputs", inputs}};
}

json classification_artifact(const ClassificationResult& r,
                             const std::optional<ChanceBaseline>& chance_human,
                             const std::optional<ChanceBaseline>& chance_actual,
                             const InputHashes& inputs) {
  json preds = json::array();
  for (Emotion e : r.predictions) preds.push_back(std::string(name_of(e)));
  json j = {{"kind", "classification"}, {"mode", to_string(r.mode)},
            {"trials", r.trials},       {"seed", r.seed},
            {"epochs", r.epochs},       {"ties_last_trial", r.ties},
            {"predictions", preds},     {"vs_human", accuracy_json(r.vs_human)},
            {"inputs", inputs}};
  if (r.vs_actual) j["vs_actual"] = accuracy_json(*r.vs_actual);
  if (chance_human) {
    j["chance_vs_human"] = {{"mean", chance_human->mean}, {"std", chance_human->stddev},
                            {"runs", chance_human->runs}};
  }
  if (chance_actual) {
    j["chance_vs_actual"] = {{"mean", chance_actual->mean}, {"std", chance_actual->stddev},
                             {"runs", chance_actual->runs}};
  }
  return j;
}

json sweep_artifact(const SweepResult& s, std::uint64_t seed, const InputHashes& inputs) {
  json points = json::array();
  for (const auto& p : s.points) {
    points.push_back({{"label", p.label},
                      {"defined", p.defined},
                      {"mean", number_or_null(p.mean)},
                      {"std", number_or_null(p.stddev)},
                      {"values", p.values}});
  }
  const std::size_t best = s.argmax();
  return {{"kind", "sweep"},
          {"axis", s.axis},
          {"metric", s.metric},
          {"seed", seed},
          {"points", points},
          {"argmax", best == SweepResult::npos ? json(nullptr) : json(s.points[best].label)},
          {"inputs", inputs}};
}

void write_json(const std::filesystem::path& path, const json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kNotFound, "not found: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, path.string() + ": " + e.what());
  }
}

std::vector<json> load_artifacts(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) fail(ErrorKind::kNotFound, "run directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json" &&
        e.path().filename() != "report.json") {
      files.push_back(e.path());
    }
  }
  std::ranges::sort(files);
  std::vector<json> out;
  for (const auto& f : files) {
    json j;
    try {
      j = read_json(f);
    } catch (const Error&) {
      continue;  // not an artifact
    }
    if (j.is_object() && j.contains("kind")) {
      j["artifact"] = f.filename().string();
      out.push_back(std::move(j));
    }
  }
  return out;
}

json build_report(std::span<const json> artifacts, const std::optional<json>& reference) {
  if (artifacts.empty()) fail(ErrorKind::kInvalidArgument, "report needs at least one result");
  json report;
  InputHashes inputs;
  std::set<std::uint64_t> seeds;
  std::set<std::string> models;
  json names = json::array();
  for (const auto& a : artifacts) {
    names.push_back(a.value("artifact", ""));
    if (a.contains("inputs")) {
      for (auto& [k, v] : a["inputs"].items()) inputs[k] = v.get<std::string>();
    }
    if (a.contains("seed")) seeds.insert(a["seed"].get<std::uint64_t>());
    if (a.contains("model_id") && !a["model_id"].get<std::string>().empty()) models.insert(model_key(a));
  }
  report["metadata"] = {{"dataset_hash", dataset_hash(inputs)},
                        {"inputs", inputs},
                        {"seeds", seeds},
                        {"models", models},
                        {"artifacts", names}};

  // Correlation table: raw R from identity correlations, transformed R from CV.
  std::map<std::string, json> rows;
  for (const auto& a : artifacts) {
    const std::string kind = a["kind"];
    if (kind == "correlation" && a.value("permutation", "") == "0,1,2,3,4") {
      json& row = rows[model_key(a)];
      row["model_id"] = a.value("model_id", "");
      row["layer_name"] = a.value("layer_name", "");
      const std::string cond = a.value("condition", "raw");
      row[cond + "_r"] = a["r"];
      row[cond + "_p"] = a["p_value"];
    } else if (kind == "transform_cv") {
      json& row = rows[model_key(a)];
      row["model_id"] = a.value("model_id", "");
      row["layer_name"] = a.value("layer_name", "");
      row["transformed_r_mean"] = a["mean_r"];
      row["transformed_r_std"] = a["std_r"];
      row["transformed_trials"] = a["trials"];
      row["transformed_p"] = a["p_value"];
    }
  }
  json correlation_rows = json::array();
  for (auto& [key, row] : rows) correlation_rows.push_back(row);
  report["correlation"] = correlation_rows;

  // Permutation table.
  std::map<std::string, json> perms;
  for (const auto& a : artifacts) {
    const std::string kind = a["kind"];
    if (kind == "correlation" && a.value("condition", "raw") == "raw") {
      perms[a["permutation"]]["raw_r"] = a["r"];
    } else if (kind == "transform_cv") {
      perms["0,1,2,3,4"]["transformed_r"] = a["mean_r"];
      for (const auto& c : a["controls"]) perms[c["sequence"]]["transformed_r"] = c["r"];
    }
  }
  const bool has_controls =
      std::ranges::any_of(perms, [](const auto& kv) { return kv.first != "0,1,2,3,4"; });
  if (has_controls) {
    json permutation_rows = json::array();
    auto add = [&](const std::string& seq) {
      json row = perms[seq];
      row["sequence"] = seq;
      permutation_rows.push_back(row);
    };
    if (perms.contains("0,1,2,3,4")) add("0,1,2,3,4");
    for (const auto& [seq, row] : perms) {
      if (seq != "0,1,2,3,4") add(seq);
    }
    report["permutations"] = permutation_rows;
  }

  // Classification table.
  json classification_rows = json::array();
  for (const auto& a : artifacts) {
    if (a["kind"] != "classification") continue;
    if (a.contains("chance_vs_human") || a.contains("chance_vs_actual")) {
      json chance = {{"method", "chance"}};
      if (a.contains("chance_vs_human")) {
        chance["vs_human_mean"] = a["chance_vs_human"]["mean"];
        chance["vs_human_std"] = a["chance_vs_human"]["std"];
        chance["runs"] = a["chance_vs_human"]["runs"];
      }
      if (a.contains("chance_vs_actual")) {
        chance["vs_actual_mean"] = a["chance_vs_actual"]["mean"];
        chance["vs_actual_std"] = a["chance_vs_actual"]["std"];
        chance["runs"] = a["chance_vs_actual"]["runs"];
      }
      const bool seen = std::ranges::any_of(classification_rows, [](const json& r) { return r["method"] == "chance"; });
      if (!seen) classification_rows.insert(classification_rows.begin(), chance);
    }
    json row = {{"method", a["mode"]},
                {"trials", a["trials"]},
                {"vs_human_mean", a["vs_human"]["mean"]},
                {"vs_human_std", a["vs_human"]["std"]},
                {"vs_human_max", a["vs_human"]["max"]}};
    if (a.contains("vs_actual")) {
      row["vs_actual_mean"] = a["vs_actual"]["mean"];
      row["vs_actual_std"] = a["vs_actual"]["std"];
      row["vs_actual_max"] = a["vs_actual"]["max"];
    }
    classification_rows.push_back(row);
  }
  if (!classification_rows.empty()) report["classification"] = classification_rows;

  json sweeps = json::array();
  for (const auto& a : artifacts) {
    if (a["kind"] == "sweep") {
      sweeps.push_back({{"axis", a["axis"]},
                        {"metric", a["metric"]},
                        {"points", a["points"]},
                        {"argmax", a["argmax"]},
                        {"artifact", a["artifact"]}});
    }
  }
  if (!sweeps.empty()) report["sweeps"] = sweeps;
  if (reference) report["reference"] = *reference;
  return report;
}

std::string render_markdown(const json& report) {
  std::ostringstream md;
  md << "# Emotion-color association report\n\n";
  const json& meta = report["metadata"];
  md << "Dataset hash: `" << meta["dataset_hash"].get<std::string>() << "`\n\n";
  if (!meta["seeds"].empty()) {
    md << "Seeds:";
    for (const auto& s : meta["seeds"]) md << ' ' << s.get<std::uint64_t>();
    md << "\n\n";
  }

  const json empty = json::object();
  const json& ref = report.contains("reference") ? report["reference"] : empty;

  if (report.contains("correlation") && !report["correlation"].empty()) {
    md << "## Correlation with human decisions\n\n";
    md << "| Model | Layer | R (raw) | R (transformed) |\n|---|---|---|---|\n";
    for (const auto& r : report["correlation"]) {
      md << "| " << r.value("model_id", "") << " | " << r.value("layer_name", "") << " | "
         << fmt(r.value("raw_r", json()), 3) << " | "
         << mean_pm(r.value("transformed_r_mean", json()), r.value("transformed_r_std", json()), 3)
         << " |\n";
    }
    if (ref.contains("correlation")) {
      for (const auto& r : ref["correlation"]) {
        md << "| " << r.value("model_id", "") << " (reference) | " << r.value("layer_name", "")
           << " | " << fmt(r["raw_r"], 2) << " | "
           << mean_pm(r["transformed_r_mean"], r["transformed_r_std"], 2) << " |\n";
      }
    }
    md << '\n';
  }

  if (report.contains("permutations")) {
    md << "## Wrong color labels\n\n";
    md << "| Color sequence | R (raw) | R (transformed) |\n|---|---|---|\n";
    for (const auto& r : report["permutations"]) {
      md << "| [" << r["sequence"].get<std::string>() << "] | " << fmt(r.value("raw_r", json()), 3)
         << " | " << fmt(r.value("transformed_r", json()), 3) << " |\n";
    }
    md << '\n';
  }

  if (report.contains("classification")) {
    md << "## Classification accuracy (%)\n\n";
    md << "| Method | vs human majority | vs actual class |\n|---|---|---|\n";
    for (const auto& r : report["classification"]) {
      md << "| " << r["method"].get<std::string>() << " | "
         << mean_pm(r.value("vs_human_mean", json()), r.value("vs_human_std", json()), 2) << " | "
         << mean_pm(r.value("vs_actual_mean", json()), r.value("vs_actual_std", json()), 2)
         << " |\n";
    }
    if (ref.contains("classification")) {
      for (const auto& r : ref["classification"]) {
        md << "| " << r["method"].get<std::string>() << " (reference) | "
           << mean_pm(r.value("vs_human_mean", json()), r.value("vs_human_std", json()), 2)
           << " | "
           << mean_pm(r.value("vs_actual_mean", json()), r.value("vs_actual_std", json()), 2)
           << " |\n";
      }
      md << "\nChance vs human majority uses uniform random guesses; the reference value "
            "(7.9) comes from an unstated protocol and is not reconciled.\n";
    }
    md << '\n';
  }

  if (report.contains("sweeps")) {
    for (const auto& s : report["sweeps"]) {
      md << "## Sweep over " << s["axis"].get<std::string>() << " ("
         << s["metric"].get<std::string>() << ")\n\n";
      md << "| " << s["axis"].get<std::string>() << " | mean | std | trials |\n|---|---|---|---|\n";
      for (const auto& p : s["points"]) {
        md << "| " << p["label"].get<std::string>() << " | "
           << (p["defined"].get<bool>() ? fmt(p["mean"], 3) : "undefined") << " | "
           << fmt(p["std"], 3) << " | " << p["values"].size() << " |\n";
      }
      md << '\n';
    }
  }
  return md.str();
}

void write_report(const std::filesystem::path& dir, const json& report) {
  write_json(dir / "report.json", report);
  std::ofstream md(dir / "report.md");
  if (!md) fail(ErrorKind::kIo, "cannot write " + (dir / "report.md").string());
  md << render_markdown(report);
}

}  // namespace emocolor
