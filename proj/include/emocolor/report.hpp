#pragma once

#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emocolor/classifier.hpp"
#include "emocolor/evaluation.hpp"

namespace emocolor {

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Input fingerprint recorded in every artifact: file name -> SHA-256.
using InputHashes = std::map<std::string, std::string>;
InputHashes hash_inputs(std::span<const std::filesystem::path> paths);
/// SHA-256 over the sorted "name:hash" lines.
std::string dataset_hash(const InputHashes& inputs);

// Artifacts are JSON objects with a "kind" field; `report` collects them from
// a run directory.
nlohmann::json correlation_artifact(const CorrelationResult& r, const std::string& model_id,
                                    const std::string& layer_name, const InputHashes& inputs);
nlohmann::json transform_artifact(const TransformedCorrelation& t, const TrainConfig& cfg,
                                  std::size_t trials, const std::string& model_id,
                                  const std::string& layer_name, const InputHashes& inputs);
nlohmann::json classification_artifact(const ClassificationResult& r,
                                       const std::optional<ChanceBaseline>& chance_human,
                                       const std::optional<ChanceBaseline>& chance_actual,
                                       const InputHashes& inputs);
nlohmann::json sweep_artifact(const SweepResult& s, std::uint64_t seed, const InputHashes& inputs);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

/// Every `*.json` in `dir` with a "kind" field, in file-name order.
std::vector<nlohmann::json> load_artifacts(const std::filesystem::path& dir);

/// Correlation table, permutation table (omitted without non-identity
/// sequences), classification table, sweeps and run metadata.
nlohmann::json build_report(std::span<const nlohmann::json> artifacts,
                            const std::optional<nlohmann::json>& reference = std::nullopt);
std::string render_markdown(const nlohmann::json& report);

/// Writes report.json and report.md into `dir`.
void write_report(const std::filesystem::path& dir, const nlohmann::json& report);

}  // namespace emocolor
