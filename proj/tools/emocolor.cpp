// emocolor: file-based pipeline over stimuli, features, human data and models.

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "emocolor/classifier.hpp"
#include "emocolor/decision.hpp"
#include "emocolor/evaluation.hpp"
#include "emocolor/exp_service.hpp"
#include "emocolor/features.hpp"
#include "emocolor/human_data.hpp"
#include "emocolor/report.hpp"
#include "emocolor/stimuli.hpp"
#include "emocolor/synthetic.hpp"
#include "emocolor/transform.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace emocolor;

namespace {

constexpr const char* kVersion = "0.1.0";

// Histogram CSVs (with a total column) become probabilities; anything else is
// read as a probability table.
struct HumanData {
  DecisionTable table;
  std::vector<Emotion> majority;
};

HumanData load_human(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kNotFound, "human data not found: " + path.string());
  std::string header;
  std::getline(in, header);
  HumanData h;
  if (header.ends_with(",total") || header.ends_with(",total\r")) {
    const auto hist = read_histogram_csv(path);
    h.table = to_decision_table(hist);
    for (const auto& x : hist) h.majority.push_back(emotion_for_color(majority_label(x).color));
  } else {
    h.table = read_color_table_csv(path);
    for (const auto& row : h.table.rows) h.majority.push_back(similarity_classify(row).emotion);
  }
  return h;
}

// Reorders a table to match `ids`; every id must be present.
DecisionTable align(const DecisionTable& t, const std::vector<std::string>& ids) {
  DecisionTable out;
  for (const auto& id : ids) {
    const std::size_t i = t.find(id);
    if (i == DecisionTable::npos) fail(ErrorKind::kNotFound, "no human data for stimulus " + id);
    out.stimulus_ids.push_back(id);
    out.rows.push_back(t.rows[i]);
  }
  return out;
}

std::vector<ColorSequence> control_sequences(const std::vector<std::string>& perms,
                                             std::size_t random_count, std::uint64_t seed) {
  std::vector<ColorSequence> out;
  for (const auto& p : perms) out.push_back(ColorSequence::parse(p));
  Rng rng(seed ^ 0xc0101u);
  for (std::size_t i = 0; i < random_count; ++i) out.push_back(ColorSequence::random_derangement(rng));
  return out;
}

void print_json(const json& j) { std::cout << j.dump(2) << '\n'; }

json with_version(json j) {
  j["emocolor_version"] = kVersion;
  return j;
}

struct PairInputs {
  std::string features;
  std::string colors;
  std::string human;
};

void add_pair_inputs(CLI::App* cmd, PairInputs& in) {
  cmd->add_option("--features", in.features, "Stimulus feature store")->required();
  cmd->add_option("--colors", in.colors, "Color patch feature store")->required();
  cmd->add_option("--human", in.human, "Human histogram or probability CSV")->required();
}

struct LoadedPairs {
  PairDataset data;
  HumanData human;
  std::string model_id;
  std::string layer_name;
  InputHashes hashes;
};

LoadedPairs load_pairs(const PairInputs& in) {
  LoadedPairs out;
  const auto stim = FeatureStore::load(in.features);
  const auto colors = FeatureStore::load(in.colors);
  out.human = load_human(in.human);
  out.data = build_pairs(stim, colors, out.human.table);
  // Majority labels in stimulus order.
  std::vector<Emotion> majority;
  for (const auto& id : out.data.stimulus_ids) {
    majority.push_back(out.human.majority[out.human.table.find(id)]);
  }
  out.human.majority = std::move(majority);
  out.human.table = align(out.human.table, out.data.stimulus_ids);
  if (!stim.empty()) {
    out.model_id = stim.front().model_id;
    out.layer_name = stim.front().layer_name;
  }
  const std::vector<fs::path> files = {FeatureStore::prefix_of(in.features).string() + ".features.bin",
                                       FeatureStore::prefix_of(in.colors).string() + ".features.bin",
                                       in.human};
  out.hashes = hash_inputs(files);
  return out;
}

struct TrainFlags {
  std::size_t k = 75;
  std::uint64_t seed = 0;
  std::size_t epochs = 30;
  double lr = 0.001;
  std::size_t batch = 10;
  std::size_t folds = 5;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--k", f.k, "Transformed feature count")->capture_default_str();
  cmd->add_option("--seed", f.seed, "Base seed")->capture_default_str();
  cmd->add_option("--epochs", f.epochs, "Training epochs")->capture_default_str();
  cmd->add_option("--lr", f.lr, "Adam learning rate")->capture_default_str();
  cmd->add_option("--batch", f.batch, "Minibatch size")->capture_default_str();
  cmd->add_option("--folds", f.folds, "Cross-validation folds")->capture_default_str();
}

TrainConfig to_config(const TrainFlags& f) {
  TrainConfig c;
  c.k = f.k;
  c.seed = f.seed;
  c.epochs = f.epochs;
  c.learning_rate = f.lr;
  c.batch_size = f.batch;
  return c;
}

std::vector<Emotion> actual_labels(const fs::path& manifest, const std::vector<std::string>& ids) {
  const StimulusSet set = StimulusSet::load_manifest(manifest, false);
  std::vector<Emotion> out;
  for (const auto& id : ids) {
    const StimulusEntry* e = set.find(id);
    if (!e) fail(ErrorKind::kNotFound, "stimulus " + id + " missing from " + manifest.string());
    if (!e->true_emotion) fail(ErrorKind::kInvalidArgument, "stimulus " + id + " has no emotion label");
    out.push_back(*e->true_emotion);
  }
  return out;
}

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? v : fallback;
}

int run(int argc, char** argv) {
  CLI::App app{"Emotion-color association pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  // gen-colors
  std::string colors_out;
  int patch_size = kModelInputSize;
  auto* gen_colors = app.add_subcommand("gen-colors", "Write the five color patch PNGs and a manifest");
  gen_colors->add_option("--out", colors_out, "Output directory")->required();
  gen_colors->add_option("--size", patch_size, "Patch size in pixels")->capture_default_str();

  // synth-stimuli
  std::string synth_out;
  synthetic::ImageSetConfig synth_cfg;
  auto* synth = app.add_subcommand("synth-stimuli", "Write a synthetic grayscale stimulus set");
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--per-class", synth_cfg.per_class)->capture_default_str();
  synth->add_option("--size", synth_cfg.size)->capture_default_str();
  synth->add_option("--seed", synth_cfg.seed)->capture_default_str();

  // make-fixture
  std::string fixture_kind = "pooling", fixture_out, fixture_layer = "grid";
  auto* fixture = app.add_subcommand("make-fixture", "Write a small fixture graph with its sidecar");
  fixture->add_option("--kind", fixture_kind, "identity | pooling")->capture_default_str();
  fixture->add_option("--out", fixture_out, "Graph path (.onnx)")->required();
  fixture->add_option("--layer", fixture_layer, "Default layer for the sidecar")->capture_default_str();

  // extract
  std::string ex_model, ex_layer, ex_in, ex_out;
  bool ex_gray = false;
  auto* extract = app.add_subcommand("extract", "Extract layer activations into a feature store");
  extract->add_option("--model", ex_model, "Graph file with a .meta.json sidecar")->required();
  extract->add_option("--layer", ex_layer, "Layer (tensor) name; defaults to the sidecar's");
  extract->add_option("--in", ex_in, "Stimulus manifest")->required();
  extract->add_option("--out", ex_out, "Feature store prefix")->required();
  extract->add_flag("--grayscale", ex_gray, "Convert images to grayscale first");

  // similarity
  std::string sim_features, sim_colors, sim_out;
  auto* similarity = app.add_subcommand("similarity", "Cosine similarity and decision probabilities");
  similarity->add_option("--features", sim_features)->required();
  similarity->add_option("--colors", sim_colors)->required();
  similarity->add_option("--out", sim_out, "Output directory")->required();

  // simulate-trials
  std::string st_manifest, st_out;
  synthetic::ParticipantConfig st_cfg;
  auto* simulate = app.add_subcommand("simulate-trials", "Simulated participants as a trial log");
  simulate->add_option("--manifest", st_manifest)->required();
  simulate->add_option("--out", st_out, "Trial log (JSONL)")->required();
  simulate->add_option("--participants", st_cfg.participants)->capture_default_str();
  simulate->add_option("--association", st_cfg.association)->capture_default_str();
  simulate->add_option("--seed", st_cfg.seed)->capture_default_str();

  // aggregate
  std::string ag_trials, ag_out, ag_manifest, ag_probs;
  std::optional<double> ag_min_rt, ag_max_rt;
  std::vector<std::string> ag_exclude;
  bool ag_complete = false;
  auto* aggregate_cmd = app.add_subcommand("aggregate", "Trial log to histograms and probabilities");
  aggregate_cmd->add_option("--trials", ag_trials)->required();
  aggregate_cmd->add_option("--out", ag_out, "Histogram CSV")->required();
  aggregate_cmd->add_option("--probabilities", ag_probs, "Probability CSV (default: next to --out)");
  aggregate_cmd->add_option("--manifest", ag_manifest, "Reject image ids not in this manifest");
  aggregate_cmd->add_option("--min-rt", ag_min_rt, "Drop responses faster than this (ms)");
  aggregate_cmd->add_option("--max-rt", ag_max_rt, "Drop responses slower than this (ms)");
  aggregate_cmd->add_option("--exclude-session", ag_exclude, "Session ids to drop");
  aggregate_cmd->add_flag("--complete-only", ag_complete, "Drop sessions that did not finish");

  // correlate
  std::string co_human, co_sims, co_perm, co_values = "probabilities", co_out, co_model, co_layer;
  std::size_t co_resample = 0;
  std::uint64_t co_seed = 0;
  auto* correlate = app.add_subcommand("correlate", "Pearson R between human and model decisions");
  correlate->add_option("--human", co_human)->required();
  correlate->add_option("--model-sims", co_sims)->required();
  correlate->add_option("--perm", co_perm, "Color sequence, e.g. 4,3,0,2,1");
  correlate->add_option("--values", co_values, "probabilities | similarities")->capture_default_str();
  correlate->add_option("--resample", co_resample, "Also compute a permutation p-value");
  correlate->add_option("--seed", co_seed)->capture_default_str();
  correlate->add_option("--model-id", co_model);
  correlate->add_option("--layer", co_layer);
  correlate->add_option("--out", co_out, "Write the result JSON here as well");

  // train-transform
  PairInputs tt_in;
  TrainFlags tt_flags;
  std::string tt_out;
  std::size_t tt_trials = 1, tt_controls = 0;
  std::vector<std::string> tt_perms;
  bool tt_retrain = false;
  auto* train_cmd = app.add_subcommand("train-transform", "Learn the linear transform with k-fold CV");
  add_pair_inputs(train_cmd, tt_in);
  add_train_flags(train_cmd, tt_flags);
  train_cmd->add_option("--out", tt_out, "Output directory")->required();
  train_cmd->add_option("--trials", tt_trials, "Independent CV runs")->capture_default_str();
  train_cmd->add_option("--perm", tt_perms, "Wrong-label control sequences");
  train_cmd->add_option("--random-controls", tt_controls, "Random derangement controls");
  train_cmd->add_flag("--retrain-controls", tt_retrain, "Also retrain on relabeled colors");

  // classify
  PairInputs cl_in;
  TrainFlags cl_flags;
  std::string cl_mode = "transformed", cl_manifest, cl_out;
  std::size_t cl_trials = 50, cl_chance = 1000, cl_head_epochs = 15;
  auto* classify = app.add_subcommand("classify", "Emotion classification accuracy");
  add_pair_inputs(classify, cl_in);
  add_train_flags(classify, cl_flags);
  classify->add_option("--mode", cl_mode, "raw | transformed | head-human | head-actual")
      ->capture_default_str();
  classify->add_option("--manifest", cl_manifest, "Stimulus manifest with actual emotions");
  classify->add_option("--trials", cl_trials)->capture_default_str();
  classify->add_option("--chance-runs", cl_chance)->capture_default_str();
  classify->add_option("--head-epochs", cl_head_epochs)->capture_default_str();
  classify->add_option("--out", cl_out, "Result JSON");

  // sweep
  std::string sw_axis = "k", sw_out, sw_model, sw_stimuli, sw_colors_manifest, sw_human, sw_manifest;
  PairInputs sw_in;
  TrainFlags sw_flags;
  std::vector<std::size_t> sw_k = default_k_grid();
  std::vector<std::string> sw_layers;
  std::size_t sw_trials = 1;
  bool sw_actual = false;
  auto* sweep = app.add_subcommand("sweep", "Feature-count or layer sweep");
  sweep->add_option("--axis", sw_axis, "k | layer")->capture_default_str();
  sweep->add_option("--features", sw_in.features);
  sweep->add_option("--colors", sw_in.colors);
  sweep->add_option("--human", sw_in.human);
  add_train_flags(sweep, sw_flags);
  sweep->add_option("--k-list", sw_k, "k values (0 is reported as undefined)")->delimiter(',');
  sweep->add_option("--model", sw_model, "Graph for the layer axis");
  sweep->add_option("--layers", sw_layers, "Layer names")->delimiter(',');
  sweep->add_option("--stimuli", sw_stimuli, "Stimulus manifest for the layer axis");
  sweep->add_option("--color-manifest", sw_colors_manifest, "Color patch manifest for the layer axis");
  sweep->add_flag("--against-actual", sw_actual, "Score layers against actual emotions");
  sweep->add_option("--trials", sw_trials)->capture_default_str();
  sweep->add_option("--out", sw_out, "Output prefix (writes .csv and .json)")->required();

  // serve
  std::string sv_manifest, sv_data = env_or("EMOCOLOR_DATA_DIR", "experiment-data"), sv_ui,
                           sv_host = "0.0.0.0";
  int sv_port = 8080;
  auto* serve_cmd = app.add_subcommand("serve", "Run the forced-choice experiment service");
  serve_cmd->add_option("--port", sv_port)->capture_default_str();
  serve_cmd->add_option("--host", sv_host)->capture_default_str();
  serve_cmd->add_option("--manifest", sv_manifest)->required();
  serve_cmd->add_option("--data-dir", sv_data)->capture_default_str();
  serve_cmd->add_option("--ui-dir", sv_ui, "Static UI bundle served at /");

  // report
  std::string rp_in, rp_reference;
  auto* report = app.add_subcommand("report", "Collect run artifacts into report.json / report.md");
  report->add_option("--in", rp_in, "Run directory")->required();
  report->add_option("--reference", rp_reference, "Reference constants JSON for annotation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << json{{"error", "usage"}, {"message", e.what()}}.dump() << '\n';
    return 2;
  }

  if (*gen_colors) {
    const StimulusSet patches = color_patch_set(patch_size);
    patches.save(fs::path(colors_out) / "colors.json");
    print_json({{"manifest", (fs::path(colors_out) / "colors.json").string()}, {"count", patches.size()}});
  } else if (*synth) {
    const StimulusSet set = synthetic::make_stimulus_images(synth_cfg);
    set.save(fs::path(synth_out) / "manifest.json");
    print_json({{"manifest", (fs::path(synth_out) / "manifest.json").string()}, {"count", set.size()}});
  } else if (*fixture) {
    ModelSpec spec;
    if (fixture_kind == "identity") {
      spec = synthetic::write_identity_fixture(fixture_out);
    } else if (fixture_kind == "pooling") {
      spec = synthetic::write_pooling_fixture(fixture_out, fixture_layer);
    } else {
      fail(ErrorKind::kInvalidArgument, "unknown fixture kind " + fixture_kind);
    }
    print_json({{"graph", fixture_out}, {"sidecar", ModelSpec::sidecar_path(fixture_out).string()},
                {"layer", spec.layer_name}});
  } else if (*extract) {
    ModelSpec spec = ModelSpec::load(ex_model);
    if (!ex_layer.empty()) spec.layer_name = ex_layer;
    StimulusSet set = StimulusSet::load_manifest(ex_in);
    if (ex_gray) {
      std::vector<StimulusEntry> entries = set.entries();
      for (auto& e : entries) e.image = to_grayscale(e.image);
      set = StimulusSet(std::move(entries));
    }
    const FeatureExtractor extractor(spec);
    const auto vectors = extractor.extract_batch(set);
    FeatureStore::save(ex_out, vectors);
    print_json({{"prefix", ex_out}, {"count", vectors.size()},
                {"dim", vectors.empty() ? 0 : vectors.front().dim()},
                {"model_id", spec.model_id}, {"layer_name", spec.layer_name}});
  } else if (*similarity) {
    const auto stim = FeatureStore::load(sim_features);
    const auto colors = FeatureStore::load(sim_colors);
    const SimilarityMatrix sims = similarity_matrix(stim, colors);
    const DecisionSummary probs = decision_table(sims);
    write_similarity_csv(fs::path(sim_out) / "similarity.csv", sims);
    write_color_table_csv(fs::path(sim_out) / "probabilities.csv", "stimulus_id",
                          probs.table.stimulus_ids, probs.table.rows);
    print_json({{"rows", sims.rows()}, {"clamped_rows", probs.clamped_rows},
                {"degenerate_rows", probs.degenerate_rows}, {"model_id", sims.model_id},
                {"layer_name", sims.layer_name}});
  } else if (*simulate) {
    const StimulusSet set = StimulusSet::load_manifest(st_manifest, false);
    const auto trials = synthetic::simulate_participants(set, st_cfg);
    write_trials_jsonl(st_out, trials);
    print_json({{"trials", trials.size()}, {"out", st_out}});
  } else if (*aggregate_cmd) {
    auto trials = read_trials_jsonl(ag_trials);
    std::optional<StimulusSet> manifest;
    if (!ag_manifest.empty()) manifest = StimulusSet::load_manifest(ag_manifest, false);
    TrialFilter filter;
    filter.min_response_time = ag_min_rt;
    filter.max_response_time = ag_max_rt;
    filter.exclude_sessions.insert(ag_exclude.begin(), ag_exclude.end());
    if (ag_complete) {
      if (!manifest) fail(ErrorKind::kInvalidArgument, "--complete-only needs --manifest");
      filter.complete_session_size = manifest->size();
    }
    trials = filter_trials(trials, filter);
    std::vector<std::string> ids;
    if (manifest) ids = manifest->ids();
    const AggregateResult agg = manifest ? aggregate(trials, std::span<const std::string>(ids))
                                         : aggregate(trials);
    write_histogram_csv(ag_out, agg.histograms);
    const fs::path probs_path =
        ag_probs.empty() ? fs::path(ag_out).replace_extension(".probabilities.csv") : fs::path(ag_probs);
    const DecisionTable table = to_decision_table(agg.histograms);
    write_color_table_csv(probs_path, "image_id", table.stimulus_ids, table.rows);
    json low = json::array();
    for (const auto& h : agg.histograms) {
      if (h.low_data()) low.push_back(h.image_id);
    }
    print_json({{"images", agg.histograms.size()}, {"trials_used", trials.size() - agg.duplicates.size()},
                {"duplicates", agg.duplicates.size()}, {"low_data_images", low},
                {"probabilities", probs_path.string()}});
  } else if (*correlate) {
    const HumanData human = load_human(co_human);
    const SimilarityMatrix sims = read_similarity_csv(co_sims);
    const DecisionTable aligned = align(human.table, sims.stimulus_ids);
    const ColorSequence seq = co_perm.empty() ? ColorSequence::identity() : ColorSequence::parse(co_perm);
    ModelValues values;
    if (co_values == "probabilities") {
      values = ModelValues::kProbabilities;
    } else if (co_values == "similarities") {
      values = ModelValues::kSimilarities;
    } else {
      fail(ErrorKind::kInvalidArgument, "--values must be probabilities or similarities");
    }
    CorrelationResult r = correlation_experiment(aligned, sims, seq, values);
    if (co_resample > 0) {
      const SimilarityMatrix permuted = permute_colors(sims, seq);
      const auto x = values == ModelValues::kProbabilities ? flatten(decision_table(permuted).table)
                                                           : flatten(permuted);
      r.resampling_p = resampling_p_value(x, flatten(aligned), co_resample, co_seed);
    }
    const std::vector<fs::path> files = {co_human, co_sims};
    json j = with_version(correlation_artifact(r, co_model, co_layer, hash_inputs(files)));
    j["values"] = co_values;
    if (!co_out.empty()) write_json(co_out, j);
    print_json(j);
  } else if (*train_cmd) {
    const LoadedPairs in = load_pairs(tt_in);
    const TrainConfig cfg = to_config(tt_flags);
    const auto controls = control_sequences(tt_perms, tt_controls, cfg.seed);
    const TransformedCorrelation tc =
        transformed_correlation(in.data, cfg, tt_trials, tt_flags.folds, controls);
    TrainResult full = train(in.data, cfg);
    full.transform.model_id = in.model_id;
    full.transform.layer_name = in.layer_name;
    const fs::path out(tt_out);
    save_transform(out / "transform", full.transform);
    write_loss_history_csv(out / "loss_history.csv", tc.cv.loss_histories);
    SimilarityMatrix held = held_out_matrix(in.data, tc.cv);
    write_similarity_csv(out / "cv_similarity.csv", held);
    json j = with_version(transform_artifact(tc, cfg, tt_trials, in.model_id, in.layer_name, in.hashes));
    if (tt_retrain) {
      json retrained = json::array();
      for (const auto& s : controls) {
        const CorrelationResult r = retrained_permutation_control(in.data, cfg, s, tt_flags.folds);
        retrained.push_back({{"sequence", s.to_string()}, {"r", r.r}});
      }
      j["retrained_controls"] = retrained;
    }
    j["final_training_loss"] = full.loss_history.back();
    write_json(out / "transform_cv.json", j);
    print_json(j);
  } else if (*classify) {
    const LoadedPairs in = load_pairs(cl_in);
    ClassificationInputs inputs{in.data, in.human.majority, std::nullopt};
    if (!cl_manifest.empty()) inputs.actual_labels = actual_labels(cl_manifest, in.data.stimulus_ids);
    ClassificationConfig cfg;
    cfg.trials = cl_trials;
    cfg.folds = cl_flags.folds;
    cfg.seed = cl_flags.seed;
    cfg.transform = to_config(cl_flags);
    cfg.head.epochs = cl_head_epochs;
    cfg.head.learning_rate = cl_flags.lr;
    cfg.head.batch_size = cl_flags.batch;
    const ClassificationResult r = run_classification(inputs, parse_classify_mode(cl_mode), cfg);
    const auto chance_h = chance_baseline(inputs.human_labels, cl_chance, cfg.seed);
    std::optional<ChanceBaseline> chance_a;
    if (inputs.actual_labels) chance_a = chance_baseline(*inputs.actual_labels, cl_chance, cfg.seed + 1);
    auto hashes = in.hashes;
    if (!cl_manifest.empty()) hashes[fs::path(cl_manifest).filename().string()] = sha256_file(cl_manifest);
    const json j = with_version(classification_artifact(r, chance_h, chance_a, hashes));
    if (!cl_out.empty()) write_json(cl_out, j);
    print_json(j);
  } else if (*sweep) {
    SweepResult result;
    InputHashes hashes;
    if (sw_axis == "k") {
      if (sw_in.features.empty() || sw_in.colors.empty() || sw_in.human.empty()) {
        fail(ErrorKind::kInvalidArgument, "k sweep needs --features, --colors and --human");
      }
      const LoadedPairs in = load_pairs(sw_in);
      hashes = in.hashes;
      result = sweep_output_features(in.data, to_config(sw_flags), sw_k, sw_trials, sw_flags.folds);
    } else if (sw_axis == "layer") {
      if (sw_model.empty() || sw_layers.empty() || sw_stimuli.empty() || sw_colors_manifest.empty() ||
          sw_in.human.empty()) {
        fail(ErrorKind::kInvalidArgument,
             "layer sweep needs --model, --layers, --stimuli, --color-manifest and --human");
      }
      const StimulusSet stimuli = StimulusSet::load_manifest(sw_stimuli);
      const StimulusSet patches = StimulusSet::load_manifest(sw_colors_manifest);
      const HumanData human = load_human(sw_in.human);
      std::vector<LayerInput> layers;
      for (const auto& layer : sw_layers) {
        ModelSpec spec = ModelSpec::load(sw_model);
        spec.layer_name = layer;
        const FeatureExtractor ex(spec);
        const auto stim = ex.extract_batch(stimuli);
        const auto col = ex.extract_batch(patches);
        LayerInput li;
        li.layer_name = layer;
        li.inputs.data = build_pairs(stim, col, human.table);
        for (const auto& id : li.inputs.data.stimulus_ids) {
          li.inputs.human_labels.push_back(human.majority[human.table.find(id)]);
        }
        if (sw_actual) li.inputs.actual_labels = actual_labels(sw_stimuli, li.inputs.data.stimulus_ids);
        layers.push_back(std::move(li));
      }
      ClassificationConfig cfg;
      cfg.trials = sw_trials;
      cfg.folds = sw_flags.folds;
      cfg.seed = sw_flags.seed;
      cfg.transform = to_config(sw_flags);
      result = sweep_layers(layers, cfg, sw_actual);
      const std::vector<fs::path> files = {sw_model, sw_stimuli, sw_in.human};
      hashes = hash_inputs(files);
    } else {
      fail(ErrorKind::kInvalidArgument, "--axis must be k or layer");
    }
    write_sweep_csv(sw_out + ".csv", result);
    const json j = with_version(sweep_artifact(result, sw_flags.seed, hashes));
    write_json(sw_out + ".json", j);
    print_json(j);
  } else if (*serve_cmd) {
    ExperimentService service(StimulusSet::load_manifest(sv_manifest), sv_data);
    ServerOptions opts;
    opts.ui_dir = sv_ui;
    if (const char* token = std::getenv("EXP_EXPORT_TOKEN"); token && *token) opts.export_token = token;
    std::cerr << "serving " << service.stimuli().size() << " stimuli on " << sv_host << ":" << sv_port
              << (opts.export_token ? "" : " (export disabled: EXP_EXPORT_TOKEN unset)") << '\n';
    serve(service, sv_host, sv_port, opts);
  } else if (*report) {
    const auto artifacts = load_artifacts(rp_in);
    std::optional<json> reference;
    if (!rp_reference.empty()) reference = read_json(rp_reference);
    const json r = build_report(artifacts, reference);
    write_report(rp_in, r);
    print_json({{"report", (fs::path(rp_in) / "report.json").string()},
                {"dataset_hash", r["metadata"]["dataset_hash"]},
                {"artifacts", artifacts.size()}});
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const emocolor::Error& e) {
    std::cerr << json{{"error", std::string(to_string(e.kind()))}, {"message", e.what()}}.dump() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "internal"}, {"message", e.what()}}.dump() << '\n';
    return 1;
  }
}
