#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "unicon/pipeline.hpp"

namespace {

const char* stage_help(const std::string& name) {
  if (name == "gen-data") return "Generate the synthetic catalog, events, consumers, and ground truth";
  if (name == "prep") return "Build style sequences, lookalike windows, and inference inputs";
  if (name == "train-embedder") return "Train the next-item encoder on style sequences";
  if (name == "embed") return "Encode every consumer into a mean-pooled embedding";
  if (name == "cluster") return "Run spherical k-means over the embeddings";
  if (name == "eval-clusters") return "Sweep k, compute silhouette and embedding-space diagnostics";
  if (name == "train-lookalike") return "Train the core-consumer classifier";
  if (name == "score") return "Score eval and inference consumers with the classifier";
  if (name == "optimize-threshold") return "Pick the F2-optimal threshold and extract lookalikes";
  if (name == "rep-items") return "Rank representative items per segment and gender";
  if (name == "recommend") return "Produce segment-aware recommendation lists";
  if (name == "eval-recs") return "Compare replace/backfill/interleave on held-out clicks";
  if (name == "report") return "Aggregate all artifacts into report.json";
  return "";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Consumer segmentation pipeline: synthetic data, transformer embeddings, "
               "lookalike audiences, and segment-aware recommendations"};
  app.require_subcommand(1, 0);  // one or more stages, run in the order given

  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  int threads = 0;
  int k = 0;
  std::string variant;
  int lookalike_variant = 0;
  std::string approach;

  auto* config_opt = app.add_option("--config", config_path, "JSON run description");
  auto* seed_opt = app.add_option("--seed", seed, "Master seed (required here or in the config)");
  auto* out_opt = app.add_option("--out-dir", out_dir, "Artifact directory");
  auto* threads_opt = app.add_option("--threads", threads, "Worker threads outside reference mode");
  auto* k_opt = app.add_option("--k", k, "Segment count for cluster");
  auto* variant_opt = app.add_option("--variant", variant, "Sequence filtering variant for prep");
  auto* lv_opt = app.add_option("--lookalike-variant", lookalike_variant,
                                "Classifier ablation trained by train-lookalike");
  auto* approach_opt = app.add_option("--approach", approach,
                                      "Recommendation approach: replace, backfill, or interleave");

  for (const auto& name : unicon::pipeline_stages())
    app.add_subcommand(name, stage_help(name))->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    nlohmann::json j = nlohmann::json::object();
    if (config_opt->count() > 0) {
      std::ifstream in(config_path);
      if (!in) throw unicon::ConfigError("cannot open config file " + config_path);
      try {
        in >> j;
      } catch (const nlohmann::json::exception& e) {
        throw unicon::ConfigError(config_path + ": " + e.what());
      }
    }
    if (const char* v = std::getenv("UNICON_OUT_DIR")) j["out_dir"] = v;
    if (const char* v = std::getenv("UNICON_THREADS")) {
      try {
        j["threads"] = std::stoi(v);
      } catch (const std::exception&) {
        throw unicon::ConfigError(std::string("UNICON_THREADS: not an integer: ") + v);
      }
    }
    if (seed_opt->count() > 0) j["seed"] = seed;
    if (out_opt->count() > 0) j["out_dir"] = out_dir;
    if (threads_opt->count() > 0) j["threads"] = threads;
    if (k_opt->count() > 0) j["cluster"]["k"] = k;
    if (variant_opt->count() > 0) j["prep"]["variant"] = variant;
    if (lv_opt->count() > 0) j["lookalike"]["variant"] = lookalike_variant;
    if (approach_opt->count() > 0) j["rec"]["approach"] = approach;

    const unicon::PipelineConfig cfg = unicon::pipeline_config_from_json(j);
    for (const auto* sub : app.get_subcommands()) unicon::run_stage(sub->get_name(), cfg);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return unicon::exit_code_for(e);
  }
}
