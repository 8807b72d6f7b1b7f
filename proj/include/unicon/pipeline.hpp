#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "unicon/datagen.hpp"
#include "unicon/dataprep.hpp"
#include "unicon/encoder.hpp"
#include "unicon/lookalike.hpp"
#include "unicon/recsys.hpp"
#include "unicon/segmentation.hpp"

namespace unicon {

struct ClusterConfig {
  int k = 5;
  std::vector<int> k_list = {3, 4, 5, 6, 8};
  int max_iter = 100;
  double tol = 1e-6;
  int histogram_bins = 20;
  std::size_t style_pairs = 10000;
  // Silhouette cost grows with the square of the consumer count; larger runs
  // evaluate it on a seeded subsample of this size.
  std::size_t silhouette_sample = 2000;
};

struct LookalikeStageConfig {
  int variant = 1;                    // encoder ablation trained by train-lookalike
  std::vector<int> compare_variants;  // optional sweep, written to variant_report.csv
  LookalikeDatasetSpec dataset;
  int score_bins = 20;
};

// One run description. Every stage seed derives from the master seed, so a
// config plus seed pins every artifact byte.
struct PipelineConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  int threads = 1;
  bool reference_mode = true;  // forces single-threaded numerics
  std::string catalog_path;    // empty: <out_dir>/catalog.csv
  std::string events_path;     // empty: <out_dir>/events.csv
  std::string consumers_path;  // empty: <out_dir>/consumers.csv
  GenConfig data;
  VariantSpec prep;
  EncoderConfig encoder;
  TrainConfig train_embedder;
  TrainConfig train_lookalike;
  ClusterConfig cluster;
  LookalikeStageConfig lookalike;
  RepItemParams rep_items;
  RecConfig rec;
  double rec_holdout_fraction = 0.2;
};

// Rejects unknown keys and requires a top-level seed; error messages carry
// the config field path.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json pipeline_config_json(const PipelineConfig& config);

// 16-hex digest of the semantic fields. out_dir and threads stay outside so
// relocating a run does not orphan its artifacts.
std::string config_hash(const PipelineConfig& config);

// manifest.json in the output directory maps each artifact file to the hash
// of the config that produced it.
std::map<std::string, std::string> load_manifest(const std::string& out_dir);
void record_artifacts(const std::string& out_dir, const std::vector<std::string>& names,
                      const std::string& hash);

// Subcommand names in execution order.
const std::vector<std::string>& pipeline_stages();

// Runs one subcommand; throws on failure. The CLI maps exceptions to exit
// codes via exit_code_for.
void run_stage(const std::string& name, const PipelineConfig& config);

// 2 config error, 3 missing prerequisite, 4 numeric failure, 1 otherwise.
int exit_code_for(const std::exception& e);

}  // namespace unicon
