#include "unicon/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "unicon/io.hpp"
#include "unicon/metrics.hpp"
#include "unicon/rng.hpp"

namespace unicon {

namespace {

// Wraps one JSON object; reads are type-checked with the config field path in
// every error, and finish() rejects keys nothing consumed.
class JsonReader {
 public:
  JsonReader(const nlohmann::json& j, std::string path) : j_(&j), path_(std::move(path)) {
    if (!j_->is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& field) {
    consumed_.insert(key);
    if (!j_->contains(key)) return;
    try {
      field = j_->at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path_ + "." + key + ": " + e.what());
    }
  }

  bool has(const char* key) const { return j_->contains(key); }

  const nlohmann::json* child(const char* key) {
    consumed_.insert(key);
    if (!j_->contains(key)) return nullptr;
    return &j_->at(key);
  }

  std::string where(const char* key) const { return path_ + "." + key; }

  void finish() const {
    for (auto it = j_->begin(); it != j_->end(); ++it)
      if (consumed_.count(it.key()) == 0) throw ConfigError(path_ + "." + it.key() + ": unknown field");
  }

 private:
  const nlohmann::json* j_;
  std::string path_;
  std::set<std::string> consumed_;
};

template <typename Parse, typename Value>
void get_parsed(JsonReader& r, const char* key, Parse parse, Value& field) {
  std::string text;
  bool present = r.has(key);
  r.get(key, text);
  if (!present) return;
  try {
    field = parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(r.where(key) + ": " + e.what());
  }
}

void read_gen_config(const nlohmann::json& j, GenConfig& c) {
  JsonReader r(j, "config.data");
  r.get("n_consumers", c.n_consumers);
  r.get("n_skus", c.n_skus);
  r.get("n_prototypes", c.n_prototypes);
  r.get("n_brands", c.n_brands);
  r.get("n_colors", c.n_colors);
  r.get("n_silhouettes", c.n_silhouettes);
  r.get("n_commodity_groups", c.n_commodity_groups);
  r.get("n_materials", c.n_materials);
  r.get("n_season_codes", c.n_season_codes);
  r.get("n_tags", c.n_tags);
  r.get("designer_brand_fraction", c.designer_brand_fraction);
  r.get("designer_consumer_fraction", c.designer_consumer_fraction);
  r.get("events_min", c.events_min);
  r.get("events_max", c.events_max);
  r.get("min_designer_interactions", c.min_designer_interactions);
  r.get("style_relevant_fraction", c.style_relevant_fraction);
  r.get("new_consumer_fraction", c.new_consumer_fraction);
  r.get("designer_affinity", c.designer_affinity);
  r.get("concentration", c.concentration);
  r.get("preference_jitter", c.preference_jitter);
  r.get("smoothing", c.smoothing);
  r.get("popularity_exponent", c.popularity_exponent);
  r.get("followed_pref_prob", c.followed_pref_prob);
  r.get("followed_base_prob", c.followed_base_prob);
  r.get("p_click", c.p_click);
  r.get("p_wishlist", c.p_wishlist);
  r.get("p_cart", c.p_cart);
  r.get("p_checkout", c.p_checkout);
  r.get("now", c.now);
  r.get("window_days", c.window_days);
  r.finish();
}

nlohmann::ordered_json gen_config_json(const GenConfig& c) {
  nlohmann::ordered_json j;
  j["n_consumers"] = c.n_consumers;
  j["n_skus"] = c.n_skus;
  j["n_prototypes"] = c.n_prototypes;
  j["n_brands"] = c.n_brands;
  j["n_colors"] = c.n_colors;
  j["n_silhouettes"] = c.n_silhouettes;
  j["n_commodity_groups"] = c.n_commodity_groups;
  j["n_materials"] = c.n_materials;
  j["n_season_codes"] = c.n_season_codes;
  j["n_tags"] = c.n_tags;
  j["designer_brand_fraction"] = c.designer_brand_fraction;
  j["designer_consumer_fraction"] = c.designer_consumer_fraction;
  j["events_min"] = c.events_min;
  j["events_max"] = c.events_max;
  j["min_designer_interactions"] = c.min_designer_interactions;
  j["style_relevant_fraction"] = c.style_relevant_fraction;
  j["new_consumer_fraction"] = c.new_consumer_fraction;
  j["designer_affinity"] = c.designer_affinity;
  j["concentration"] = c.concentration;
  j["preference_jitter"] = c.preference_jitter;
  j["smoothing"] = c.smoothing;
  j["popularity_exponent"] = c.popularity_exponent;
  j["followed_pref_prob"] = c.followed_pref_prob;
  j["followed_base_prob"] = c.followed_base_prob;
  j["p_click"] = c.p_click;
  j["p_wishlist"] = c.p_wishlist;
  j["p_cart"] = c.p_cart;
  j["p_checkout"] = c.p_checkout;
  j["now"] = c.now;
  j["window_days"] = c.window_days;
  return j;
}

void read_train_config(const nlohmann::json& j, const char* path, TrainConfig& c) {
  JsonReader r(j, std::string("config.") + path);
  r.get("epochs", c.epochs);
  r.get("batch_size", c.batch_size);
  r.get("lr", c.lr);
  r.get("beta1", c.beta1);
  r.get("beta2", c.beta2);
  r.get("eps", c.eps);
  r.finish();
}

nlohmann::ordered_json train_config_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["lr"] = c.lr;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["eps"] = c.eps;
  return j;
}

void read_encoder_config(const nlohmann::json& j, EncoderConfig& c) {
  JsonReader r(j, "config.encoder");
  r.get("d_model", c.d_model);
  r.get("n_layers", c.n_layers);
  r.get("n_heads", c.n_heads);
  r.get("d_ff", c.d_ff);
  r.get("max_seq_len", c.max_seq_len);
  get_parsed(r, "numeric_encoding", parse_numeric_encoding, c.numeric_encoding);
  r.get("use_timestamp", c.use_timestamp);
  r.get("class_weighting", c.class_weighting);
  r.get("dropout", c.dropout);
  r.get("ple_bins", c.ple_bins);
  r.finish();
}

void read_dataset_spec(const nlohmann::json& j, LookalikeDatasetSpec& c) {
  JsonReader r(j, "config.lookalike.dataset");
  r.get("min_designer_interactions", c.min_designer_interactions);
  r.get("core_lookback_days", c.core_lookback_days);
  r.get("window_len", c.window_len);
  r.get("max_windows_per_core", c.max_windows_per_core);
  r.get("train_lookback_days", c.train_lookback_days);
  r.get("min_account_age_days", c.min_account_age_days);
  const bool have_actions = r.has("allowed_actions");
  std::vector<std::string> action_names;
  r.get("allowed_actions", action_names);
  if (have_actions) {
    std::set<Action> actions;
    for (const auto& n : action_names) {
      const Action a = parse_action(n);
      if (a == Action::Unknown)
        throw ConfigError(r.where("allowed_actions") + ": unknown action " + n);
      actions.insert(a);
    }
    c.allowed_actions = std::move(actions);
  }
  r.get("eval_fraction", c.eval_fraction);
  r.finish();
}

nlohmann::ordered_json dataset_spec_json(const LookalikeDatasetSpec& c) {
  nlohmann::ordered_json j;
  j["min_designer_interactions"] = c.min_designer_interactions;
  j["core_lookback_days"] = c.core_lookback_days;
  j["window_len"] = c.window_len;
  j["max_windows_per_core"] = c.max_windows_per_core;
  j["train_lookback_days"] = c.train_lookback_days;
  j["min_account_age_days"] = c.min_account_age_days;
  auto actions = nlohmann::ordered_json::array();
  for (Action a : c.allowed_actions) actions.push_back(to_string(a));
  j["allowed_actions"] = std::move(actions);
  j["eval_fraction"] = c.eval_fraction;
  return j;
}

BackfillPositions parse_positions(const std::string& s) {
  if (s == "random") return BackfillPositions::Random;
  if (s == "oldest_first") return BackfillPositions::OldestFirst;
  throw ConfigError("expected random or oldest_first, got " + s);
}

const char* to_string(BackfillPositions p) {
  return p == BackfillPositions::Random ? "random" : "oldest_first";
}

}  // namespace

PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
  PipelineConfig cfg;
  JsonReader top(j, "config");
  if (!top.has("seed")) throw ConfigError("config.seed: required");
  top.get("seed", cfg.seed);
  top.get("out_dir", cfg.out_dir);
  top.get("threads", cfg.threads);
  top.get("reference_mode", cfg.reference_mode);

  if (const auto* pj = top.child("paths")) {
    JsonReader r(*pj, "config.paths");
    r.get("catalog", cfg.catalog_path);
    r.get("events", cfg.events_path);
    r.get("consumers", cfg.consumers_path);
    r.finish();
  }
  if (const auto* dj = top.child("data")) read_gen_config(*dj, cfg.data);
  if (const auto* pj = top.child("prep")) {
    JsonReader r(*pj, "config.prep");
    get_parsed(r, "variant", parse_variant, cfg.prep.variant);
    const bool have_silhouettes = r.has("style_relevant_silhouettes");
    std::vector<std::string> names;
    r.get("style_relevant_silhouettes", names);
    if (have_silhouettes) {
      cfg.prep.style_relevant_silhouettes.clear();
      cfg.prep.style_relevant_silhouettes.insert(names.begin(), names.end());
    }
    r.get("lookback_days", cfg.prep.lookback_days);
    r.finish();
  }
  if (const auto* ej = top.child("encoder")) read_encoder_config(*ej, cfg.encoder);
  if (const auto* tj = top.child("train_embedder"))
    read_train_config(*tj, "train_embedder", cfg.train_embedder);
  if (const auto* tj = top.child("train_lookalike"))
    read_train_config(*tj, "train_lookalike", cfg.train_lookalike);

  if (const auto* cj = top.child("cluster")) {
    JsonReader r(*cj, "config.cluster");
    r.get("k", cfg.cluster.k);
    r.get("k_list", cfg.cluster.k_list);
    r.get("max_iter", cfg.cluster.max_iter);
    r.get("tol", cfg.cluster.tol);
    r.get("histogram_bins", cfg.cluster.histogram_bins);
    r.get("style_pairs", cfg.cluster.style_pairs);
    r.get("silhouette_sample", cfg.cluster.silhouette_sample);
    r.finish();
  }
  if (const auto* lj = top.child("lookalike")) {
    JsonReader r(*lj, "config.lookalike");
    r.get("variant", cfg.lookalike.variant);
    r.get("compare_variants", cfg.lookalike.compare_variants);
    r.get("score_bins", cfg.lookalike.score_bins);
    if (const auto* dj = r.child("dataset")) read_dataset_spec(*dj, cfg.lookalike.dataset);
    r.finish();
  }
  if (const auto* rj = top.child("rep_items")) {
    JsonReader r(*rj, "config.rep_items");
    r.get("top_n", cfg.rep_items.top_n);
    r.get("radius_quantile", cfg.rep_items.radius_quantile);
    r.get("max_group_share", cfg.rep_items.max_group_share);
    r.finish();
  }
  if (const auto* rj = top.child("rec")) {
    JsonReader r(*rj, "config.rec");
    get_parsed(r, "approach", parse_rec_approach, cfg.rec.approach);
    r.get("backfill_fraction", cfg.rec.backfill_fraction);
    r.get("list_length", cfg.rec.list_length);
    get_parsed(r, "positions", parse_positions, cfg.rec.positions);
    r.get("holdout_fraction", cfg.rec_holdout_fraction);
    r.finish();
  }
  top.finish();
  return cfg;
}

nlohmann::ordered_json pipeline_config_json(const PipelineConfig& cfg) {
  nlohmann::ordered_json j;
  j["seed"] = cfg.seed;
  j["out_dir"] = cfg.out_dir;
  j["threads"] = cfg.threads;
  j["reference_mode"] = cfg.reference_mode;
  j["paths"] = {{"catalog", cfg.catalog_path},
                {"events", cfg.events_path},
                {"consumers", cfg.consumers_path}};
  j["data"] = gen_config_json(cfg.data);
  auto prep = nlohmann::ordered_json::object();
  prep["variant"] = to_string(cfg.prep.variant);
  prep["style_relevant_silhouettes"] = cfg.prep.style_relevant_silhouettes;
  prep["lookback_days"] = cfg.prep.lookback_days;
  j["prep"] = std::move(prep);
  auto encoder = encoder_config_json(cfg.encoder);
  encoder.erase("seed");  // always derived from the master seed
  j["encoder"] = std::move(encoder);
  j["train_embedder"] = train_config_json(cfg.train_embedder);
  j["train_lookalike"] = train_config_json(cfg.train_lookalike);
  auto cluster = nlohmann::ordered_json::object();
  cluster["k"] = cfg.cluster.k;
  cluster["k_list"] = cfg.cluster.k_list;
  cluster["max_iter"] = cfg.cluster.max_iter;
  cluster["tol"] = cfg.cluster.tol;
  cluster["histogram_bins"] = cfg.cluster.histogram_bins;
  cluster["style_pairs"] = cfg.cluster.style_pairs;
  cluster["silhouette_sample"] = cfg.cluster.silhouette_sample;
  j["cluster"] = std::move(cluster);
  auto lookalike = nlohmann::ordered_json::object();
  lookalike["variant"] = cfg.lookalike.variant;
  lookalike["compare_variants"] = cfg.lookalike.compare_variants;
  lookalike["score_bins"] = cfg.lookalike.score_bins;
  lookalike["dataset"] = dataset_spec_json(cfg.lookalike.dataset);
  j["lookalike"] = std::move(lookalike);
  auto rep = nlohmann::ordered_json::object();
  rep["top_n"] = cfg.rep_items.top_n;
  rep["radius_quantile"] = cfg.rep_items.radius_quantile;
  rep["max_group_share"] = cfg.rep_items.max_group_share;
  j["rep_items"] = std::move(rep);
  auto rec = nlohmann::ordered_json::object();
  rec["approach"] = to_string(cfg.rec.approach);
  rec["backfill_fraction"] = cfg.rec.backfill_fraction;
  rec["list_length"] = cfg.rec.list_length;
  rec["positions"] = to_string(cfg.rec.positions);
  rec["holdout_fraction"] = cfg.rec_holdout_fraction;
  j["rec"] = std::move(rec);
  return j;
}

std::string config_hash(const PipelineConfig& cfg) {
  auto j = pipeline_config_json(cfg);
  j.erase("out_dir");
  j.erase("threads");
  const std::uint64_t h = derive_seed(0, j.dump());
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

std::map<std::string, std::string> load_manifest(const std::string& out_dir) {
  const std::string path = out_dir + "/manifest.json";
  std::ifstream in(path);
  if (!in) return {};
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  if (!j.is_object()) throw FormatError(path + ": expected an object");
  std::map<std::string, std::string> manifest;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!it.value().is_string()) throw FormatError(path + ": hash for " + it.key() + " not a string");
    manifest[it.key()] = it.value().get<std::string>();
  }
  return manifest;
}

void record_artifacts(const std::string& out_dir, const std::vector<std::string>& names,
                      const std::string& hash) {
  auto manifest = load_manifest(out_dir);
  for (const auto& name : names) manifest[name] = hash;
  nlohmann::ordered_json j;
  for (const auto& [name, h] : manifest) j[name] = h;
  const std::string path = out_dir + "/manifest.json";
  std::ofstream out(path);
  if (!out) throw MissingArtifactError("cannot open " + path + " for writing");
  out << j.dump(2) << "\n";
}

namespace {

std::string out_path(const PipelineConfig& cfg, const std::string& name) {
  return cfg.out_dir + "/" + name;
}

void need(const std::string& path, const std::string& producer) {
  if (!std::filesystem::exists(path))
    throw MissingArtifactError(path + " missing; run " + producer);
}

std::string catalog_location(const PipelineConfig& cfg) {
  return cfg.catalog_path.empty() ? out_path(cfg, "catalog.csv") : cfg.catalog_path;
}
std::string events_location(const PipelineConfig& cfg) {
  return cfg.events_path.empty() ? out_path(cfg, "events.csv") : cfg.events_path;
}
std::string consumers_location(const PipelineConfig& cfg) {
  return cfg.consumers_path.empty() ? out_path(cfg, "consumers.csv") : cfg.consumers_path;
}

Catalog load_catalog_input(const PipelineConfig& cfg) {
  const auto path = catalog_location(cfg);
  need(path, "gen-data");
  return load_catalog(path);
}
std::vector<InteractionEvent> load_events_input(const PipelineConfig& cfg) {
  const auto path = events_location(cfg);
  need(path, "gen-data");
  return load_events(path);
}
std::vector<ConsumerProfile> load_consumers_input(const PipelineConfig& cfg) {
  const auto path = consumers_location(cfg);
  need(path, "gen-data");
  return load_consumers(path);
}

std::vector<LabeledSequence> load_artifact_sequences(const PipelineConfig& cfg,
                                                     const std::string& name,
                                                     const std::string& producer) {
  const auto path = out_path(cfg, name);
  need(path, producer);
  return load_sequences(path);
}

std::vector<LabeledSequence> to_labeled(const std::vector<ConsumerHistory>& histories,
                                        const std::vector<ConsumerProfile>& profiles) {
  std::map<std::string, const ConsumerProfile*> index;
  for (const auto& p : profiles) index[p.consumer_id] = &p;
  std::vector<LabeledSequence> out;
  out.reserve(histories.size());
  for (const auto& h : histories) {
    const auto it = index.find(base_consumer_id(h.consumer_id));
    if (it == index.end()) throw InvalidArgument("no profile for consumer " + h.consumer_id);
    LabeledSequence s;
    s.consumer_id = h.consumer_id;
    s.events = h.events;
    s.gender_preference = it->second->gender_preference;
    s.age_segment = it->second->age_segment;
    s.sales_channel = it->second->sales_channel;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<ConsumerHistory> to_histories(const std::vector<LabeledSequence>& seqs) {
  std::vector<ConsumerHistory> out;
  out.reserve(seqs.size());
  for (const auto& s : seqs) out.push_back({s.consumer_id, s.events});
  return out;
}

// The encoder rejects longer inputs, so keep the most recent events.
void truncate_to_window(std::vector<LabeledSequence>& seqs, int max_len) {
  for (auto& s : seqs) {
    if (s.events.size() > static_cast<std::size_t>(max_len))
      s.events.erase(s.events.begin(),
                     s.events.end() - static_cast<std::ptrdiff_t>(max_len));
  }
}

void save_train_log(const TrainReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw MissingArtifactError("cannot open " + path + " for writing");
  out << "epoch,loss\n";
  for (std::size_t i = 0; i < report.epoch_losses.size(); ++i)
    out << (i + 1) << ',' << format_double(report.epoch_losses[i]) << '\n';
}

void save_segments(const EmbeddingSet& set, const std::vector<int>& assignments,
                   const std::string& path) {
  std::ofstream out(path);
  if (!out) throw MissingArtifactError("cannot open " + path + " for writing");
  out << "consumer_id,segment_id\n";
  for (std::size_t i = 0; i < set.consumer_ids.size(); ++i)
    out << set.consumer_ids[i] << ',' << assignments[i] << '\n';
}

void save_cluster_state(const KMeansResult& result, const EmbeddingSet& set,
                        const std::string& path) {
  nlohmann::ordered_json j;
  j["k"] = result.k;
  j["seed"] = result.seed;
  j["iterations"] = result.iterations;
  j["inertia"] = result.inertia;
  j["inertia_history"] = result.inertia_history;
  j["checkpoint"] = set.checkpoint;
  auto centroids = nlohmann::ordered_json::array();
  for (Eigen::Index r = 0; r < result.centroids.rows(); ++r) {
    auto row = nlohmann::ordered_json::array();
    for (Eigen::Index c = 0; c < result.centroids.cols(); ++c) row.push_back(result.centroids(r, c));
    centroids.push_back(std::move(row));
  }
  j["centroids"] = std::move(centroids);
  j["assignments"] = result.assignments;
  std::ofstream out(path);
  if (!out) throw MissingArtifactError("cannot open " + path + " for writing");
  out << j.dump(2) << "\n";
}

KMeansResult load_cluster_state(const PipelineConfig& cfg) {
  const auto path = out_path(cfg, "cluster.json");
  need(path, "cluster");
  std::ifstream in(path);
  nlohmann::json j;
  try {
    in >> j;
    KMeansResult result;
    result.k = j.at("k").get<int>();
    result.seed = j.at("seed").get<std::uint64_t>();
    result.iterations = j.at("iterations").get<int>();
    result.inertia = j.at("inertia").get<double>();
    result.inertia_history = j.at("inertia_history").get<std::vector<double>>();
    result.assignments = j.at("assignments").get<std::vector<int>>();
    const auto& cents = j.at("centroids");
    const auto rows = static_cast<Eigen::Index>(cents.size());
    const auto cols = rows > 0 ? static_cast<Eigen::Index>(cents.at(0).size()) : 0;
    result.centroids.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c)
        result.centroids(r, c) = cents.at(static_cast<std::size_t>(r))
                                     .at(static_cast<std::size_t>(c))
                                     .get<double>();
    return result;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void save_rep_items_csv(const RepresentativeItems& rep, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw MissingArtifactError("cannot open " + path + " for writing");
  out << "segment_id,gender,rank,sku,popularity\n";
  for (const auto& [segment, lists] : rep.by_segment)
    for (const auto& [gender, items] : lists)
      for (std::size_t i = 0; i < items.size(); ++i)
        out << segment << ',' << gender << ',' << (i + 1) << ',' << items[i].sku << ','
            << items[i].popularity << '\n';
}

std::map<int, GenderLists> load_rep_items_csv(const PipelineConfig& cfg) {
  const auto path = out_path(cfg, "rep_items.csv");
  need(path, "rep-items");
  std::ifstream in(path);
  std::string line;
  if (!std::getline(in, line) || line != "segment_id,gender,rank,sku,popularity")
    throw FormatError(path + ": unexpected header");
  std::map<int, GenderLists> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != 5)
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected 5 fields");
    try {
      out[std::stoi(fields[0])][fields[1]].push_back(
          {fields[3], static_cast<std::size_t>(std::stoull(fields[4]))});
    } catch (const std::exception&) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": malformed row");
    }
  }
  return out;
}

// One ranked list per segment for evaluation: gender lists merged, ranked by
// popularity (ties to the lower sku).
std::vector<RankedItem> merged_lists(const GenderLists& lists) {
  std::map<std::string, std::size_t> best;
  for (const auto& [gender, items] : lists)
    for (const auto& item : items) {
      auto [it, inserted] = best.try_emplace(item.sku, item.popularity);
      if (!inserted) it->second = std::max(it->second, item.popularity);
    }
  std::vector<RankedItem> out;
  out.reserve(best.size());
  for (const auto& [sku, pop] : best) out.push_back({sku, pop});
  std::stable_sort(out.begin(), out.end(), [](const RankedItem& a, const RankedItem& b) {
    if (a.popularity != b.popularity) return a.popularity > b.popularity;
    return a.sku < b.sku;
  });
  return out;
}

struct ScoredRows {
  std::vector<std::string> ids;
  std::vector<double> scores;
  std::vector<bool> labels;
  std::vector<std::size_t> designer_events;
};

ScoredRows load_scores_csv(const PipelineConfig& cfg) {
  const auto path = out_path(cfg, "scores.csv");
  need(path, "score");
  std::ifstream in(path);
  std::string line;
  if (!std::getline(in, line) || line != "consumer_id,score,label,designer_events")
    throw FormatError(path + ": unexpected header");
  ScoredRows rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != 4)
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected 4 fields");
    try {
      rows.ids.push_back(fields[0]);
      rows.scores.push_back(std::stod(fields[1]));
      rows.labels.push_back(std::stoi(fields[2]) != 0);
      rows.designer_events.push_back(static_cast<std::size_t>(std::stoull(fields[3])));
    } catch (const std::exception&) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": malformed row");
    }
  }
  return rows;
}

std::map<std::string, double> load_inference_scores_csv(const PipelineConfig& cfg) {
  const auto path = out_path(cfg, "inference_scores.csv");
  need(path, "score");
  std::ifstream in(path);
  std::string line;
  if (!std::getline(in, line) || line != "consumer_id,score")
    throw FormatError(path + ": unexpected header");
  std::map<std::string, double> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != 2)
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected 2 fields");
    try {
      out[fields[0]] = std::stod(fields[1]);
    } catch (const std::exception&) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": malformed row");
    }
  }
  return out;
}

std::set<std::string> load_core_csv(const PipelineConfig& cfg) {
  const auto path = out_path(cfg, "core_consumers.csv");
  need(path, "prep");
  std::ifstream in(path);
  std::string line;
  if (!std::getline(in, line) || line != "consumer_id")
    throw FormatError(path + ": unexpected header");
  std::set<std::string> out;
  while (std::getline(in, line))
    if (!line.empty()) out.insert(line);
  return out;
}

void ensure_out_dir(const PipelineConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
}

void check_window_fits(const PipelineConfig& cfg) {
  if (cfg.lookalike.dataset.window_len > static_cast<std::size_t>(cfg.encoder.max_seq_len))
    throw ConfigError("config.lookalike.dataset.window_len exceeds config.encoder.max_seq_len");
}

// ---------------------------------------------------------------------------

void stage_gen_data(const PipelineConfig& cfg) {
  GenConfig data = cfg.data;
  data.seed = derive_seed(cfg.seed, "datagen");
  data.validate();
  ensure_out_dir(cfg);
  const Catalog catalog = generate_catalog(data);
  const GeneratedData gen = generate_consumers(data, catalog);
  save_catalog(catalog, out_path(cfg, "catalog.csv"));
  save_events(flatten_histories(gen.histories), out_path(cfg, "events.csv"));
  save_consumers(gen.profiles, out_path(cfg, "consumers.csv"));
  save_ground_truth(gen.truth, out_path(cfg, "ground_truth.csv"));
  record_artifacts(cfg.out_dir,
                   {"catalog.csv", "events.csv", "consumers.csv", "ground_truth.csv"},
                   config_hash(cfg));
}

void stage_prep(const PipelineConfig& cfg) {
  const Catalog catalog = load_catalog_input(cfg);
  const auto events = load_events_input(cfg);
  const auto consumers = load_consumers_input(cfg);
  const auto histories = group_into_histories(events);
  cfg.lookalike.dataset.validate();
  ensure_out_dir(cfg);

  const auto style_histories = apply_variant(histories, catalog, cfg.prep, cfg.data.now);
  const auto style_seqs = to_labeled(style_histories, consumers);
  save_sequences(style_seqs, out_path(cfg, "style_sequences.jsonl"));

  const auto core = label_core_designers(histories, catalog, cfg.lookalike.dataset, cfg.data.now);
  const auto dataset =
      build_lookalike_dataset(histories, consumers, core, cfg.lookalike.dataset, cfg.data.now,
                              derive_seed(cfg.seed, "lookalike-split"));
  save_sequences(dataset.train, out_path(cfg, "lookalike_train.jsonl"));
  save_sequences(dataset.eval, out_path(cfg, "lookalike_eval.jsonl"));
  const auto inference =
      build_inference_sequences(histories, consumers, core, cfg.lookalike.dataset);
  save_sequences(inference, out_path(cfg, "inference_sequences.jsonl"));

  {
    const auto path = out_path(cfg, "core_consumers.csv");
    std::ofstream out(path);
    if (!out) throw MissingArtifactError("cannot open " + path + " for writing");
    out << "consumer_id\n";
    for (const auto& id : core) out << id << '\n';
  }
  record_artifacts(cfg.out_dir,
                   {"style_sequences.jsonl", "lookalike_train.jsonl", "lookalike_eval.jsonl",
                    "inference_sequences.jsonl", "core_consumers.csv"},
                   config_hash(cfg));
}

void stage_train_embedder(const PipelineConfig& cfg) {
  const Catalog catalog = load_catalog_input(cfg);
  auto seqs = load_artifact_sequences(cfg, "style_sequences.jsonl", "prep");
  if (seqs.empty())
    throw InvalidArgument("style_sequences.jsonl holds no sequences; check the prep variant");
  EncoderConfig ec = cfg.encoder;
  ec.seed = derive_seed(cfg.seed, "init:embedder");
  ec.validate();
  truncate_to_window(seqs, ec.max_seq_len);

  Tokenizer tokenizer;
  tokenizer.fit(catalog, seqs, ec.ple_bins);
  Model<double> model(ec, tokenizer);
  TrainConfig tc = cfg.train_embedder;
  tc.seed = derive_seed(cfg.seed, "train:embedder");
  const auto report = train_next_item(model, tokenizer.encode_all(seqs, catalog), tc);
  ensure_out_dir(cfg);
  save_checkpoint(out_path(cfg, "embedder.ckpt"), tokenizer, model);
  save_train_log(report, out_path(cfg, "embedder_train_log.csv"));
  record_artifacts(cfg.out_dir, {"embedder.ckpt", "embedder_train_log.csv"}, config_hash(cfg));
}

void stage_embed(const PipelineConfig& cfg) {
  const Catalog catalog = load_catalog_input(cfg);
  const auto ckpt_path = out_path(cfg, "embedder.ckpt");
  need(ckpt_path, "train-embedder");
  auto ckpt = load_checkpoint(ckpt_path);
  auto seqs = load_artifact_sequences(cfg, "style_sequences.jsonl", "prep");
  if (seqs.empty()) throw InvalidArgument("style_sequences.jsonl holds no sequences");
  truncate_to_window(seqs, ckpt.model.config().max_seq_len);

  EmbeddingSet set;
  set.vectors = extract_embeddings(ckpt.model, ckpt.tokenizer.encode_all(seqs, catalog));
  for (const auto& s : seqs) set.consumer_ids.push_back(s.consumer_id);
  set.checkpoint = model_fingerprint(ckpt.tokenizer, ckpt.model.config());
  save_embeddings(set, out_path(cfg, "embeddings.bin"));
  record_artifacts(cfg.out_dir, {"embeddings.bin"}, config_hash(cfg));
}

void stage_cluster(const PipelineConfig& cfg) {
  const auto set = load_embeddings(out_path(cfg, "embeddings.bin"));
  if (cfg.cluster.k < 1) throw ConfigError("config.cluster.k: must be at least 1");
  const auto result = kmeans(set.vectors, cfg.cluster.k, derive_seed(cfg.seed, "kmeans"),
                             cfg.cluster.max_iter, cfg.cluster.tol);
  save_segments(set, result.assignments, out_path(cfg, "segments.csv"));
  save_cluster_state(result, set, out_path(cfg, "cluster.json"));
  record_artifacts(cfg.out_dir, {"segments.csv", "cluster.json"}, config_hash(cfg));
}

void stage_eval_clusters(const PipelineConfig& cfg) {
  const auto set = load_embeddings(out_path(cfg, "embeddings.bin"));
  const Catalog catalog = load_catalog_input(cfg);
  const auto seqs = load_artifact_sequences(cfg, "style_sequences.jsonl", "prep");
  if (seqs.size() != set.consumer_ids.size())
    throw ConfigError("style sequences and embeddings disagree; rerun embed");
  const auto histories = to_histories(seqs);
  const auto n = static_cast<std::size_t>(set.vectors.rows());

  std::vector<int> ks = cfg.cluster.k_list;
  if (std::find(ks.begin(), ks.end(), cfg.cluster.k) == ks.end()) ks.push_back(cfg.cluster.k);
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());

  const auto report_path = out_path(cfg, "cluster_report.csv");
  std::ofstream report(report_path);
  if (!report) throw MissingArtifactError("cannot open " + report_path + " for writing");
  report << "k,inertia,iterations,silhouette,selected\n";
  for (int k : ks) {
    if (k < 1 || static_cast<std::size_t>(k) > n) continue;
    const bool selected = k == cfg.cluster.k;
    const auto key = selected ? std::string("kmeans") : "kmeans:k" + std::to_string(k);
    const auto result =
        kmeans(set.vectors, k, derive_seed(cfg.seed, key), cfg.cluster.max_iter, cfg.cluster.tol);

    std::string sil;
    if (k >= 2) {
      Eigen::MatrixXd points = set.vectors;
      std::vector<int> assignments = result.assignments;
      if (n > cfg.cluster.silhouette_sample && cfg.cluster.silhouette_sample > 0) {
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        Rng rng(derive_seed(cfg.seed, "silhouette:k" + std::to_string(k)));
        rng.shuffle(idx);
        idx.resize(cfg.cluster.silhouette_sample);
        points.resize(static_cast<Eigen::Index>(idx.size()), set.vectors.cols());
        assignments.resize(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
          points.row(static_cast<Eigen::Index>(i)) =
              set.vectors.row(static_cast<Eigen::Index>(idx[i]));
          assignments[i] = result.assignments[idx[i]];
        }
      }
      try {
        sil = format_double(silhouette(points, assignments));
      } catch (const InvalidArgument&) {
        sil.clear();  // a subsample can lose a whole cluster
      }
    }
    report << k << ',' << format_double(result.inertia) << ',' << result.iterations << ',' << sil
           << ',' << (selected ? 1 : 0) << '\n';
  }
  report.close();

  const auto primary = kmeans(set.vectors, cfg.cluster.k, derive_seed(cfg.seed, "kmeans"),
                              cfg.cluster.max_iter, cfg.cluster.tol);
  const auto stats = center_distance_stats(primary, set.vectors, cfg.cluster.histogram_bins);
  {
    const auto path = out_path(cfg, "segment_stats.csv");
    std::ofstream out(path);
    if (!out) throw MissingArtifactError("cannot open " + path + " for writing");
    out << "segment_id,size,mean_distance,std_distance\n";
    for (std::size_t s = 0; s < stats.sizes.size(); ++s)
      out << s << ',' << stats.sizes[s] << ',' << format_double(stats.mean_distance[s]) << ','
          << format_double(stats.std_distance[s]) << '\n';
  }
  {
    const auto path = out_path(cfg, "distance_hist.csv");
    std::ofstream out(path);
    if (!out) throw MissingArtifactError("cannot open " + path + " for writing");
    out << "bin_lo,bin_hi,count\n";
    for (std::size_t b = 0; b + 1 < stats.histogram_edges.size(); ++b)
      out << format_double(stats.histogram_edges[b]) << ','
          << format_double(stats.histogram_edges[b + 1]) << ',' << stats.histogram_counts[b]
          << '\n';
  }

  const auto space =
      evaluate_embedding_space(set.vectors, histories, AttributeWeights::uniform_default(),
                               catalog, cfg.cluster.style_pairs, derive_seed(cfg.seed, "style-pairs"));
  {
    const auto path = out_path(cfg, "embedding_space.csv");
    std::ofstream out(path);
    if (!out) throw MissingArtifactError("cannot open " + path + " for writing");
    out << "metric,pearson,n_pairs\n";
    out << "dot," << format_double(space.pearson_dot) << ',' << space.pairs.size() << '\n';
    out << "cosine," << format_double(space.pearson_cosine) << ',' << space.pairs.size() << '\n';
    out << "euclidean," << format_double(space.pearson_euclidean) << ',' << space.pairs.size()
        << '\n';
  }

  std::vector<std::pair<double, double>> decay_pairs;
  decay_pairs.reserve(space.pairs.size());
  for (const auto& p : space.pairs) decay_pairs.push_back({p.euclidean, p.style});
  nlohmann::ordered_json decay;
  {
    const auto path = out_path(cfg, "similarity_decay.csv");
    std::ofstream out(path);
    if (!out) throw MissingArtifactError("cannot open " + path + " for writing");
    out << "distance,mean_similarity,fitted\n";
    try {
      const auto fit = fit_length_scale(decay_pairs);
      decay["lambda"] = fit.lambda;
      decay["amplitude"] = fit.amplitude;
      for (std::size_t i = 0; i < fit.bin_centers.size(); ++i)
        out << format_double(fit.bin_centers[i]) << ',' << format_double(fit.bin_means[i]) << ','
            << format_double(fit.amplitude * std::exp(-fit.bin_centers[i] / fit.lambda)) << '\n';
    } catch (const NumericError& e) {
      decay["error"] = e.what();  // flat similarity surface is a result, not a crash
    }
  }
  {
    const auto path = out_path(cfg, "decay.json");
    std::ofstream out(path);
    if (!out) throw MissingArtifactError("cannot open " + path + " for writing");
    out << decay.dump(2) << "\n";
  }
  record_artifacts(cfg.out_dir,
                   {"cluster_report.csv", "segment_stats.csv", "distance_hist.csv",
                    "embedding_space.csv", "similarity_decay.csv", "decay.json"},
                   config_hash(cfg));
}

void stage_train_lookalike(const PipelineConfig& cfg) {
  check_window_fits(cfg);
  const Catalog catalog = load_catalog_input(cfg);
  const auto train = load_artifact_sequences(cfg, "lookalike_train.jsonl", "prep");
  if (train.empty()) throw InvalidArgument("lookalike_train.jsonl holds no sequences");

  EncoderConfig vc = variant_config(cfg.lookalike.variant, cfg.encoder);
  vc.seed = derive_seed(cfg.seed, "init:lookalike");
  vc.validate();
  Tokenizer tokenizer;
  tokenizer.fit(catalog, train, vc.ple_bins);
  Model<double> model(vc, tokenizer);
  TrainConfig tc = cfg.train_lookalike;
  tc.seed = derive_seed(cfg.seed, "train:lookalike");
  const auto report = train_classifier(model, tokenizer.encode_all(train, catalog), tc);
  ensure_out_dir(cfg);
  save_checkpoint(out_path(cfg, "lookalike.ckpt"), tokenizer, model);
  save_train_log(report, out_path(cfg, "lookalike_train_log.csv"));
  std::vector<std::string> artifacts = {"lookalike.ckpt", "lookalike_train_log.csv"};

  if (!cfg.lookalike.compare_variants.empty()) {
    LookalikeDataset dataset;
    dataset.train = train;
    dataset.eval = load_artifact_sequences(cfg, "lookalike_eval.jsonl", "prep");
    const auto comparison =
        run_variant_comparison(catalog, dataset, cfg.encoder, cfg.train_lookalike,
                               cfg.lookalike.compare_variants,
                               derive_seed(cfg.seed, "variant-comparison"));
    save_variant_report(comparison, out_path(cfg, "variant_report.csv"));
    artifacts.push_back("variant_report.csv");
  }
  record_artifacts(cfg.out_dir, artifacts, config_hash(cfg));
}

void stage_score(const PipelineConfig& cfg) {
  check_window_fits(cfg);
  const Catalog catalog = load_catalog_input(cfg);
  const auto ckpt_path = out_path(cfg, "lookalike.ckpt");
  need(ckpt_path, "train-lookalike");
  auto ckpt = load_checkpoint(ckpt_path);
  const auto eval = load_artifact_sequences(cfg, "lookalike_eval.jsonl", "prep");
  const auto inference = load_artifact_sequences(cfg, "inference_sequences.jsonl", "prep");

  std::map<std::string, std::size_t> designer_events;
  for (const auto& h : group_into_histories(load_events_input(cfg)))
    designer_events[h.consumer_id] = designer_interaction_count(
        h, catalog, cfg.data.now, cfg.lookalike.dataset.core_lookback_days);

  ensure_out_dir(cfg);
  {
    const auto path = out_path(cfg, "scores.csv");
    std::ofstream out(path);
    if (!out) throw MissingArtifactError("cannot open " + path + " for writing");
    out << "consumer_id,score,label,designer_events\n";
    for (const auto& s : eval) {
      if (s.label == SeqLabel::None)
        throw InvalidArgument("unlabeled sequence in lookalike_eval.jsonl: " + s.consumer_id);
      const double score = score_consumer(ckpt.model, ckpt.tokenizer.encode(s, catalog));
      const auto it = designer_events.find(base_consumer_id(s.consumer_id));
      out << s.consumer_id << ',' << format_double(score) << ','
          << (s.label == SeqLabel::Core ? 1 : 0) << ','
          << (it == designer_events.end() ? 0 : it->second) << '\n';
    }
  }
  {
    const auto path = out_path(cfg, "inference_scores.csv");
    std::ofstream out(path);
    if (!out) throw MissingArtifactError("cannot open " + path + " for writing");
    out << "consumer_id,score\n";
    for (const auto& s : inference) {
      const double score = score_consumer(ckpt.model, ckpt.tokenizer.encode(s, catalog));
      out << s.consumer_id << ',' << format_double(score) << '\n';
    }
  }
  record_artifacts(cfg.out_dir, {"scores.csv", "inference_scores.csv"}, config_hash(cfg));
}

void stage_optimize_threshold(const PipelineConfig& cfg) {
  const auto rows = load_scores_csv(cfg);
  const auto curve = sweep_thresholds(rows.scores, rows.labels);
  save_threshold_curve(curve, out_path(cfg, "threshold_curve.csv"));
  const double tau = optimize_threshold(curve);
  const auto at_tau = classification_metrics(rows.scores, rows.labels, tau);

  const auto dist =
      score_distribution_report(rows.scores, rows.labels, rows.designer_events,
                                cfg.lookalike.score_bins);
  {
    const auto path = out_path(cfg, "score_distribution.csv");
    std::ofstream out(path);
    if (!out) throw MissingArtifactError("cannot open " + path + " for writing");
    out << "bin_lo,bin_hi,core,non_core_zero_designer,non_core_with_designer\n";
    for (std::size_t b = 0; b + 1 < dist.edges.size(); ++b)
      out << format_double(dist.edges[b]) << ',' << format_double(dist.edges[b + 1]) << ','
          << dist.core[b] << ',' << dist.zero_designer[b] << ',' << dist.with_designer[b] << '\n';
  }

  const auto inference_scores = load_inference_scores_csv(cfg);
  const auto core = load_core_csv(cfg);
  const auto lookalikes = extract_lookalikes(inference_scores, core, tau);
  save_lookalikes(inference_scores, lookalikes, out_path(cfg, "lookalikes.csv"));

  nlohmann::ordered_json j;
  j["tau"] = tau;
  j["f2"] = at_tau.f2;
  j["precision"] = at_tau.precision;
  j["recall"] = at_tau.recall;
  j["average_precision"] = at_tau.average_precision;
  j["n_eval"] = rows.scores.size();
  j["n_lookalikes"] = lookalikes.size();
  j["core_mean_score"] = dist.core_mean;
  j["zero_designer_mean_score"] = dist.zero_designer_mean;
  j["with_designer_mean_score"] = dist.with_designer_mean;
  {
    const auto path = out_path(cfg, "threshold.json");
    std::ofstream out(path);
    if (!out) throw MissingArtifactError("cannot open " + path + " for writing");
    out << j.dump(2) << "\n";
  }
  record_artifacts(cfg.out_dir,
                   {"threshold_curve.csv", "score_distribution.csv", "threshold.json",
                    "lookalikes.csv"},
                   config_hash(cfg));
}

void stage_rep_items(const PipelineConfig& cfg) {
  const auto set = load_embeddings(out_path(cfg, "embeddings.bin"));
  const auto result = load_cluster_state(cfg);
  if (result.assignments.size() != static_cast<std::size_t>(set.vectors.rows()))
    throw ConfigError("cluster.json does not match embeddings.bin; rerun cluster");
  const Catalog catalog = load_catalog_input(cfg);
  const auto consumers = load_consumers_input(cfg);
  const auto seqs = load_artifact_sequences(cfg, "style_sequences.jsonl", "prep");
  if (seqs.size() != set.consumer_ids.size())
    throw ConfigError("style sequences and embeddings disagree; rerun embed");
  const auto rep =
      representative_items_all(result, set, to_histories(seqs), consumers, catalog, cfg.rep_items);
  save_rep_items_csv(rep, out_path(cfg, "rep_items.csv"));
  record_artifacts(cfg.out_dir, {"rep_items.csv"}, config_hash(cfg));
}

struct RecInputs {
  Checkpoint ckpt;
  Catalog catalog;
  std::vector<LabeledSequence> seqs;
  std::vector<int> assignments;
  std::map<int, GenderLists> rep;
};

RecInputs load_rec_inputs(const PipelineConfig& cfg) {
  const auto ckpt_path = out_path(cfg, "embedder.ckpt");
  need(ckpt_path, "train-embedder");
  RecInputs in{load_checkpoint(ckpt_path),
               load_catalog_input(cfg),
               load_artifact_sequences(cfg, "style_sequences.jsonl", "prep"),
               {},
               {}};
  in.assignments = load_cluster_state(cfg).assignments;
  if (in.assignments.size() != in.seqs.size())
    throw ConfigError("cluster.json does not match style sequences; rerun embed and cluster");
  in.rep = load_rep_items_csv(cfg);
  truncate_to_window(in.seqs, in.ckpt.model.config().max_seq_len);
  return in;
}

void stage_recommend(const PipelineConfig& cfg) {
  auto in = load_rec_inputs(cfg);
  RecConfig rc = cfg.rec;
  rc.seed = derive_seed(cfg.seed, "recs");
  const auto base = model_recommender(in.ckpt.model, in.ckpt.tokenizer, in.catalog);

  std::vector<RecRow> rows;
  for (std::size_t i = 0; i < in.seqs.size(); ++i) {
    const auto& seq = in.seqs[i];
    const auto seg = in.rep.find(in.assignments[i]);
    if (seg == in.rep.end()) continue;
    const auto glist = seg->second.find(seq.gender_preference);
    const auto rep = glist != seg->second.end() ? glist->second : merged_lists(seg->second);
    if (rep.empty()) continue;
    std::vector<std::string> recs;
    switch (rc.approach) {
      case RecApproach::Replace:
        recs = recommend_replace(rep, rc.list_length);
        break;
      case RecApproach::Backfill:
        recs = recommend_backfill(seq, rep, base, rc);
        break;
      case RecApproach::Interleave:
        recs = recommend_interleave(base(seq, rc.list_length), rep, rc.list_length);
        break;
    }
    for (std::size_t r = 0; r < recs.size(); ++r)
      rows.push_back({seq.consumer_id, to_string(rc.approach), static_cast<int>(r + 1), recs[r]});
  }
  save_recs(rows, out_path(cfg, "recs.csv"));
  record_artifacts(cfg.out_dir, {"recs.csv"}, config_hash(cfg));
}

void stage_eval_recs(const PipelineConfig& cfg) {
  if (cfg.rec_holdout_fraction <= 0.0 || cfg.rec_holdout_fraction >= 1.0)
    throw ConfigError("config.rec.holdout_fraction: must lie strictly between 0 and 1");
  auto in = load_rec_inputs(cfg);

  std::map<int, std::vector<RankedItem>> rep_by_segment;
  for (const auto& [segment, lists] : in.rep) {
    auto merged = merged_lists(lists);
    if (!merged.empty()) rep_by_segment[segment] = std::move(merged);
  }

  std::vector<LabeledSequence> inputs;
  std::vector<std::set<std::string>> clicks;
  std::vector<int> segments;
  for (std::size_t i = 0; i < in.seqs.size(); ++i) {
    if (rep_by_segment.find(in.assignments[i]) == rep_by_segment.end()) continue;
    const auto& seq = in.seqs[i];
    const std::size_t n = seq.events.size();
    const auto held = static_cast<std::size_t>(
        std::ceil(cfg.rec_holdout_fraction * static_cast<double>(n) - 1e-9));
    if (held == 0 || held >= n) continue;
    std::set<std::string> clicked;
    for (std::size_t e = n - held; e < n; ++e)
      if (seq.events[e].action == Action::Click) clicked.insert(seq.events[e].sku);
    if (clicked.empty()) continue;
    LabeledSequence input = seq;
    input.events.resize(n - held);
    inputs.push_back(std::move(input));
    clicks.push_back(std::move(clicked));
    segments.push_back(in.assignments[i]);
  }
  if (inputs.empty())
    throw InvalidArgument("no consumers eligible for recommendation evaluation");

  RecConfig rc = cfg.rec;
  rc.seed = derive_seed(cfg.seed, "recs-eval");
  const auto base = model_recommender(in.ckpt.model, in.ckpt.tokenizer, in.catalog);
  const auto report = evaluate_approaches(
      base, inputs, clicks, segments, rep_by_segment,
      {RecApproach::Replace, RecApproach::Backfill, RecApproach::Interleave}, rc, in.catalog);
  save_rec_eval_report(report, out_path(cfg, "eval_report.csv"));
  record_artifacts(cfg.out_dir, {"eval_report.csv"}, config_hash(cfg));
}

nlohmann::ordered_json csv_table(const std::string& path) {
  std::ifstream in(path);
  std::string line;
  if (!std::getline(in, line)) return nlohmann::ordered_json::array();
  const auto header = split_csv(line);
  auto rows = nlohmann::ordered_json::array();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    nlohmann::ordered_json row;
    for (std::size_t i = 0; i < header.size() && i < fields.size(); ++i)
      row[header[i]] = fields[i];
    rows.push_back(std::move(row));
  }
  return rows;
}

void stage_report(const PipelineConfig& cfg) {
  const auto manifest = load_manifest(cfg.out_dir);
  if (manifest.empty())
    throw MissingArtifactError("no artifacts recorded in " + cfg.out_dir +
                               "; run the pipeline first");
  std::set<std::string> hashes;
  for (const auto& [name, hash] : manifest) {
    if (name == "report.json") continue;  // a report may follow an earlier report
    hashes.insert(hash);
  }
  if (hashes.empty())
    throw MissingArtifactError("no artifacts recorded in " + cfg.out_dir +
                               "; run the pipeline first");
  if (hashes.size() > 1)
    throw ConfigError("artifacts in " + cfg.out_dir +
                      " were produced by different configs; rerun the pipeline with one config");
  const std::string artifact_hash = *hashes.begin();

  nlohmann::ordered_json j;
  j["config_hash"] = config_hash(cfg);
  j["artifact_hash"] = artifact_hash;
  auto names = nlohmann::ordered_json::array();
  for (const auto& [name, hash] : manifest)
    if (name != "report.json") names.push_back(name);
  j["artifacts"] = std::move(names);

  auto summaries = nlohmann::ordered_json::object();
  for (const auto& [name, hash] : manifest) {
    if (name == "report.json") continue;
    const auto path = out_path(cfg, name);
    if (!std::filesystem::exists(path)) {
      summaries[name] = {{"missing", true}};
      continue;
    }
    nlohmann::ordered_json entry;
    entry["bytes"] = static_cast<std::uint64_t>(std::filesystem::file_size(path));
    const bool csv = name.ends_with(".csv");
    if (csv || name.ends_with(".jsonl")) {
      std::ifstream in(path);
      std::string line;
      std::size_t lines = 0;
      while (std::getline(in, line)) ++lines;
      entry["rows"] = csv && lines > 0 ? lines - 1 : lines;  // drop the header
    }
    summaries[name] = std::move(entry);
  }
  j["summaries"] = std::move(summaries);

  auto tables = nlohmann::ordered_json::object();
  for (const char* name : {"cluster_report.csv", "segment_stats.csv", "embedding_space.csv",
                           "eval_report.csv", "variant_report.csv"}) {
    const auto path = out_path(cfg, name);
    if (std::filesystem::exists(path)) tables[name] = csv_table(path);
  }
  for (const char* name : {"threshold.json", "decay.json"}) {
    const auto path = out_path(cfg, name);
    if (!std::filesystem::exists(path)) continue;
    std::ifstream in(path);
    try {
      nlohmann::ordered_json inner;
      in >> inner;
      tables[name] = std::move(inner);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string(name) + ": " + e.what());
    }
  }
  j["tables"] = std::move(tables);

  const auto path = out_path(cfg, "report.json");
  std::ofstream out(path);
  if (!out) throw MissingArtifactError("cannot open " + path + " for writing");
  out << j.dump(2) << "\n";
  record_artifacts(cfg.out_dir, {"report.json"}, artifact_hash);
}

}  // namespace

const std::vector<std::string>& pipeline_stages() {
  static const std::vector<std::string> stages = {
      "gen-data",       "prep",      "train-embedder",     "embed",
      "cluster",        "eval-clusters", "train-lookalike", "score",
      "optimize-threshold", "rep-items", "recommend",      "eval-recs",
      "report"};
  return stages;
}

void run_stage(const std::string& name, const PipelineConfig& cfg) {
  Eigen::setNbThreads(cfg.reference_mode ? 1 : std::max(1, cfg.threads));
  if (name == "gen-data") return stage_gen_data(cfg);
  if (name == "prep") return stage_prep(cfg);
  if (name == "train-embedder") return stage_train_embedder(cfg);
  if (name == "embed") return stage_embed(cfg);
  if (name == "cluster") return stage_cluster(cfg);
  if (name == "eval-clusters") return stage_eval_clusters(cfg);
  if (name == "train-lookalike") return stage_train_lookalike(cfg);
  if (name == "score") return stage_score(cfg);
  if (name == "optimize-threshold") return stage_optimize_threshold(cfg);
  if (name == "rep-items") return stage_rep_items(cfg);
  if (name == "recommend") return stage_recommend(cfg);
  if (name == "eval-recs") return stage_eval_recs(cfg);
  if (name == "report") return stage_report(cfg);
  throw ConfigError("unknown subcommand: " + name);
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) != nullptr) return 2;
  if (dynamic_cast<const InvalidArgument*>(&e) != nullptr) return 2;
  if (dynamic_cast<const MissingArtifactError*>(&e) != nullptr) return 3;
  if (dynamic_cast<const FormatError*>(&e) != nullptr) return 3;
  if (dynamic_cast<const NumericError*>(&e) != nullptr) return 4;
  return 1;
}

}  // namespace unicon
