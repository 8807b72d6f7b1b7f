#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "unicon/metrics.hpp"
#include "unicon/types.hpp"

namespace unicon {

// A planted style: a sampling distribution over catalog items, peaked on a
// preferred value subset of each styled attribute. The per-attribute
// `preferred` distributions are the exact marginals of `item_weights`, so a
// consumer's empirical attribute distribution converges to them.
struct StylePrototype {
  int prototype_id = 0;
  std::map<std::string, Distribution> preferred;  // brand, silhouette, color, commodity_group
  double concentration = 1.0;
  std::vector<std::string> preferred_brands;
  std::vector<double> item_weights;  // aligned with catalog items, sums to 1
};

struct GenConfig {
  std::size_t n_consumers = 1000;
  std::size_t n_skus = 2000;
  std::size_t n_prototypes = 5;
  std::size_t n_brands = 25;
  std::size_t n_colors = 12;
  std::size_t n_silhouettes = 10;
  std::size_t n_commodity_groups = 8;
  std::size_t n_materials = 6;
  std::size_t n_season_codes = 4;
  std::size_t n_tags = 6;
  double designer_brand_fraction = 0.2;
  double designer_consumer_fraction = 0.05;
  std::size_t events_min = 40;
  std::size_t events_max = 200;
  std::size_t min_designer_interactions = 5;
  double style_relevant_fraction = 0.8;
  double new_consumer_fraction = 0.02;
  // Probability a core-designer candidate's event is redirected to a
  // designer-brand item.
  double designer_affinity = 0.35;
  // Sharpness of consumer sampling around the prototype: 1 reproduces the
  // prototype distribution, infinity collapses to its single best item.
  double concentration = 1.0;
  // Per-consumer lognormal perturbation of the prototype distribution.
  double preference_jitter = 0.1;
  // Uniform mass mixed into each prototype distribution.
  double smoothing = 0.05;
  // Zipf exponent for item popularity within a brand.
  double popularity_exponent = 0.7;
  double followed_pref_prob = 0.3;
  double followed_base_prob = 0.02;
  double p_click = 0.70;
  double p_wishlist = 0.12;
  double p_cart = 0.12;
  double p_checkout = 0.06;
  std::int64_t now = 1767225600;  // 2026-01-01T00:00:00Z
  std::int64_t window_days = 365;
  std::uint64_t seed = 1;

  void validate() const;  // throws ConfigError
};

struct GroundTruth {
  std::map<std::string, int> prototype_of;
  std::map<std::string, bool> is_core;
};

struct GeneratedData {
  std::vector<ConsumerHistory> histories;
  std::vector<ConsumerProfile> profiles;
  GroundTruth truth;
  std::vector<StylePrototype> prototypes;
};

Catalog generate_catalog(const GenConfig& config);
GeneratedData generate_consumers(const GenConfig& config, const Catalog& catalog);

void save_ground_truth(const GroundTruth& truth, const std::string& path);
GroundTruth load_ground_truth(const std::string& path);

std::vector<InteractionEvent> flatten_histories(const std::vector<ConsumerHistory>& histories);

// Number of interactions with designer-brand items inside the lookback
// window, any action type. The core-designer generation target and the
// dataprep labeling rule both call this.
std::size_t designer_interaction_count(const ConsumerHistory& history, const Catalog& catalog,
                                       std::int64_t now, std::int64_t lookback_days);

}  // namespace unicon
