#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "unicon/types.hpp"

namespace unicon {

enum class Variant { Baseline, V1, V2, V3, V4 };

const char* to_string(Variant v);
Variant parse_variant(const std::string& s);

struct VariantSpec {
  Variant variant = Variant::Baseline;
  // Empty means: take the silhouettes flagged style-relevant in the catalog.
  std::set<std::string> style_relevant_silhouettes;
  std::int64_t lookback_days = 60;
};

struct LookalikeDatasetSpec {
  std::size_t min_designer_interactions = 5;
  std::int64_t core_lookback_days = 365;
  std::size_t window_len = 100;
  std::size_t max_windows_per_core = 5;
  std::int64_t train_lookback_days = 120;
  std::int64_t min_account_age_days = 7;
  std::set<Action> allowed_actions = {Action::Click, Action::AddToWishlist};
  double eval_fraction = 0.1;

  void validate() const;
};

enum class SeqLabel { None, Core, Negative };

struct LabeledSequence {
  std::string consumer_id;
  std::vector<InteractionEvent> events;
  SeqLabel label = SeqLabel::None;
  std::string gender_preference;
  std::string age_segment;
  std::string sales_channel;
};

// Gender-split histories get ids like "C000012::female"; this recovers the
// original id.
std::string base_consumer_id(const std::string& id);

// Variant filtering for the style path. V2/V4 emit one history per item
// gender present, with the gender appended to the id. Histories left with
// fewer than 3 events are dropped.
std::vector<ConsumerHistory> apply_variant(const std::vector<ConsumerHistory>& histories,
                                           const Catalog& catalog, const VariantSpec& spec,
                                           std::int64_t now);

// Core set: consumers with at least min_designer_interactions events on
// designer-brand items inside the core lookback window.
std::set<std::string> label_core_designers(const std::vector<ConsumerHistory>& histories,
                                           const Catalog& catalog,
                                           const LookalikeDatasetSpec& spec, std::int64_t now);

struct LookalikeDataset {
  std::vector<LabeledSequence> train;
  std::vector<LabeledSequence> eval;
};

// Training data for the lookalike classifier: up to max_windows_per_core
// non-overlapping windows per core consumer, one trailing window per eligible
// non-core consumer, split train/eval at the consumer level.
LookalikeDataset build_lookalike_dataset(const std::vector<ConsumerHistory>& histories,
                                         const std::vector<ConsumerProfile>& profiles,
                                         const std::set<std::string>& core,
                                         const LookalikeDatasetSpec& spec, std::int64_t now,
                                         std::uint64_t seed);

// Scoring input: the last window_len allowed-action events of every non-core
// consumer.
std::vector<LabeledSequence> build_inference_sequences(
    const std::vector<ConsumerHistory>& histories, const std::vector<ConsumerProfile>& profiles,
    const std::set<std::string>& core, const LookalikeDatasetSpec& spec);

void save_sequences(const std::vector<LabeledSequence>& sequences, const std::string& path);
std::vector<LabeledSequence> load_sequences(const std::string& path);

}  // namespace unicon
