#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "unicon/encoder.hpp"
#include "unicon/segmentation.hpp"

namespace unicon {

enum class RecApproach { Replace, Backfill, Interleave };

std::string to_string(RecApproach approach);
RecApproach parse_rec_approach(const std::string& name);

// Which history positions backfilling overwrites: a uniform random subset, or
// the oldest events first.
enum class BackfillPositions { Random, OldestFirst };

struct RecConfig {
  RecApproach approach = RecApproach::Backfill;
  double backfill_fraction = 0.2;
  int list_length = 10;
  std::uint64_t seed = 0;
  BackfillPositions positions = BackfillPositions::Random;
};

// Ranked, duplicate-free SKU list for one consumer's event sequence.
using BaseRecommender = std::function<std::vector<std::string>(const LabeledSequence&, int)>;

// Ranks known SKUs by the next-item logits at the last position. Captures the
// model, tokenizer, and catalog by reference; keep them alive while in use.
BaseRecommender model_recommender(const Model<double>& model, const Tokenizer& tokenizer,
                                  const Catalog& catalog);

// The ranked representative-item prefix, independent of the consumer.
std::vector<std::string> recommend_replace(const std::vector<RankedItem>& rep_items, int k);

// Overwrites ceil(fraction * n) history positions with representative items
// sampled by popularity, then asks the base recommender about the result.
// Fraction zero returns base(history) untouched.
std::vector<std::string> recommend_backfill(const LabeledSequence& history,
                                            const std::vector<RankedItem>& rep_items,
                                            const BaseRecommender& base, const RecConfig& config);

// Alternating merge starting from base_recs, duplicates skipped, cut at k.
std::vector<std::string> recommend_interleave(const std::vector<std::string>& base_recs,
                                              const std::vector<RankedItem>& rep_items, int k);

struct ApproachMetrics {
  std::string approach;
  double ndcg = 0.0;
  double overlap = 0.0;
  double brand_diversity = 0.0;
  double group_diversity = 0.0;
  std::size_t n_consumers = 0;
};

struct RecEvalReport {
  std::vector<ApproachMetrics> rows;
};

// Offline comparison against held-out clicks, averaged over consumers. Every
// consumer needs a segment with representative items and at least one
// held-out click; filter beforehand.
RecEvalReport evaluate_approaches(const BaseRecommender& base,
                                  const std::vector<LabeledSequence>& histories,
                                  const std::vector<std::set<std::string>>& held_out_clicks,
                                  const std::vector<int>& segments,
                                  const std::map<int, std::vector<RankedItem>>& rep_items,
                                  const std::vector<RecApproach>& approaches,
                                  const RecConfig& config, const Catalog& catalog);

struct RecRow {
  std::string consumer_id;
  std::string approach;
  int rank = 0;  // 1-based
  std::string sku;
};

void save_recs(const std::vector<RecRow>& rows, const std::string& path);
void save_rec_eval_report(const RecEvalReport& report, const std::string& path);

}  // namespace unicon
