#include "unicon/recsys.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "unicon/io.hpp"
#include "unicon/metrics.hpp"
#include "unicon/rng.hpp"

namespace unicon {

std::string to_string(RecApproach approach) {
  switch (approach) {
    case RecApproach::Replace:
      return "replace";
    case RecApproach::Backfill:
      return "backfill";
    case RecApproach::Interleave:
      return "interleave";
  }
  throw InvalidArgument("unknown recommendation approach");
}

RecApproach parse_rec_approach(const std::string& name) {
  if (name == "replace") return RecApproach::Replace;
  if (name == "backfill") return RecApproach::Backfill;
  if (name == "interleave") return RecApproach::Interleave;
  throw ConfigError("unknown recommendation approach: " + name);
}

namespace {

void check_list_length(int k) {
  if (k < 1) throw InvalidArgument("recommendation list length must be positive");
}

}  // namespace

BaseRecommender model_recommender(const Model<double>& model, const Tokenizer& tokenizer,
                                  const Catalog& catalog) {
  return [&model, &tokenizer, &catalog](const LabeledSequence& seq, int k) {
    check_list_length(k);
    const auto tokens = tokenizer.encode(seq, catalog);
    if (tokens.length() == 0) throw InvalidArgument("cannot recommend from an empty history");
    const auto out = model.forward(tokens, ForwardMode::NextItem);
    const Eigen::VectorXd logits = out.next_logits.row(out.next_logits.rows() - 1).transpose();
    std::vector<int> ids(static_cast<std::size_t>(logits.size()));
    std::iota(ids.begin(), ids.end(), 0);
    std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) {
      if (logits[a] != logits[b]) return logits[a] > logits[b];
      return a < b;
    });
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(k), ids.size());
    std::vector<std::string> recs;
    recs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) recs.push_back(tokenizer.sku_name(ids[i]));
    return recs;
  };
}

std::vector<std::string> recommend_replace(const std::vector<RankedItem>& rep_items, int k) {
  if (rep_items.empty()) throw InvalidArgument("recommend_replace: no representative items");
  check_list_length(k);
  std::vector<std::string> recs;
  std::set<std::string> seen;
  for (const auto& item : rep_items) {
    if (recs.size() >= static_cast<std::size_t>(k)) break;
    if (seen.insert(item.sku).second) recs.push_back(item.sku);
  }
  return recs;
}

std::vector<std::string> recommend_backfill(const LabeledSequence& history,
                                            const std::vector<RankedItem>& rep_items,
                                            const BaseRecommender& base, const RecConfig& config) {
  if (history.events.empty()) throw InvalidArgument("recommend_backfill: empty history");
  if (config.backfill_fraction < 0.0 || config.backfill_fraction > 1.0)
    throw InvalidArgument("backfill fraction must lie in [0, 1]");
  check_list_length(config.list_length);

  const std::size_t n = history.events.size();
  const auto n_replace = static_cast<std::size_t>(
      std::ceil(config.backfill_fraction * static_cast<double>(n) - 1e-9));
  if (n_replace == 0) return base(history, config.list_length);
  if (rep_items.empty()) throw InvalidArgument("recommend_backfill: no representative items");

  Rng rng(derive_seed(config.seed, "backfill:" + history.consumer_id));
  std::vector<std::size_t> positions(n);
  std::iota(positions.begin(), positions.end(), 0);
  if (config.positions == BackfillPositions::Random) rng.shuffle(positions);
  positions.resize(n_replace);

  std::vector<double> weights;
  weights.reserve(rep_items.size());
  double total = 0.0;
  for (const auto& item : rep_items) {
    weights.push_back(static_cast<double>(item.popularity));
    total += weights.back();
  }

  LabeledSequence modified = history;
  for (std::size_t pos : positions) {
    const std::size_t pick =
        total > 0.0 ? rng.categorical(weights) : rng.next_index(rep_items.size());
    modified.events[pos].sku = rep_items[pick].sku;
  }
  return base(modified, config.list_length);
}

std::vector<std::string> recommend_interleave(const std::vector<std::string>& base_recs,
                                              const std::vector<RankedItem>& rep_items, int k) {
  check_list_length(k);
  std::vector<std::string> recs;
  std::set<std::string> seen;
  std::size_t i = 0;
  std::size_t j = 0;
  bool base_turn = true;
  while (recs.size() < static_cast<std::size_t>(k) &&
         (i < base_recs.size() || j < rep_items.size())) {
    bool emitted = false;
    if (base_turn) {
      while (i < base_recs.size() && !emitted) {
        if (seen.insert(base_recs[i]).second) {
          recs.push_back(base_recs[i]);
          emitted = true;
        }
        ++i;
      }
    } else {
      while (j < rep_items.size() && !emitted) {
        if (seen.insert(rep_items[j].sku).second) {
          recs.push_back(rep_items[j].sku);
          emitted = true;
        }
        ++j;
      }
    }
    base_turn = !base_turn;
  }
  return recs;
}

RecEvalReport evaluate_approaches(const BaseRecommender& base,
                                  const std::vector<LabeledSequence>& histories,
                                  const std::vector<std::set<std::string>>& held_out_clicks,
                                  const std::vector<int>& segments,
                                  const std::map<int, std::vector<RankedItem>>& rep_items,
                                  const std::vector<RecApproach>& approaches,
                                  const RecConfig& config, const Catalog& catalog) {
  if (histories.size() != held_out_clicks.size() || histories.size() != segments.size())
    throw InvalidArgument("evaluate_approaches: input lengths differ");
  if (histories.empty()) throw InvalidArgument("evaluate_approaches: no consumers");
  if (approaches.empty()) throw InvalidArgument("evaluate_approaches: no approaches");
  for (std::size_t i = 0; i < histories.size(); ++i) {
    if (held_out_clicks[i].empty())
      throw InvalidArgument("evaluate_approaches: no held-out clicks for " +
                            histories[i].consumer_id);
    if (rep_items.find(segments[i]) == rep_items.end())
      throw InvalidArgument("evaluate_approaches: no representative items for segment " +
                            std::to_string(segments[i]));
  }

  RecEvalReport report;
  const auto k = static_cast<std::size_t>(config.list_length);
  for (RecApproach approach : approaches) {
    ApproachMetrics row;
    row.approach = to_string(approach);
    for (std::size_t i = 0; i < histories.size(); ++i) {
      const auto& rep = rep_items.at(segments[i]);
      std::vector<std::string> recs;
      switch (approach) {
        case RecApproach::Replace:
          recs = recommend_replace(rep, config.list_length);
          break;
        case RecApproach::Backfill:
          recs = recommend_backfill(histories[i], rep, base, config);
          break;
        case RecApproach::Interleave:
          recs = recommend_interleave(base(histories[i], config.list_length), rep,
                                      config.list_length);
          break;
      }
      std::vector<double> relevance;
      relevance.reserve(recs.size());
      for (const auto& sku : recs)
        relevance.push_back(held_out_clicks[i].count(sku) > 0 ? 1.0 : 0.0);
      row.ndcg += ndcg(relevance, k);
      row.overlap +=
          overlap_coefficient(std::set<std::string>(recs.begin(), recs.end()), held_out_clicks[i]);
      row.brand_diversity += diversity(recs, "brand", catalog);
      row.group_diversity += diversity(recs, "commodity_group", catalog);
      ++row.n_consumers;
    }
    const auto denom = static_cast<double>(row.n_consumers);
    row.ndcg /= denom;
    row.overlap /= denom;
    row.brand_diversity /= denom;
    row.group_diversity /= denom;
    report.rows.push_back(row);
  }
  return report;
}

void save_recs(const std::vector<RecRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw MissingArtifactError("cannot open " + path + " for writing");
  out << "consumer_id,approach,rank,sku\n";
  for (const auto& r : rows)
    out << r.consumer_id << ',' << r.approach << ',' << r.rank << ',' << r.sku << '\n';
  if (!out) throw FormatError("failed writing " + path);
}

void save_rec_eval_report(const RecEvalReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw MissingArtifactError("cannot open " + path + " for writing");
  out << "approach,ndcg,overlap,brand_diversity,commodity_group_diversity,n_consumers\n";
  for (const auto& row : report.rows)
    out << row.approach << ',' << format_double(row.ndcg) << ',' << format_double(row.overlap)
        << ',' << format_double(row.brand_diversity) << ',' << format_double(row.group_diversity)
        << ',' << row.n_consumers << '\n';
  if (!out) throw FormatError("failed writing " + path);
}

}  // namespace unicon
