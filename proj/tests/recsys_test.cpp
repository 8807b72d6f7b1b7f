#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "unicon/metrics.hpp"
#include "unicon/recsys.hpp"
#include "unicon/rng.hpp"

using namespace unicon;

namespace {

Catalog item_catalog(int n_items) {
  Catalog c;
  for (int i = 0; i < n_items; ++i) c.vocab.values["brand"].push_back("B" + std::to_string(i));
  c.vocab.values["color"] = {"black"};
  c.vocab.values["silhouette"] = {"dress"};
  c.vocab.values["commodity_group"] = {"apparel", "shoes"};
  c.vocab.values["material"] = {"cotton"};
  c.vocab.values["season_code"] = {"FS25"};
  c.vocab.values["tag"] = {"casual"};
  c.vocab.values["gender"] = {"female", "male", "unisex"};
  for (int i = 0; i < n_items; ++i) {
    c.items.push_back({"I" + std::to_string(i), "B" + std::to_string(i), "black", "dress",
                       i % 2 == 0 ? "apparel" : "shoes", "cotton", "FS25", "casual", 10.0 + i,
                       false, ItemGender::Female, true});
  }
  c.rebuild_index();
  return c;
}

LabeledSequence seq_of(const std::string& id, const std::vector<int>& item_ids) {
  LabeledSequence s;
  s.consumer_id = id;
  std::int64_t ts = 1000;
  for (int item : item_ids) {
    s.events.push_back({id, ts, Action::Click, "click", "I" + std::to_string(item), false});
    ts += 1000;
  }
  s.gender_preference = "female";
  s.age_segment = "25-34";
  s.sales_channel = "app";
  return s;
}

std::vector<RankedItem> ranked(const std::vector<std::pair<std::string, std::size_t>>& items) {
  std::vector<RankedItem> out;
  for (const auto& [sku, pop] : items) out.push_back({sku, pop});
  return out;
}

// Base recommender that records the sequence it was handed and answers with a
// fixed ranking over the skus it saw, most recent first.
struct RecordingBase {
  mutable std::vector<LabeledSequence> calls;

  BaseRecommender fn() {
    return [this](const LabeledSequence& seq, int k) {
      calls.push_back(seq);
      std::vector<std::string> recs;
      for (auto it = seq.events.rbegin(); it != seq.events.rend(); ++it) {
        if (std::find(recs.begin(), recs.end(), it->sku) == recs.end()) recs.push_back(it->sku);
        if (recs.size() == static_cast<std::size_t>(k)) break;
      }
      return recs;
    };
  }
};

}  // namespace

TEST_CASE("approach names round-trip") {
  for (auto a : {RecApproach::Replace, RecApproach::Backfill, RecApproach::Interleave})
    CHECK(parse_rec_approach(to_string(a)) == a);
  CHECK(to_string(RecApproach::Backfill) == "backfill");
  CHECK_THROWS_AS(parse_rec_approach("hybrid"), ConfigError);
}

TEST_CASE("replace returns the ranked prefix regardless of the consumer") {
  auto rep = ranked({{"I0", 9}, {"I1", 7}, {"I2", 5}, {"I3", 1}});
  CHECK(recommend_replace(rep, 3) == std::vector<std::string>{"I0", "I1", "I2"});
  CHECK(recommend_replace(rep, 10) == std::vector<std::string>{"I0", "I1", "I2", "I3"});

  auto with_dup = ranked({{"I0", 9}, {"I0", 8}, {"I1", 7}});
  CHECK(recommend_replace(with_dup, 3) == std::vector<std::string>{"I0", "I1"});

  CHECK_THROWS_AS(recommend_replace({}, 3), InvalidArgument);
  CHECK_THROWS_AS(recommend_replace(rep, 0), InvalidArgument);
}

TEST_CASE("backfill replaces the ceiling count of history positions") {
  auto history = seq_of("C1", {0, 1, 2, 3, 4, 5, 6, 7, 0, 1});
  auto rep = ranked({{"I9", 5}, {"I8", 3}});
  RecordingBase base;
  RecConfig cfg;
  cfg.list_length = 4;
  cfg.seed = 7;

  SUBCASE("fraction 0.2 of ten events rewrites exactly two") {
    cfg.backfill_fraction = 0.2;
    recommend_backfill(history, rep, base.fn(), cfg);
    REQUIRE(base.calls.size() == 1);
    const auto& seen = base.calls[0];
    REQUIRE(seen.events.size() == history.events.size());
    int changed = 0;
    for (std::size_t i = 0; i < seen.events.size(); ++i) {
      if (seen.events[i].sku != history.events[i].sku) {
        ++changed;
        CHECK((seen.events[i].sku == "I9" || seen.events[i].sku == "I8"));
      }
      CHECK(seen.events[i].timestamp == history.events[i].timestamp);
    }
    CHECK(changed == 2);
  }

  SUBCASE("fraction 0.15 still rounds up to two") {
    cfg.backfill_fraction = 0.15;
    recommend_backfill(history, rep, base.fn(), cfg);
    int changed = 0;
    for (std::size_t i = 0; i < history.events.size(); ++i)
      changed += base.calls[0].events[i].sku != history.events[i].sku;
    CHECK(changed == 2);
  }

  SUBCASE("fraction zero is the identity, even without rep items") {
    cfg.backfill_fraction = 0.0;
    auto recs = recommend_backfill(history, {}, base.fn(), cfg);
    REQUIRE(base.calls.size() == 1);
    for (std::size_t i = 0; i < history.events.size(); ++i)
      CHECK(base.calls[0].events[i].sku == history.events[i].sku);
    CHECK(recs == base.fn()(history, cfg.list_length));
  }

  SUBCASE("fraction one feeds the base only representative items") {
    cfg.backfill_fraction = 1.0;
    recommend_backfill(history, rep, base.fn(), cfg);
    for (const auto& e : base.calls[0].events) CHECK((e.sku == "I9" || e.sku == "I8"));
  }

  SUBCASE("oldest-first mode rewrites the head of the sequence") {
    cfg.backfill_fraction = 0.3;
    cfg.positions = BackfillPositions::OldestFirst;
    recommend_backfill(history, rep, base.fn(), cfg);
    const auto& seen = base.calls[0];
    for (std::size_t i = 0; i < 3; ++i) CHECK((seen.events[i].sku == "I9" || seen.events[i].sku == "I8"));
    for (std::size_t i = 3; i < seen.events.size(); ++i)
      CHECK(seen.events[i].sku == history.events[i].sku);
  }

  SUBCASE("the same seed rewrites the same positions") {
    cfg.backfill_fraction = 0.4;
    recommend_backfill(history, rep, base.fn(), cfg);
    recommend_backfill(history, rep, base.fn(), cfg);
    REQUIRE(base.calls.size() == 2);
    for (std::size_t i = 0; i < history.events.size(); ++i)
      CHECK(base.calls[0].events[i].sku == base.calls[1].events[i].sku);
  }

  SUBCASE("validation") {
    cfg.backfill_fraction = 1.5;
    CHECK_THROWS_AS(recommend_backfill(history, rep, base.fn(), cfg), InvalidArgument);
    cfg.backfill_fraction = 0.5;
    CHECK_THROWS_AS(recommend_backfill(history, {}, base.fn(), cfg), InvalidArgument);
    CHECK_THROWS_AS(recommend_backfill(LabeledSequence{}, rep, base.fn(), cfg), InvalidArgument);
  }
}

TEST_CASE("backfill samples representative items by popularity") {
  std::vector<int> long_history;
  for (int i = 0; i < 300; ++i) long_history.push_back(i % 8);
  auto history = seq_of("C2", long_history);
  auto rep = ranked({{"I9", 90}, {"I8", 9}, {"I7", 1}});
  RecordingBase base;
  RecConfig cfg;
  cfg.backfill_fraction = 1.0;
  cfg.seed = 11;
  recommend_backfill(history, rep, base.fn(), cfg);

  std::map<std::string, int> counts;
  for (const auto& e : base.calls[0].events) counts[e.sku] += 1;
  CHECK(counts["I9"] > counts["I8"]);
  CHECK(counts["I8"] > counts["I7"]);
  CHECK(counts["I9"] > 200);

  // All-zero popularity falls back to uniform sampling.
  auto flat = ranked({{"I5", 0}, {"I6", 0}});
  RecordingBase flat_base;
  recommend_backfill(history, flat, flat_base.fn(), cfg);
  std::map<std::string, int> flat_counts;
  for (const auto& e : flat_base.calls[0].events) flat_counts[e.sku] += 1;
  CHECK(flat_counts["I5"] + flat_counts["I6"] == 300);
  CHECK(flat_counts["I5"] > 90);
  CHECK(flat_counts["I6"] > 90);
}

TEST_CASE("interleave alternates and skips duplicates") {
  auto rep = ranked({{"X", 5}, {"Y", 3}});
  CHECK(recommend_interleave({"A", "B"}, rep, 4) == std::vector<std::string>{"A", "X", "B", "Y"});
  CHECK(recommend_interleave({"A", "B"}, rep, 2) == std::vector<std::string>{"A", "X"});

  auto rep_with_dup = ranked({{"A", 5}, {"Y", 3}});
  CHECK(recommend_interleave({"A", "B"}, rep_with_dup, 4) ==
        std::vector<std::string>{"A", "Y", "B"});

  CHECK(recommend_interleave({"A", "B"}, {}, 4) == std::vector<std::string>{"A", "B"});
  CHECK(recommend_interleave({}, rep, 4) == std::vector<std::string>{"X", "Y"});
  CHECK(recommend_interleave({}, {}, 4).empty());
  CHECK_THROWS_AS(recommend_interleave({"A"}, rep, 0), InvalidArgument);

  // Relative order within each source survives the merge.
  auto many = ranked({{"M1", 9}, {"M2", 8}, {"M3", 7}});
  auto merged = recommend_interleave({"A", "B", "C", "D"}, many, 7);
  CHECK(merged == std::vector<std::string>{"A", "M1", "B", "M2", "C", "M3", "D"});
}

TEST_CASE("model recommender ranks skus deterministically") {
  Catalog catalog = item_catalog(6);
  std::vector<LabeledSequence> train = {seq_of("a", {0, 1, 2, 3}), seq_of("b", {2, 3, 4, 5})};
  Tokenizer tok;
  tok.fit(catalog, train, 4);
  EncoderConfig cfg;
  cfg.d_model = 8;
  cfg.d_ff = 16;
  cfg.max_seq_len = 8;
  cfg.seed = 3;
  Model<double> model(cfg, tok);

  auto base = model_recommender(model, tok, catalog);
  auto recs = base(train[0], 4);
  REQUIRE(recs.size() == 4);
  std::set<std::string> unique(recs.begin(), recs.end());
  CHECK(unique.size() == recs.size());
  for (const auto& sku : recs) CHECK(tok.sku_id(sku) >= 0);

  CHECK(base(train[0], 4) == recs);
  auto longer = base(train[0], 6);
  REQUIRE(longer.size() == 6);
  for (std::size_t i = 0; i < recs.size(); ++i) CHECK(longer[i] == recs[i]);

  CHECK(base(train[0], 100).size() == static_cast<std::size_t>(tok.sku_count()));
  CHECK_THROWS_AS(base(LabeledSequence{}, 4), InvalidArgument);
}

TEST_CASE("approach evaluation averages ranking and diversity metrics") {
  Catalog catalog = item_catalog(8);
  std::vector<LabeledSequence> histories = {seq_of("C1", {0, 1, 2}), seq_of("C2", {3, 4, 5})};
  std::vector<std::set<std::string>> clicks = {{"I0"}, {"I7"}};
  std::vector<int> segments = {0, 0};
  std::map<int, std::vector<RankedItem>> rep = {{0, ranked({{"I0", 9}, {"I2", 5}, {"I4", 2}})}};

  // Fixed base: echoes the history skus most recent first.
  RecordingBase base;
  RecConfig cfg;
  cfg.list_length = 3;
  cfg.seed = 5;
  cfg.backfill_fraction = 0.0;

  auto report = evaluate_approaches(base.fn(), histories, clicks, segments, rep,
                                    {RecApproach::Replace, RecApproach::Backfill,
                                     RecApproach::Interleave},
                                    cfg, catalog);
  REQUIRE(report.rows.size() == 3);
  CHECK(report.rows[0].approach == "replace");
  CHECK(report.rows[1].approach == "backfill");
  CHECK(report.rows[2].approach == "interleave");
  for (const auto& row : report.rows) CHECK(row.n_consumers == 2);

  // Replace hands everyone the same list, so its diversity is the rep list's.
  const auto rep_list = recommend_replace(rep.at(0), cfg.list_length);
  CHECK(report.rows[0].brand_diversity == doctest::Approx(diversity(rep_list, "brand", catalog)));
  CHECK(report.rows[0].group_diversity ==
        doctest::Approx(diversity(rep_list, "commodity_group", catalog)));

  // C1 finds its click at rank 1 of the rep list, C2 finds nothing.
  CHECK(report.rows[0].ndcg == doctest::Approx(0.5));
  CHECK(report.rows[0].overlap == doctest::Approx(0.5));

  // Fraction zero makes backfill the plain base recommender.
  // C1's base list is (I2, I1, I0): the click I0 sits at rank 3.
  const double c1_ndcg = 1.0 / std::log2(4.0);
  CHECK(report.rows[1].ndcg == doctest::Approx(c1_ndcg / 2.0));
  CHECK(report.rows[1].overlap == doctest::Approx(0.5));

  CHECK_THROWS_AS(evaluate_approaches(base.fn(), histories, {{"I0"}}, segments, rep,
                                      {RecApproach::Replace}, cfg, catalog),
                  InvalidArgument);
  CHECK_THROWS_AS(evaluate_approaches(base.fn(), histories, {{"I0"}, {}}, segments, rep,
                                      {RecApproach::Replace}, cfg, catalog),
                  InvalidArgument);
  CHECK_THROWS_AS(evaluate_approaches(base.fn(), histories, clicks, {0, 3}, rep,
                                      {RecApproach::Replace}, cfg, catalog),
                  InvalidArgument);
  CHECK_THROWS_AS(
      evaluate_approaches(base.fn(), histories, clicks, segments, rep, {}, cfg, catalog),
      InvalidArgument);
}

TEST_CASE("recommendation artifacts serialize as csv") {
  std::vector<RecRow> rows = {{"C1", "replace", 1, "I0"}, {"C1", "replace", 2, "I1"}};
  const std::string path = "rc_test_recs.csv";
  save_recs(rows, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "consumer_id,approach,rank,sku");
  std::getline(in, line);
  CHECK(line == "C1,replace,1,I0");
  in.close();
  std::remove(path.c_str());

  RecEvalReport report;
  ApproachMetrics row;
  row.approach = "interleave";
  row.ndcg = 0.25;
  row.overlap = 0.5;
  row.brand_diversity = 1.0;
  row.group_diversity = 0.75;
  row.n_consumers = 12;
  report.rows = {row};
  const std::string er_path = "rc_test_eval.csv";
  save_rec_eval_report(report, er_path);
  std::ifstream er(er_path);
  std::getline(er, line);
  CHECK(line == "approach,ndcg,overlap,brand_diversity,commodity_group_diversity,n_consumers");
  std::getline(er, line);
  CHECK(line == "interleave,0.25,0.5,1,0.75,12");
  er.close();
  std::remove(er_path.c_str());
}
