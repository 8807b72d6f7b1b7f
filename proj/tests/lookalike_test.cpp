#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "unicon/lookalike.hpp"
#include "unicon/rng.hpp"

using namespace unicon;

namespace {

Catalog item_catalog(int n_items) {
  Catalog c;
  for (int i = 0; i < n_items; ++i) c.vocab.values["brand"].push_back("B" + std::to_string(i));
  c.vocab.values["color"] = {"black"};
  c.vocab.values["silhouette"] = {"dress"};
  c.vocab.values["commodity_group"] = {"apparel"};
  c.vocab.values["material"] = {"cotton"};
  c.vocab.values["season_code"] = {"FS25"};
  c.vocab.values["tag"] = {"casual"};
  c.vocab.values["gender"] = {"female", "male", "unisex"};
  for (int i = 0; i < n_items; ++i) {
    c.items.push_back({"I" + std::to_string(i), "B" + std::to_string(i), "black", "dress",
                       "apparel", "cotton", "FS25", "casual", 10.0 + i, false, ItemGender::Female,
                       true});
  }
  c.rebuild_index();
  return c;
}

LabeledSequence seq_of(const std::string& id, const std::vector<int>& item_ids, SeqLabel label) {
  LabeledSequence s;
  s.consumer_id = id;
  s.label = label;
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

// Positives always contain brand 0; negatives never do.
LookalikeDataset separable_dataset(std::size_t n_train_per_class, std::size_t n_eval_per_class) {
  LookalikeDataset ds;
  Rng rng(91);
  auto make = [&](const std::string& id, bool positive) {
    std::vector<int> items;
    for (int i = 0; i < 8; ++i) {
      // Brand 0 shows up only in positive histories.
      items.push_back(positive && i % 3 == 0 ? 0 : 1 + static_cast<int>(rng.next_index(7)));
    }
    rng.shuffle(items);
    return seq_of(id, items, positive ? SeqLabel::Core : SeqLabel::Negative);
  };
  for (std::size_t i = 0; i < n_train_per_class; ++i) {
    ds.train.push_back(make("TP" + std::to_string(i), true));
    ds.train.push_back(make("TN" + std::to_string(i), false));
  }
  for (std::size_t i = 0; i < n_eval_per_class; ++i) {
    ds.eval.push_back(make("EP" + std::to_string(i), true));
    ds.eval.push_back(make("EN" + std::to_string(i), false));
  }
  return ds;
}

}  // namespace

TEST_CASE("threshold sweep evaluates every unique-score midpoint") {
  std::vector<double> scores = {0.9, 0.8, 0.7, 0.6, 0.5};
  std::vector<bool> labels = {true, true, false, true, false};
  auto curve = sweep_thresholds(scores, labels);

  REQUIRE(curve.points.size() == 6);  // 0, four midpoints, 1
  CHECK(curve.points.front().tau == 0.0);
  CHECK(curve.points.back().tau == 1.0);
  CHECK(curve.points.back().n_lookalikes == 0);

  bool found = false;
  for (const auto& p : curve.points) {
    if (p.tau == 0.75) {
      found = true;
      CHECK(p.precision == doctest::Approx(1.0));
      CHECK(p.recall == doctest::Approx(2.0 / 3.0));
      CHECK(p.f2 == doctest::Approx(5.0 / 7.0).epsilon(1e-6));
      CHECK(p.n_lookalikes == 2);
    }
  }
  CHECK(found);

  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    CHECK(curve.points[i].tau > curve.points[i - 1].tau);
    CHECK(curve.points[i].n_lookalikes <= curve.points[i - 1].n_lookalikes);
  }
  for (const auto& p : curve.points) {
    const auto m = classification_metrics(scores, labels, p.tau);
    CHECK(p.f2 == m.f2);
    CHECK(p.precision == m.precision);
    CHECK(p.recall == m.recall);
    CHECK(p.n_lookalikes == m.n_predicted);
  }

  CHECK_THROWS_AS(sweep_thresholds({0.1, 0.2}, {true, true}), InvalidArgument);
  CHECK_THROWS_AS(sweep_thresholds({0.1}, {true, false}), InvalidArgument);
}

TEST_CASE("separable scores reach the maximum f2") {
  std::vector<double> scores = {0.9, 0.8, 0.2, 0.1};
  std::vector<bool> labels = {true, true, false, false};
  auto curve = sweep_thresholds(scores, labels);
  double best = 0.0;
  for (const auto& p : curve.points) best = std::max(best, p.f2);
  CHECK(best == doctest::Approx(1.0));
  CHECK(optimize_threshold(curve) == doctest::Approx(0.5));
}

TEST_CASE("threshold optimization prefers the larger threshold on ties") {
  ThresholdCurve curve;
  curve.points = {{0.1, 0.3, 0, 0, 0}, {0.2, 0.7, 0, 0, 0}, {0.3, 0.7, 0, 0, 0},
                  {0.4, 0.1, 0, 0, 0}};
  CHECK(optimize_threshold(curve) == doctest::Approx(0.3));

  ThresholdCurve falling;
  falling.points = {{0.05, 0.9, 0, 0, 0}, {0.5, 0.5, 0, 0, 0}, {0.95, 0.1, 0, 0, 0}};
  CHECK(optimize_threshold(falling) == doctest::Approx(0.05));

  ThresholdCurve peaked;
  for (int i = 1; i <= 9; ++i) {
    const double tau = i / 10.0;
    peaked.points.push_back({tau, 1.0 - std::abs(tau - 0.6), 0, 0, 0});
  }
  CHECK(optimize_threshold(peaked) == doctest::Approx(0.6));

  CHECK_THROWS_AS(optimize_threshold(ThresholdCurve{}), InvalidArgument);
}

TEST_CASE("threshold optimization equals exhaustive midpoint search") {
  Rng rng(17);
  std::vector<double> scores;
  std::vector<bool> labels;
  for (int i = 0; i < 60; ++i) {
    scores.push_back(std::round(rng.next_double() * 20.0) / 20.0);  // force ties
    labels.push_back(rng.bernoulli(0.3));
  }
  labels[0] = true;
  labels[1] = false;

  auto curve = sweep_thresholds(scores, labels);
  const double tau_star = optimize_threshold(curve);

  std::vector<double> unique_scores = scores;
  std::sort(unique_scores.begin(), unique_scores.end());
  unique_scores.erase(std::unique(unique_scores.begin(), unique_scores.end()),
                      unique_scores.end());
  std::vector<double> candidates = {0.0, 1.0};
  for (std::size_t i = 0; i + 1 < unique_scores.size(); ++i)
    candidates.push_back((unique_scores[i] + unique_scores[i + 1]) / 2.0);
  std::sort(candidates.begin(), candidates.end());
  double best_tau = candidates.front();
  double best_f2 = -1.0;
  for (double tau : candidates) {
    const double f2 = classification_metrics(scores, labels, tau).f2;
    if (f2 >= best_f2) {
      best_f2 = f2;
      best_tau = tau;
    }
  }
  CHECK(tau_star == best_tau);
}

TEST_CASE("lookalike extraction applies the strict threshold outside the core") {
  std::map<std::string, double> scores = {{"A", 0.9}, {"B", 0.5}, {"C", 0.99}, {"D", 0.42}};
  std::set<std::string> core = {"C"};

  auto l = extract_lookalikes(scores, core, 0.8);
  CHECK(l == std::set<std::string>{"A"});

  CHECK(extract_lookalikes(scores, core, 1.0).empty());
  auto all = extract_lookalikes(scores, {}, 0.0);
  CHECK(all.size() == 4);

  // A strictly increasing transform with the matching threshold keeps the set.
  std::map<std::string, double> cubed;
  for (const auto& [id, s] : scores) cubed[id] = s * s * s;
  for (double tau : {0.42, 0.5, 0.9}) {
    CHECK(extract_lookalikes(scores, core, tau) ==
          extract_lookalikes(cubed, core, tau * tau * tau));
  }
}

TEST_CASE("score distribution report partitions consumers into three groups") {
  std::vector<double> scores = {0.95, 0.9, 0.2, 0.4, 0.5, 0.05, 1.0};
  std::vector<bool> labels = {true, true, false, false, false, false, false};
  std::vector<std::size_t> designer_counts = {10, 5, 0, 1, 0, 2, 0};

  auto report = score_distribution_report(scores, labels, designer_counts);
  CHECK(report.edges.front() == 0.0);
  CHECK(report.edges.back() == 1.0);
  std::size_t total = 0;
  for (std::size_t b = 0; b < report.core.size(); ++b)
    total += report.core[b] + report.zero_designer[b] + report.with_designer[b];
  CHECK(total == scores.size());
  CHECK(report.core_mean == doctest::Approx(0.925));
  CHECK(report.zero_designer_mean == doctest::Approx((0.2 + 0.5 + 1.0) / 3.0));
  CHECK(report.with_designer_mean == doctest::Approx(0.225));
  CHECK(report.core_mean > report.zero_designer_mean);
  std::size_t core_total = 0, zero_total = 0, with_total = 0;
  for (std::size_t b = 0; b < report.core.size(); ++b) {
    core_total += report.core[b];
    zero_total += report.zero_designer[b];
    with_total += report.with_designer[b];
  }
  CHECK(core_total == 2);
  CHECK(zero_total == 3);
  CHECK(with_total == 2);
  CHECK(report.zero_designer[19] == 1);  // the score of 1.0 lands in the top bin

  CHECK_THROWS_AS(score_distribution_report({0.5}, {true, false}, {0}), InvalidArgument);
}

TEST_CASE("variant configs map ablation flags onto the encoder") {
  EncoderConfig base;
  base.d_model = 32;

  auto v1 = variant_config(1, base);
  CHECK_FALSE(v1.class_weighting);
  CHECK(v1.numeric_encoding == NumericEncoding::ScaledEmbedding);
  CHECK(v1.use_timestamp);
  CHECK(v1.d_model == 32);

  auto v2 = variant_config(2, base);
  CHECK(v2.class_weighting);
  CHECK(v2.numeric_encoding == NumericEncoding::ScaledEmbedding);

  auto v3 = variant_config(3, base);
  CHECK_FALSE(v3.class_weighting);
  CHECK(v3.numeric_encoding == NumericEncoding::PiecewiseLinear);

  auto v4 = variant_config(4, base);
  CHECK(v4.class_weighting == v2.class_weighting);
  CHECK(v4.numeric_encoding == v3.numeric_encoding);
  CHECK(v4.use_timestamp);

  auto v5 = variant_config(5, base);
  CHECK_FALSE(v5.use_timestamp);
  CHECK(v5.numeric_encoding == NumericEncoding::ScaledEmbedding);

  CHECK_THROWS_AS(variant_config(0, base), ConfigError);
  CHECK_THROWS_AS(variant_config(6, base), ConfigError);
}

TEST_CASE("variant comparison trains every ablation and beats random") {
  Catalog catalog = item_catalog(8);
  auto dataset = separable_dataset(20, 16);

  EncoderConfig base;
  base.d_model = 16;
  base.d_ff = 32;
  base.max_seq_len = 16;
  base.ple_bins = 4;
  TrainConfig tc;
  tc.epochs = 14;
  tc.batch_size = 8;

  auto report = run_variant_comparison(catalog, dataset, base, tc, {1, 2, 3, 4, 5}, 42);
  REQUIRE(report.rows.size() == 6);
  CHECK(report.rows[0].name == "random");
  CHECK(report.rows[0].tau == 0.5);
  const double random_ap = report.rows[0].average_precision;
  for (std::size_t i = 1; i < report.rows.size(); ++i) {
    INFO(report.rows[i].name, " error=", report.rows[i].error);
    CHECK(report.rows[i].trained);
    CHECK(report.rows[i].average_precision >= random_ap);
  }

  auto again = run_variant_comparison(catalog, dataset, base, tc, {1, 2, 3, 4, 5}, 42);
  REQUIRE(again.rows.size() == report.rows.size());
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    CHECK(again.rows[i].tau == report.rows[i].tau);
    CHECK(again.rows[i].f2 == report.rows[i].f2);
    CHECK(again.rows[i].average_precision == report.rows[i].average_precision);
  }

  auto with_bad = run_variant_comparison(catalog, dataset, base, tc, {1, 9}, 42);
  REQUIRE(with_bad.rows.size() == 3);
  CHECK(with_bad.rows[2].name == "variant9");
  CHECK_FALSE(with_bad.rows[2].trained);
  CHECK(with_bad.rows[2].error.find("variant") != std::string::npos);
}

TEST_CASE("lookalike artifacts serialize as csv") {
  ThresholdCurve curve;
  curve.points = {{0.0, 0.5, 0.25, 1.0, 8}, {0.5, 0.8, 0.75, 0.9, 4}, {1.0, 0.0, 0.0, 0.0, 0}};
  const std::string path = "lk_test_curve.csv";
  save_threshold_curve(curve, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "tau,f2,precision,recall,n_lookalikes");
  std::getline(in, line);
  CHECK(line == "0,0.5,0.25,1,8");
  in.close();
  std::remove(path.c_str());

  std::map<std::string, double> scores = {{"C1", 0.9}, {"C2", 0.75}, {"C3", 0.1}};
  const std::string lk_path = "lk_test_lookalikes.csv";
  save_lookalikes(scores, {"C1", "C2"}, lk_path);
  std::ifstream lk(lk_path);
  std::getline(lk, line);
  CHECK(line == "consumer_id,score");
  std::getline(lk, line);
  CHECK(line == "C1,0.9");
  lk.close();
  std::remove(lk_path.c_str());
  CHECK_THROWS_AS(save_lookalikes(scores, {"ghost"}, lk_path), InvalidArgument);
  std::remove(lk_path.c_str());

  VariantReport report;
  VariantRow ok;
  ok.name = "variant1";
  ok.tau = 0.75;
  ok.trained = true;
  VariantRow failed;
  failed.name = "variant9";
  failed.error = "unknown lookalike variant 9, halting";
  report.rows = {ok, failed};
  const std::string vr_path = "lk_test_variants.csv";
  save_variant_report(report, vr_path);
  std::ifstream vr(vr_path);
  std::getline(vr, line);
  CHECK(line == "name,tau,precision,recall,f2,average_precision,status");
  std::getline(vr, line);
  CHECK(line.find("variant1,0.75") == 0);
  std::getline(vr, line);
  CHECK(line.find("unknown lookalike variant 9  halting") != std::string::npos);
  vr.close();
  std::remove(vr_path.c_str());
}
