#include <doctest.h>

#include <cstdio>

#include "unicon/datagen.hpp"
#include "unicon/dataprep.hpp"

using namespace unicon;

namespace {

// Two silhouettes, one style-relevant; two genders; designer brand B1.
Catalog tiny_catalog() {
  Catalog c;
  c.vocab.values["brand"] = {"B0", "B1"};
  c.vocab.values["color"] = {"black"};
  c.vocab.values["silhouette"] = {"dress", "bag"};
  c.vocab.values["commodity_group"] = {"apparel"};
  c.vocab.values["material"] = {"cotton"};
  c.vocab.values["season_code"] = {"FS25"};
  c.vocab.values["tag"] = {"casual"};
  c.vocab.values["gender"] = {"female", "male", "unisex"};
  auto add = [&](const std::string& sku, const std::string& brand, const std::string& silhouette,
                 bool designer, ItemGender gender, bool relevant) {
    c.items.push_back({sku, brand, "black", silhouette, "apparel", "cotton", "FS25", "casual",
                       10.0, designer, gender, relevant});
  };
  add("DRESS_F", "B0", "dress", false, ItemGender::Female, true);
  add("DRESS_M", "B0", "dress", false, ItemGender::Male, true);
  add("BAG_F", "B0", "bag", false, ItemGender::Female, false);
  add("DSG_DRESS", "B1", "dress", true, ItemGender::Female, true);
  c.rebuild_index();
  return c;
}

constexpr std::int64_t kNow = 1767225600;

ConsumerHistory make_history(const std::string& id,
                             const std::vector<std::pair<std::int64_t, std::string>>& parts,
                             Action action = Action::Click) {
  ConsumerHistory h{id, {}};
  for (const auto& [ts, sku] : parts)
    h.events.push_back({id, ts, action, to_string(action), sku, false});
  sort_events(h.events);
  return h;
}

std::int64_t days_ago(double d) {
  return kNow - static_cast<std::int64_t>(d * static_cast<double>(kSecondsPerDay));
}

}  // namespace

TEST_CASE("variant names round-trip and unknown names are rejected") {
  for (Variant v : {Variant::Baseline, Variant::V1, Variant::V2, Variant::V3, Variant::V4})
    CHECK(parse_variant(to_string(v)) == v);
  CHECK_THROWS_AS(parse_variant("v9"), ConfigError);
}

TEST_CASE("baseline keeps only the lookback window") {
  Catalog c = tiny_catalog();
  auto h = make_history("C1", {{days_ago(70), "DRESS_F"},
                               {days_ago(50), "DRESS_F"},
                               {days_ago(20), "BAG_F"},
                               {days_ago(10), "DRESS_M"}});
  VariantSpec spec;
  spec.variant = Variant::Baseline;
  auto out = apply_variant({h}, c, spec, kNow);
  REQUIRE(out.size() == 1);
  CHECK(out[0].events.size() == 3);  // the 70-day-old event fell outside
  for (const auto& e : out[0].events) CHECK(e.timestamp >= days_ago(60));
}

TEST_CASE("v1 drops style-irrelevant events") {
  Catalog c = tiny_catalog();
  auto h = make_history("C1", {{days_ago(40), "DRESS_F"},
                               {days_ago(30), "BAG_F"},
                               {days_ago(20), "DRESS_M"},
                               {days_ago(10), "DRESS_F"}});
  VariantSpec spec;
  spec.variant = Variant::V1;
  auto out = apply_variant({h}, c, spec, kNow);
  REQUIRE(out.size() == 1);
  CHECK(out[0].events.size() == 3);
  for (const auto& e : out[0].events) CHECK(c.at(e.sku).silhouette == "dress");
}

TEST_CASE("v2 splits a history per item gender") {
  Catalog c = tiny_catalog();
  auto h = make_history("C1", {{days_ago(40), "DRESS_F"},
                               {days_ago(35), "DRESS_F"},
                               {days_ago(30), "DRESS_F"},
                               {days_ago(25), "DRESS_M"},
                               {days_ago(20), "DRESS_M"},
                               {days_ago(15), "DRESS_M"}});
  VariantSpec spec;
  spec.variant = Variant::V2;
  auto out = apply_variant({h}, c, spec, kNow);
  REQUIRE(out.size() == 2);
  CHECK(out[0].consumer_id == "C1::female");
  CHECK(out[1].consumer_id == "C1::male");
  CHECK(out[0].events.size() == 3);
  CHECK(out[1].events.size() == 3);
  CHECK(base_consumer_id(out[0].consumer_id) == "C1");
}

TEST_CASE("v3 drops single-silhouette histories") {
  Catalog c = tiny_catalog();
  auto single = make_history("C1", {{days_ago(40), "DRESS_F"},
                                    {days_ago(30), "DRESS_M"},
                                    {days_ago(20), "DRESS_F"}});
  // dress + bag... but bag is style-irrelevant, so after V1 filtering this
  // consumer also collapses to a single silhouette.
  auto mixed_irrelevant = make_history("C2", {{days_ago(40), "DRESS_F"},
                                              {days_ago(30), "BAG_F"},
                                              {days_ago(20), "DRESS_F"},
                                              {days_ago(10), "DRESS_M"}});
  VariantSpec spec;
  spec.variant = Variant::V3;
  auto out = apply_variant({single, mixed_irrelevant}, c, spec, kNow);
  CHECK(out.empty());

  // With "bag" declared relevant, C2 keeps two silhouettes and survives.
  spec.style_relevant_silhouettes = {"dress", "bag"};
  out = apply_variant({single, mixed_irrelevant}, c, spec, kNow);
  REQUIRE(out.size() == 1);
  CHECK(out[0].consumer_id == "C2");
}

TEST_CASE("variant application is idempotent") {
  Catalog c = tiny_catalog();
  std::vector<ConsumerHistory> input = {
      make_history("C1", {{days_ago(40), "DRESS_F"},
                          {days_ago(35), "BAG_F"},
                          {days_ago(30), "DRESS_F"},
                          {days_ago(25), "DRESS_M"},
                          {days_ago(20), "DRESS_M"},
                          {days_ago(15), "DRESS_M"},
                          {days_ago(10), "DRESS_F"}}),
      make_history("C2", {{days_ago(40), "DRESS_F"},
                          {days_ago(30), "DRESS_F"},
                          {days_ago(20), "DRESS_F"}}),
  };
  for (Variant v : {Variant::Baseline, Variant::V1, Variant::V2, Variant::V3, Variant::V4}) {
    VariantSpec spec;
    spec.variant = v;
    auto once = apply_variant(input, c, spec, kNow);
    auto twice = apply_variant(once, c, spec, kNow);
    REQUIRE(once.size() == twice.size());
    for (std::size_t i = 0; i < once.size(); ++i) {
      CHECK(once[i].consumer_id == twice[i].consumer_id);
      REQUIRE(once[i].events.size() == twice[i].events.size());
      for (std::size_t e = 0; e < once[i].events.size(); ++e)
        CHECK(once[i].events[e].sku == twice[i].events[e].sku);
    }
  }
}

TEST_CASE("histories shorter than three events are dropped") {
  Catalog c = tiny_catalog();
  auto h = make_history("C1", {{days_ago(40), "DRESS_F"}, {days_ago(30), "DRESS_F"}});
  VariantSpec spec;
  spec.variant = Variant::Baseline;
  CHECK(apply_variant({h}, c, spec, kNow).empty());
}

TEST_CASE("core labeling uses the inclusive threshold and the window") {
  Catalog c = tiny_catalog();
  LookalikeDatasetSpec spec;

  auto in_window = make_history("C1", {{days_ago(300), "DSG_DRESS"},
                                       {days_ago(250), "DSG_DRESS"},
                                       {days_ago(200), "DSG_DRESS"},
                                       {days_ago(150), "DSG_DRESS"},
                                       {days_ago(100), "DSG_DRESS"}});
  auto too_old = make_history("C2", {{days_ago(400), "DSG_DRESS"},
                                     {days_ago(390), "DSG_DRESS"},
                                     {days_ago(380), "DSG_DRESS"},
                                     {days_ago(375), "DSG_DRESS"},
                                     {days_ago(370), "DSG_DRESS"}});
  auto four_only = make_history("C3", {{days_ago(300), "DSG_DRESS"},
                                       {days_ago(250), "DSG_DRESS"},
                                       {days_ago(200), "DSG_DRESS"},
                                       {days_ago(150), "DSG_DRESS"}});
  auto core = label_core_designers({in_window, too_old, four_only}, c, spec, kNow);
  CHECK(core.count("C1") == 1);
  CHECK(core.count("C2") == 0);
  CHECK(core.count("C3") == 0);
}

TEST_CASE("core labeling agrees with the generator ground truth") {
  GenConfig cfg;
  cfg.n_consumers = 300;
  cfg.n_skus = 600;
  cfg.n_brands = 20;
  cfg.n_prototypes = 3;
  cfg.designer_consumer_fraction = 0.08;
  cfg.seed = 13;
  Catalog catalog = generate_catalog(cfg);
  GeneratedData data = generate_consumers(cfg, catalog);

  LookalikeDatasetSpec spec;
  auto core = label_core_designers(data.histories, catalog, spec, cfg.now);
  for (const auto& h : data.histories)
    CHECK(data.truth.is_core.at(h.consumer_id) == (core.count(h.consumer_id) > 0));
}

TEST_CASE("core consumers contribute capped non-overlapping windows") {
  Catalog c = tiny_catalog();
  std::vector<std::pair<std::int64_t, std::string>> parts;
  for (int i = 0; i < 480; ++i)
    parts.push_back({days_ago(100.0 - i * 0.2), "DRESS_F"});
  auto h = make_history("CORE", parts);
  std::vector<ConsumerProfile> profiles = {{"CORE", "female", "25-34", "app", days_ago(400)}};
  LookalikeDatasetSpec spec;
  auto dataset = build_lookalike_dataset({h}, profiles, {"CORE"}, spec, kNow, 5);

  auto all = dataset.train;
  all.insert(all.end(), dataset.eval.begin(), dataset.eval.end());
  REQUIRE(all.size() == 4);  // floor(480 / 100)
  std::set<std::int64_t> stamps;
  for (const auto& s : all) {
    CHECK(s.label == SeqLabel::Core);
    CHECK(s.events.size() == 100);
    for (const auto& e : s.events) CHECK(stamps.insert(e.timestamp).second);
  }
}

TEST_CASE("more capacity than the cap yields exactly max windows") {
  Catalog c = tiny_catalog();
  std::vector<std::pair<std::int64_t, std::string>> parts;
  for (int i = 0; i < 800; ++i)
    parts.push_back({days_ago(110.0 - i * 0.1), "DRESS_F"});
  auto h = make_history("CORE", parts);
  std::vector<ConsumerProfile> profiles = {{"CORE", "female", "25-34", "app", days_ago(400)}};
  LookalikeDatasetSpec spec;
  auto dataset = build_lookalike_dataset({h}, profiles, {"CORE"}, spec, kNow, 5);
  CHECK(dataset.train.size() + dataset.eval.size() == 5);
}

TEST_CASE("young accounts are never sampled as negatives") {
  Catalog c = tiny_catalog();
  auto young = make_history("YOUNG", {{days_ago(3), "DRESS_F"},
                                      {days_ago(2), "DRESS_F"},
                                      {days_ago(1), "DRESS_F"}});
  auto old_enough = make_history("OLD", {{days_ago(30), "DRESS_F"},
                                         {days_ago(20), "DRESS_F"},
                                         {days_ago(10), "DRESS_F"}});
  auto core_h = make_history("CORE", {{days_ago(30), "DSG_DRESS"},
                                      {days_ago(25), "DSG_DRESS"},
                                      {days_ago(20), "DSG_DRESS"}});
  std::vector<ConsumerProfile> profiles = {
      {"YOUNG", "female", "25-34", "app", days_ago(3)},
      {"OLD", "female", "25-34", "app", days_ago(200)},
      {"CORE", "female", "25-34", "app", days_ago(200)},
  };
  LookalikeDatasetSpec spec;
  auto dataset = build_lookalike_dataset({young, old_enough, core_h}, profiles, {"CORE"}, spec,
                                         kNow, 5);
  std::set<std::string> ids;
  for (const auto& s : dataset.train) ids.insert(s.consumer_id);
  for (const auto& s : dataset.eval) ids.insert(s.consumer_id);
  CHECK(ids.count("YOUNG") == 0);
  CHECK(ids.count("OLD") == 1);
  CHECK(ids.count("CORE") == 1);
}

TEST_CASE("disallowed actions are filtered from windows") {
  Catalog c = tiny_catalog();
  ConsumerHistory h{"CORE", {}};
  for (int i = 0; i < 6; ++i)
    h.events.push_back({"CORE", days_ago(30 - i), Action::Click, "click", "DRESS_F", false});
  h.events.push_back({"CORE", days_ago(20), Action::Checkout, "checkout", "DRESS_F", false});
  h.events.push_back({"CORE", days_ago(19), Action::AddToCart, "add_to_cart", "DRESS_F", false});
  sort_events(h.events);
  std::vector<ConsumerProfile> profiles = {{"CORE", "female", "25-34", "app", days_ago(300)}};
  LookalikeDatasetSpec spec;
  auto dataset = build_lookalike_dataset({h}, profiles, {"CORE"}, spec, kNow, 5);
  REQUIRE(dataset.train.size() + dataset.eval.size() == 1);
  const auto& s = dataset.train.empty() ? dataset.eval[0] : dataset.train[0];
  CHECK(s.events.size() == 6);
  for (const auto& e : s.events) CHECK(e.action == Action::Click);
}

TEST_CASE("dataset construction is deterministic and split is consumer-disjoint") {
  GenConfig cfg;
  cfg.n_consumers = 250;
  cfg.n_skus = 600;
  cfg.n_brands = 20;
  cfg.designer_consumer_fraction = 0.1;
  cfg.seed = 17;
  Catalog catalog = generate_catalog(cfg);
  GeneratedData data = generate_consumers(cfg, catalog);
  LookalikeDatasetSpec spec;
  auto core = label_core_designers(data.histories, catalog, spec, cfg.now);
  REQUIRE(!core.empty());

  auto d1 = build_lookalike_dataset(data.histories, data.profiles, core, spec, cfg.now, 99);
  auto d2 = build_lookalike_dataset(data.histories, data.profiles, core, spec, cfg.now, 99);
  REQUIRE(d1.train.size() == d2.train.size());
  REQUIRE(d1.eval.size() == d2.eval.size());
  for (std::size_t i = 0; i < d1.train.size(); ++i) {
    CHECK(d1.train[i].consumer_id == d2.train[i].consumer_id);
    REQUIRE(d1.train[i].events.size() == d2.train[i].events.size());
    for (std::size_t e = 0; e < d1.train[i].events.size(); ++e)
      CHECK(d1.train[i].events[e].timestamp == d2.train[i].events[e].timestamp);
  }

  std::set<std::string> train_ids, eval_ids;
  for (const auto& s : d1.train) train_ids.insert(s.consumer_id);
  for (const auto& s : d1.eval) eval_ids.insert(s.consumer_id);
  for (const auto& id : eval_ids) CHECK(train_ids.count(id) == 0);
  CHECK(!d1.eval.empty());

  // Core windows stay within the training lookback.
  for (const auto& s : d1.train) {
    for (const auto& e : s.events) {
      CHECK(e.timestamp >= kNow - 120 * kSecondsPerDay);
      CHECK(e.timestamp <= kNow);
    }
  }

  CHECK_THROWS_AS(build_lookalike_dataset(data.histories, data.profiles, {}, spec, cfg.now, 99),
                  InvalidArgument);
}

TEST_CASE("inference sequences take the trailing window of non-core consumers") {
  Catalog c = tiny_catalog();
  std::vector<std::pair<std::int64_t, std::string>> parts;
  for (int i = 0; i < 250; ++i)
    parts.push_back({days_ago(250.0 - i), "DRESS_F"});
  auto big = make_history("BIG", parts);
  auto small = make_history("SMALL", {{days_ago(30), "DRESS_F"},
                                      {days_ago(20), "DRESS_F"},
                                      {days_ago(10), "DRESS_F"}});
  auto core_h = make_history("CORE", {{days_ago(30), "DSG_DRESS"},
                                      {days_ago(25), "DSG_DRESS"},
                                      {days_ago(20), "DSG_DRESS"}});
  std::vector<ConsumerProfile> profiles = {
      {"BIG", "female", "25-34", "app", days_ago(300)},
      {"SMALL", "male", "35-44", "web", days_ago(300)},
      {"CORE", "female", "25-34", "app", days_ago(300)},
  };
  LookalikeDatasetSpec spec;
  auto sequences = build_inference_sequences({big, small, core_h}, profiles, {"CORE"}, spec);
  REQUIRE(sequences.size() == 2);
  CHECK(sequences[0].consumer_id == "BIG");
  CHECK(sequences[0].events.size() == 100);
  // Trailing events: the newest 100 of 250.
  CHECK(sequences[0].events.front().timestamp == days_ago(250.0 - 150));
  CHECK(sequences[1].consumer_id == "SMALL");
  CHECK(sequences[1].events.size() == 3);
  for (const auto& s : sequences) CHECK(s.label == SeqLabel::None);
}

TEST_CASE("sequence files round-trip") {
  LabeledSequence a;
  a.consumer_id = "C1";
  a.label = SeqLabel::Core;
  a.events = {{"C1", 1000, Action::Click, "click", "DRESS_F", true},
              {"C1", 2000, Action::AddToWishlist, "add_to_wishlist", "DSG_DRESS", false}};
  a.gender_preference = "female";
  a.age_segment = "25-34";
  a.sales_channel = "app";
  LabeledSequence b;
  b.consumer_id = "C2";
  b.label = SeqLabel::None;
  b.events = {{"C2", 3000, Action::Click, "click", "DRESS_M", false}};
  b.gender_preference = "male";
  b.age_segment = "35-44";
  b.sales_channel = "web";

  save_sequences({a, b}, "dp_sequences.jsonl");
  auto back = load_sequences("dp_sequences.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[0].consumer_id == "C1");
  CHECK(back[0].label == SeqLabel::Core);
  REQUIRE(back[0].events.size() == 2);
  CHECK(back[0].events[0].followed_brand);
  CHECK(back[0].events[1].action == Action::AddToWishlist);
  CHECK(back[0].gender_preference == "female");
  CHECK(back[1].label == SeqLabel::None);
  CHECK(back[1].events[0].consumer_id == "C2");
  std::remove("dp_sequences.jsonl");
}
