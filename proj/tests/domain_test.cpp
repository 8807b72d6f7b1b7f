#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "unicon/io.hpp"
#include "unicon/rng.hpp"
#include "unicon/types.hpp"
#include "unicon/validation.hpp"

using namespace unicon;

namespace {

Catalog small_catalog() {
  Catalog c;
  c.vocab.values["brand"] = {"B1", "B2"};
  c.vocab.values["color"] = {"black", "white"};
  c.vocab.values["silhouette"] = {"dress", "shirt"};
  c.vocab.values["commodity_group"] = {"apparel"};
  c.vocab.values["material"] = {"cotton"};
  c.vocab.values["season_code"] = {"FS25"};
  c.vocab.values["tag"] = {"casual"};
  c.vocab.values["gender"] = {"female", "male", "unisex"};
  c.items.push_back({"S1", "B1", "black", "dress", "apparel", "cotton", "FS25", "casual", 59.9,
                     false, ItemGender::Female, true});
  c.items.push_back({"S2", "B2", "white", "shirt", "apparel", "cotton", "FS25", "casual", 19.9,
                     true, ItemGender::Male, false});
  c.rebuild_index();
  return c;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("action and gender names round-trip") {
  for (Action a : {Action::Click, Action::AddToCart, Action::AddToWishlist, Action::Checkout})
    CHECK(parse_action(to_string(a)) == a);
  CHECK(parse_action("browse") == Action::Unknown);
  for (ItemGender g : {ItemGender::Female, ItemGender::Male, ItemGender::Unisex})
    CHECK(parse_item_gender(to_string(g)) == g);
  CHECK_THROWS_AS(parse_item_gender("other"), FormatError);
}

TEST_CASE("item_attribute reads every categorical field") {
  Catalog c = small_catalog();
  CHECK(item_attribute(c.items[0], "brand") == "B1");
  CHECK(item_attribute(c.items[0], "gender") == "female");
  CHECK(item_attribute(c.items[1], "silhouette") == "shirt");
  CHECK_THROWS_AS(item_attribute(c.items[0], "price"), InvalidArgument);
}

TEST_CASE("valid catalog yields empty report") {
  CHECK(validate_catalog(small_catalog()).ok());
}

TEST_CASE("duplicate sku is reported once") {
  Catalog c = small_catalog();
  c.items.push_back(c.items[0]);
  auto report = validate_catalog(c);
  CHECK(report.count(FindingKind::DuplicateSku) == 1);
}

TEST_CASE("negative price is reported") {
  Catalog c = small_catalog();
  c.items[0].price = -1.0;
  auto report = validate_catalog(c);
  CHECK(report.count(FindingKind::NegativePrice) == 1);
}

TEST_CASE("undeclared attribute value is reported") {
  Catalog c = small_catalog();
  c.items[0].color = "red";
  auto report = validate_catalog(c);
  CHECK(report.count(FindingKind::OutOfVocabulary) == 1);
}

TEST_CASE("events referencing the catalog validate cleanly") {
  Catalog c = small_catalog();
  std::vector<InteractionEvent> events = {
      {"C1", 100, Action::Click, "click", "S1", false},
      {"C1", 200, Action::Checkout, "checkout", "S2", false},
  };
  CHECK(validate_events(events, c).ok());
}

TEST_CASE("unknown sku, unknown action, bad timestamp are each flagged") {
  Catalog c = small_catalog();
  std::vector<InteractionEvent> events = {
      {"C1", 100, Action::Click, "click", "UNKNOWN", false},
      {"C1", 100, Action::Unknown, "browse", "S1", false},
      {"C1", 0, Action::Click, "click", "S1", false},
  };
  auto report = validate_events(events, c);
  CHECK(report.count(FindingKind::UnknownSku) == 1);
  CHECK(report.count(FindingKind::UnknownAction) == 1);
  CHECK(report.count(FindingKind::BadTimestamp) == 1);
}

TEST_CASE("sort_events is stable on equal timestamps and idempotent") {
  std::vector<InteractionEvent> events = {
      {"C1", 200, Action::Click, "click", "S3", false},
      {"C1", 100, Action::Click, "click", "S1", false},
      {"C1", 100, Action::Click, "click", "S2", false},
  };
  sort_events(events);
  REQUIRE(events.size() == 3);
  CHECK(events[0].sku == "S1");
  CHECK(events[1].sku == "S2");
  CHECK(events[2].sku == "S3");
  auto again = events;
  sort_events(again);
  for (std::size_t i = 0; i < events.size(); ++i) CHECK(again[i].sku == events[i].sku);
}

TEST_CASE("group_into_histories sorts within consumer and orders by id") {
  std::vector<InteractionEvent> events = {
      {"C2", 50, Action::Click, "click", "S1", false},
      {"C1", 300, Action::Click, "click", "S2", false},
      {"C1", 100, Action::Click, "click", "S1", false},
  };
  auto histories = group_into_histories(events);
  REQUIRE(histories.size() == 2);
  CHECK(histories[0].consumer_id == "C1");
  CHECK(histories[0].events[0].timestamp == 100);
  CHECK(histories[0].events[1].timestamp == 300);
  CHECK(histories[1].consumer_id == "C2");
}

TEST_CASE("catalog file round-trips and rewrites byte-identically") {
  Catalog c = small_catalog();
  const std::string p1 = "test_catalog_1.csv";
  const std::string p2 = "test_catalog_2.csv";
  save_catalog(c, p1);
  Catalog back = load_catalog(p1);
  REQUIRE(back.items.size() == c.items.size());
  CHECK(back.items[0].sku == "S1");
  CHECK(back.items[0].price == doctest::Approx(59.9));
  CHECK(back.items[1].is_designer);
  CHECK(back.vocab.of("color") == std::vector<std::string>{"black", "white"});
  CHECK(back.find("S2") != nullptr);
  save_catalog(back, p2);
  CHECK(slurp(p1) == slurp(p2));
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("events file round-trips with integer timestamps") {
  std::vector<InteractionEvent> events = {
      {"C1", 1735689600, Action::Click, "click", "S1", true},
      {"C2", 1735776000, Action::AddToWishlist, "add_to_wishlist", "S2", false},
  };
  const std::string p = "test_events.jsonl";
  save_events(events, p);
  auto back = load_events(p);
  REQUIRE(back.size() == 2);
  CHECK(back[0].consumer_id == "C1");
  CHECK(back[0].timestamp == 1735689600);
  CHECK(back[0].followed_brand);
  CHECK(back[1].action == Action::AddToWishlist);
  std::remove(p.c_str());
}

TEST_CASE("ISO-8601 timestamps are accepted on ingestion") {
  CHECK(parse_iso8601("2025-01-01T00:00:00Z") == 1735689600);
  CHECK(parse_iso8601("2025-01-02T03:04:05") == 1735787045);
  CHECK_THROWS_AS(parse_iso8601("yesterday"), FormatError);

  const std::string p = "test_events_iso.jsonl";
  {
    std::ofstream out(p);
    out << R"({"consumer_id":"C1","timestamp":"2025-01-01T00:00:00Z","action":"click","sku":"S1"})"
        << "\n";
  }
  auto events = load_events(p);
  REQUIRE(events.size() == 1);
  CHECK(events[0].timestamp == 1735689600);
  CHECK_FALSE(events[0].followed_brand);
  std::remove(p.c_str());
}

TEST_CASE("malformed event lines raise a format error, not a validation finding") {
  const std::string p = "test_events_bad.jsonl";
  {
    std::ofstream out(p);
    out << "{\"consumer_id\":\"C1\"}\n";
  }
  CHECK_THROWS_AS(load_events(p), FormatError);
  {
    std::ofstream out(p);
    out << "not json\n";
  }
  CHECK_THROWS_AS(load_events(p), FormatError);
  std::remove(p.c_str());
}

TEST_CASE("missing files raise a missing-artifact error") {
  CHECK_THROWS_AS(load_catalog("no_such_file.csv"), MissingArtifactError);
  CHECK_THROWS_AS(load_events("no_such_file.jsonl"), MissingArtifactError);
  CHECK_THROWS_AS(load_consumers("no_such_file.csv"), MissingArtifactError);
}

TEST_CASE("consumers file round-trips") {
  std::vector<ConsumerProfile> consumers = {
      {"C1", "female", "25-34", "app", 1700000000},
      {"C2", "male", "35-44", "web", 1710000000},
  };
  const std::string p = "test_consumers.csv";
  save_consumers(consumers, p);
  auto back = load_consumers(p);
  REQUIRE(back.size() == 2);
  CHECK(back[0].consumer_id == "C1");
  CHECK(back[0].age_segment == "25-34");
  CHECK(back[1].first_activity_ts == 1710000000);
  std::remove(p.c_str());
}

TEST_CASE("csv helpers") {
  CHECK(split_csv("a,b,c") == std::vector<std::string>{"a", "b", "c"});
  CHECK(split_csv("a,,c") == std::vector<std::string>{"a", "", "c"});
  CHECK(split_csv("a") == std::vector<std::string>{"a"});
  CHECK(parse_bool("true"));
  CHECK_FALSE(parse_bool("false"));
  CHECK_THROWS_AS(parse_bool("yes"), FormatError);
  CHECK(format_double(59.9) == "59.9");
  CHECK(format_double(0.5) == "0.5");
}

TEST_CASE("rng streams are deterministic and seed-derived streams differ") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    auto va = a.next_u64();
    CHECK(va == b.next_u64());
    CHECK(va != c.next_u64());
  }
  CHECK(derive_seed(42, "alpha") != derive_seed(42, "beta"));
  CHECK(derive_seed(42, "alpha") == derive_seed(42, "alpha"));
  CHECK(derive_seed(42, "alpha") != derive_seed(43, "alpha"));
}

TEST_CASE("rng helpers stay in range") {
  Rng r(7);
  for (int i = 0; i < 1000; ++i) {
    double u = r.next_double();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    auto idx = r.next_index(10);
    CHECK(idx < 10);
    int v = r.uniform_int(3, 5);
    CHECK(v >= 3);
    CHECK(v <= 5);
  }
  std::vector<double> weights = {0.0, 1.0, 0.0};
  for (int i = 0; i < 50; ++i) CHECK(r.categorical(weights) == 1);
}
