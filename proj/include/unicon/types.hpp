#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "unicon/errors.hpp"

namespace unicon {

enum class Action { Click, AddToCart, AddToWishlist, Checkout, Unknown };

const char* to_string(Action a);
Action parse_action(const std::string& s);

enum class ItemGender { Female, Male, Unisex };

const char* to_string(ItemGender g);
ItemGender parse_item_gender(const std::string& s);

struct CatalogItem {
  std::string sku;
  std::string brand;
  std::string color;
  std::string silhouette;
  std::string commodity_group;
  std::string material;
  std::string season_code;
  std::string tag;
  double price = 0.0;
  bool is_designer = false;
  ItemGender gender = ItemGender::Unisex;
  bool style_relevant = false;
};

// Names of the categorical catalog attributes addressable by string.
const std::vector<std::string>& categorical_attributes();

// Value of a named categorical attribute ("brand", "gender", ...).
std::string item_attribute(const CatalogItem& item, const std::string& attribute);

// Attribute vocabularies are declared in the catalog file header so that
// embedding-table indices are stable across runs, never inferred from rows.
struct AttributeVocab {
  std::map<std::string, std::vector<std::string>> values;

  bool contains(const std::string& attribute, const std::string& value) const;
  const std::vector<std::string>& of(const std::string& attribute) const;
};

struct Catalog {
  std::vector<CatalogItem> items;
  AttributeVocab vocab;

  void rebuild_index();
  const CatalogItem* find(const std::string& sku) const;
  const CatalogItem& at(const std::string& sku) const;

 private:
  std::map<std::string, std::size_t> sku_index_;
};

struct InteractionEvent {
  std::string consumer_id;
  std::int64_t timestamp = 0;  // epoch seconds
  Action action = Action::Click;
  std::string action_raw;  // verbatim input, kept so validation can name it
  std::string sku;
  bool followed_brand = false;
};

struct ConsumerProfile {
  std::string consumer_id;
  std::string gender_preference;
  std::string age_segment;
  std::string sales_channel;
  std::int64_t first_activity_ts = 0;
};

struct ConsumerHistory {
  std::string consumer_id;
  std::vector<InteractionEvent> events;  // non-decreasing timestamps, input order on ties
};

// Stable sort by timestamp; equal timestamps keep input order.
void sort_events(std::vector<InteractionEvent>& events);

// Group a flat event list into per-consumer histories keyed and ordered by
// consumer id, each history time-sorted.
std::vector<ConsumerHistory> group_into_histories(const std::vector<InteractionEvent>& events);

constexpr std::int64_t kSecondsPerDay = 86400;

}  // namespace unicon
