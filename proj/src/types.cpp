#include "unicon/types.hpp"

#include <algorithm>

namespace unicon {

const char* to_string(Action a) {
  switch (a) {
    case Action::Click: return "click";
    case Action::AddToCart: return "add_to_cart";
    case Action::AddToWishlist: return "add_to_wishlist";
    case Action::Checkout: return "checkout";
    case Action::Unknown: return "unknown";
  }
  return "unknown";
}

Action parse_action(const std::string& s) {
  if (s == "click") return Action::Click;
  if (s == "add_to_cart") return Action::AddToCart;
  if (s == "add_to_wishlist") return Action::AddToWishlist;
  if (s == "checkout") return Action::Checkout;
  return Action::Unknown;
}

const char* to_string(ItemGender g) {
  switch (g) {
    case ItemGender::Female: return "female";
    case ItemGender::Male: return "male";
    case ItemGender::Unisex: return "unisex";
  }
  return "unisex";
}

ItemGender parse_item_gender(const std::string& s) {
  if (s == "female") return ItemGender::Female;
  if (s == "male") return ItemGender::Male;
  if (s == "unisex") return ItemGender::Unisex;
  throw FormatError("unknown gender value: " + s);
}

const std::vector<std::string>& categorical_attributes() {
  static const std::vector<std::string> attrs = {
      "brand",       "color",  "silhouette", "commodity_group",
      "material",    "season_code", "tag",   "gender"};
  return attrs;
}

std::string item_attribute(const CatalogItem& item, const std::string& attribute) {
  if (attribute == "brand") return item.brand;
  if (attribute == "color") return item.color;
  if (attribute == "silhouette") return item.silhouette;
  if (attribute == "commodity_group") return item.commodity_group;
  if (attribute == "material") return item.material;
  if (attribute == "season_code") return item.season_code;
  if (attribute == "tag") return item.tag;
  if (attribute == "gender") return to_string(item.gender);
  throw InvalidArgument("unknown catalog attribute: " + attribute);
}

bool AttributeVocab::contains(const std::string& attribute, const std::string& value) const {
  auto it = values.find(attribute);
  if (it == values.end()) return false;
  return std::find(it->second.begin(), it->second.end(), value) != it->second.end();
}

const std::vector<std::string>& AttributeVocab::of(const std::string& attribute) const {
  auto it = values.find(attribute);
  if (it == values.end()) throw InvalidArgument("no declared vocabulary for attribute: " + attribute);
  return it->second;
}

void Catalog::rebuild_index() {
  sku_index_.clear();
  for (std::size_t i = 0; i < items.size(); ++i) sku_index_.emplace(items[i].sku, i);
}

const CatalogItem* Catalog::find(const std::string& sku) const {
  auto it = sku_index_.find(sku);
  return it == sku_index_.end() ? nullptr : &items[it->second];
}

const CatalogItem& Catalog::at(const std::string& sku) const {
  const CatalogItem* item = find(sku);
  if (!item) throw InvalidArgument("sku not in catalog: " + sku);
  return *item;
}

void sort_events(std::vector<InteractionEvent>& events) {
  std::stable_sort(events.begin(), events.end(),
                   [](const InteractionEvent& a, const InteractionEvent& b) {
                     return a.timestamp < b.timestamp;
                   });
}

std::vector<ConsumerHistory> group_into_histories(const std::vector<InteractionEvent>& events) {
  std::map<std::string, std::vector<InteractionEvent>> by_consumer;
  for (const auto& e : events) by_consumer[e.consumer_id].push_back(e);
  std::vector<ConsumerHistory> out;
  out.reserve(by_consumer.size());
  for (auto& [id, evs] : by_consumer) {
    sort_events(evs);
    out.push_back(ConsumerHistory{id, std::move(evs)});
  }
  return out;
}

}  // namespace unicon
