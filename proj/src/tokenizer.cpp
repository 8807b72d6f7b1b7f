#include "unicon/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "unicon/errors.hpp"

namespace unicon {

Eigen::VectorXd ple_vector(double v, const std::vector<double>& edges) {
  if (edges.size() < 2) throw InvalidArgument("ple_vector: need at least two bin edges");
  const int n_bins = static_cast<int>(edges.size()) - 1;
  Eigen::VectorXd out(n_bins);
  for (int j = 0; j < n_bins; ++j) {
    const double lo = edges[j], hi = edges[j + 1];
    if (hi < lo) throw InvalidArgument("ple_vector: bin edges must be ascending");
    if (v >= hi)
      out[j] = 1.0;
    else if (v <= lo || hi == lo)
      out[j] = 0.0;
    else
      out[j] = (v - lo) / (hi - lo);
  }
  return out;
}

std::vector<double> quantile_edges(std::vector<double> values, int n_bins) {
  if (values.empty()) throw InvalidArgument("quantile_edges: no values");
  if (n_bins < 1) throw InvalidArgument("quantile_edges: n_bins must be positive");
  std::sort(values.begin(), values.end());
  std::vector<double> edges(n_bins + 1);
  const double last = static_cast<double>(values.size() - 1);
  for (int i = 0; i <= n_bins; ++i) {
    const double pos = last * static_cast<double>(i) / static_cast<double>(n_bins);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = static_cast<std::size_t>(std::ceil(pos));
    const double frac = pos - std::floor(pos);
    edges[i] = values[lo] * (1.0 - frac) + values[hi] * frac;
  }
  return edges;
}

Eigen::VectorXd normalize_timestamps(const std::vector<InteractionEvent>& events) {
  const auto n = static_cast<Eigen::Index>(events.size());
  Eigen::VectorXd out(n);
  if (n == 0) return out;
  std::int64_t lo = events.front().timestamp, hi = events.front().timestamp;
  for (const auto& e : events) {
    lo = std::min(lo, e.timestamp);
    hi = std::max(hi, e.timestamp);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    out[i] = (hi == lo) ? 0.5
                        : static_cast<double>(events[i].timestamp - lo) /
                              static_cast<double>(hi - lo);
  }
  return out;
}

const std::vector<std::string>& Tokenizer::event_features() {
  static const std::vector<std::string> kFeatures = {
      "brand",           "season_code",    "silhouette", "tag",
      "material",        "designer_status", "followed_brand", "action"};
  return kFeatures;
}

const std::vector<std::string>& Tokenizer::cls_features() {
  static const std::vector<std::string> kFeatures = {"age_segment", "gender_preference",
                                                     "sales_channel"};
  return kFeatures;
}

void Tokenizer::fit(const Catalog& catalog, const std::vector<LabeledSequence>& train,
                    int ple_bins) {
  if (catalog.items.empty()) throw InvalidArgument("tokenizer: empty catalog");
  values_.clear();
  index_.clear();
  sku_values_.clear();
  sku_index_.clear();

  for (const std::string& attr : {"brand", "season_code", "silhouette", "tag", "material"}) {
    auto it = catalog.vocab.values.find(attr);
    if (it == catalog.vocab.values.end() || it->second.empty())
      throw InvalidArgument("tokenizer: catalog vocabulary missing " + attr);
    values_[attr] = it->second;
  }
  values_["designer_status"] = {"0", "1"};
  values_["followed_brand"] = {"0", "1"};
  values_["action"] = {"click", "add_to_cart", "add_to_wishlist", "checkout"};

  for (const std::string& attr : cls_features()) {
    std::set<std::string> seen;
    for (const auto& s : train) {
      if (attr == "age_segment")
        seen.insert(s.age_segment);
      else if (attr == "gender_preference")
        seen.insert(s.gender_preference);
      else
        seen.insert(s.sales_channel);
    }
    seen.erase("");
    if (seen.empty()) seen.insert("unknown");
    values_[attr] = std::vector<std::string>(seen.begin(), seen.end());
  }

  for (auto& [feature, vals] : values_) {
    auto& idx = index_[feature];
    for (std::size_t i = 0; i < vals.size(); ++i) idx[vals[i]] = static_cast<int>(i);
  }

  sku_values_.reserve(catalog.items.size());
  for (const auto& item : catalog.items) {
    sku_index_[item.sku] = static_cast<int>(sku_values_.size());
    sku_values_.push_back(item.sku);
  }

  price_min_ = catalog.items.front().price;
  price_max_ = catalog.items.front().price;
  for (const auto& item : catalog.items) {
    price_min_ = std::min(price_min_, item.price);
    price_max_ = std::max(price_max_, item.price);
  }

  std::vector<double> prices, stamps;
  for (const auto& s : train) {
    const Eigen::VectorXd ts = normalize_timestamps(s.events);
    for (std::size_t i = 0; i < s.events.size(); ++i) {
      if (const CatalogItem* item = catalog.find(s.events[i].sku)) {
        prices.push_back(normalize_price(item->price));
        stamps.push_back(ts[static_cast<Eigen::Index>(i)]);
      }
    }
  }
  if (prices.empty()) {
    for (const auto& item : catalog.items) prices.push_back(normalize_price(item.price));
    stamps = {0.0, 0.5, 1.0};
  }
  price_edges_ = quantile_edges(prices, ple_bins);
  timestamp_edges_ = quantile_edges(stamps, ple_bins);
  fitted_ = true;
}

double Tokenizer::normalize_price(double price) const {
  if (price_max_ == price_min_) return 0.5;
  const double v = (price - price_min_) / (price_max_ - price_min_);
  return std::clamp(v, 0.0, 1.0);
}

int Tokenizer::lookup(const std::string& feature, const std::string& value) const {
  const auto fit = index_.find(feature);
  if (fit == index_.end()) throw InvalidArgument("tokenizer: unknown feature " + feature);
  const auto vit = fit->second.find(value);
  if (vit == fit->second.end())
    throw InvalidArgument("tokenizer: value '" + value + "' not in vocabulary of feature '" +
                          feature + "'");
  return vit->second;
}

TokenizedSequence Tokenizer::encode(const LabeledSequence& seq, const Catalog& catalog) const {
  if (!fitted_) throw InvalidArgument("tokenizer: encode called before fit");
  TokenizedSequence out;
  out.consumer_id = seq.consumer_id;
  const auto n = static_cast<Eigen::Index>(seq.events.size());
  const auto n_feat = static_cast<Eigen::Index>(event_features().size());
  out.cats.resize(n, n_feat);
  out.price.resize(n);
  out.sku.resize(n);
  out.timestamp = normalize_timestamps(seq.events);

  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& e = seq.events[static_cast<std::size_t>(i)];
    const CatalogItem* item = catalog.find(e.sku);
    if (item == nullptr) throw InvalidArgument("tokenizer: unknown sku " + e.sku);
    const auto sit = sku_index_.find(e.sku);
    if (sit == sku_index_.end())
      throw InvalidArgument("tokenizer: sku not in fitted catalog: " + e.sku);
    out.sku[i] = sit->second;
    out.cats(i, 0) = lookup("brand", item->brand);
    out.cats(i, 1) = lookup("season_code", item->season_code);
    out.cats(i, 2) = lookup("silhouette", item->silhouette);
    out.cats(i, 3) = lookup("tag", item->tag);
    out.cats(i, 4) = lookup("material", item->material);
    out.cats(i, 5) = item->is_designer ? 1 : 0;
    out.cats(i, 6) = e.followed_brand ? 1 : 0;
    if (e.action == Action::Unknown)
      throw InvalidArgument("tokenizer: value '" + e.action_raw +
                            "' not in vocabulary of feature 'action'");
    out.cats(i, 7) = lookup("action", to_string(e.action));
    out.price[i] = normalize_price(item->price);
  }

  out.cls[0] = lookup("age_segment", seq.age_segment);
  out.cls[1] = lookup("gender_preference", seq.gender_preference);
  out.cls[2] = lookup("sales_channel", seq.sales_channel);
  out.label = seq.label == SeqLabel::Core ? 1 : (seq.label == SeqLabel::Negative ? 0 : -1);
  return out;
}

std::vector<TokenizedSequence> Tokenizer::encode_all(const std::vector<LabeledSequence>& seqs,
                                                     const Catalog& catalog) const {
  std::vector<TokenizedSequence> out;
  out.reserve(seqs.size());
  for (const auto& s : seqs) out.push_back(encode(s, catalog));
  return out;
}

int Tokenizer::vocab_size(const std::string& feature) const {
  const auto it = values_.find(feature);
  if (it == values_.end()) throw InvalidArgument("tokenizer: unknown feature " + feature);
  return static_cast<int>(it->second.size());
}

int Tokenizer::sku_id(const std::string& sku) const {
  const auto it = sku_index_.find(sku);
  if (it == sku_index_.end()) throw InvalidArgument("tokenizer: unknown sku " + sku);
  return it->second;
}

const std::string& Tokenizer::sku_name(int id) const {
  if (id < 0 || id >= static_cast<int>(sku_values_.size()))
    throw InvalidArgument("tokenizer: sku id out of range");
  return sku_values_[static_cast<std::size_t>(id)];
}

nlohmann::ordered_json Tokenizer::to_json() const {
  nlohmann::ordered_json j;
  j["values"] = values_;
  j["skus"] = sku_values_;
  j["price_min"] = price_min_;
  j["price_max"] = price_max_;
  j["price_edges"] = price_edges_;
  j["timestamp_edges"] = timestamp_edges_;
  return j;
}

Tokenizer Tokenizer::from_json(const nlohmann::json& j) {
  Tokenizer t;
  t.values_ = j.at("values").get<std::map<std::string, std::vector<std::string>>>();
  t.sku_values_ = j.at("skus").get<std::vector<std::string>>();
  t.price_min_ = j.at("price_min").get<double>();
  t.price_max_ = j.at("price_max").get<double>();
  t.price_edges_ = j.at("price_edges").get<std::vector<double>>();
  t.timestamp_edges_ = j.at("timestamp_edges").get<std::vector<double>>();
  for (auto& [feature, vals] : t.values_) {
    auto& idx = t.index_[feature];
    for (std::size_t i = 0; i < vals.size(); ++i) idx[vals[i]] = static_cast<int>(i);
  }
  for (std::size_t i = 0; i < t.sku_values_.size(); ++i)
    t.sku_index_[t.sku_values_[i]] = static_cast<int>(i);
  t.fitted_ = true;
  return t;
}

}  // namespace unicon
