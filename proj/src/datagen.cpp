#include "unicon/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <set>

#include "unicon/io.hpp"
#include "unicon/rng.hpp"

namespace unicon {

namespace {

const std::vector<std::string> kColors = {"black", "white", "navy",  "grey",  "beige", "red",
                                          "green", "blue",  "brown", "pink",  "olive", "cream"};
const std::vector<std::string> kSilhouettes = {"dress",  "shirt", "trousers", "skirt", "jacket",
                                               "coat",   "knit",  "sneaker",  "bag",   "accessory"};
const std::vector<std::string> kCommodityGroups = {"womenswear", "menswear",  "sportswear",
                                                   "footwear",   "outerwear", "denim",
                                                   "loungewear", "occasion"};
const std::vector<std::string> kMaterials = {"cotton", "wool", "leather", "denim", "silk", "synthetic"};
const std::vector<std::string> kSeasonCodes = {"SS25", "FS25", "SS26", "FS26"};
const std::vector<std::string> kTags = {"casual", "formal", "sport", "street", "classic", "trend"};
const std::vector<std::string> kAgeSegments = {"18-24", "25-34", "35-44", "45-54", "55+"};

std::string padded(const std::string& prefix, std::size_t i, int width) {
  std::string digits = std::to_string(i);
  while (static_cast<int>(digits.size()) < width) digits.insert(digits.begin(), '0');
  return prefix + digits;
}

void check_pool(std::size_t n, const std::vector<std::string>& pool, const char* what) {
  if (n < 1 || n > pool.size())
    throw ConfigError(std::string(what) + " count must be in [1, " + std::to_string(pool.size()) + "]");
}

std::vector<std::string> take(const std::vector<std::string>& pool, std::size_t n) {
  return std::vector<std::string>(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n));
}

// Per-value affinity: harmonic weights 1, 1/2, 1/3, ... on a sampled preferred
// subset, a flat floor elsewhere. Values in `damped` get a quarter of the floor.
std::map<std::string, double> subset_affinity(const std::vector<std::string>& vocab,
                                              const std::vector<std::string>& subset_pool,
                                              std::size_t n_preferred, double floor,
                                              const std::set<std::string>& damped, Rng& rng,
                                              std::vector<std::string>* chosen_out) {
  std::map<std::string, double> affinity;
  for (const auto& v : vocab) affinity[v] = floor * (damped.count(v) ? 0.25 : 1.0);
  std::vector<std::string> shuffled = subset_pool;
  rng.shuffle(shuffled);
  n_preferred = std::min(n_preferred, shuffled.size());
  for (std::size_t r = 0; r < n_preferred; ++r) {
    affinity[shuffled[r]] = 1.0 / static_cast<double>(r + 1);
    if (chosen_out) chosen_out->push_back(shuffled[r]);
  }
  return affinity;
}

struct CumulativeSampler {
  std::vector<double> cum;

  explicit CumulativeSampler(const std::vector<double>& weights) {
    cum.resize(weights.size());
    double total = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      total += weights[i];
      cum[i] = total;
    }
    if (total <= 0.0) throw NumericError("sampler has no positive weight");
  }

  std::size_t draw(Rng& rng) const {
    const double u = rng.next_double() * cum.back();
    return static_cast<std::size_t>(
        std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
  }
};

// Per-item zipf popularity by rank within the item's brand.
std::vector<double> item_popularity(const Catalog& catalog, double exponent) {
  std::map<std::string, std::size_t> seen;
  std::vector<double> pop(catalog.items.size());
  for (std::size_t i = 0; i < catalog.items.size(); ++i) {
    const std::size_t rank = seen[catalog.items[i].brand]++;
    pop[i] = std::pow(static_cast<double>(rank + 1), -exponent);
  }
  return pop;
}

const std::vector<std::string> kPrototypeAttrs = {"brand", "silhouette", "color", "commodity_group"};

}  // namespace

void GenConfig::validate() const {
  if (n_consumers == 0) throw ConfigError("n_consumers must be positive");
  if (n_skus == 0) throw ConfigError("n_skus must be positive");
  if (n_prototypes == 0) throw ConfigError("n_prototypes must be positive");
  if (n_brands == 0) throw ConfigError("n_brands must be positive");
  if (n_skus < n_brands) throw ConfigError("need at least one sku per brand");
  check_pool(n_colors, kColors, "color");
  check_pool(n_silhouettes, kSilhouettes, "silhouette");
  check_pool(n_commodity_groups, kCommodityGroups, "commodity_group");
  check_pool(n_materials, kMaterials, "material");
  check_pool(n_season_codes, kSeasonCodes, "season_code");
  check_pool(n_tags, kTags, "tag");
  if (designer_brand_fraction <= 0.0 || designer_brand_fraction >= 1.0)
    throw ConfigError("designer_brand_fraction must be in (0,1)");
  if (designer_consumer_fraction <= 0.0 || designer_consumer_fraction >= 1.0)
    throw ConfigError("designer_consumer_fraction must be in (0,1)");
  if (new_consumer_fraction < 0.0 || new_consumer_fraction >= 1.0)
    throw ConfigError("new_consumer_fraction must be in [0,1)");
  if (events_min == 0 || events_min > events_max)
    throw ConfigError("events range must satisfy 1 <= min <= max");
  if (min_designer_interactions == 0)
    throw ConfigError("min_designer_interactions must be positive");
  if (style_relevant_fraction <= 0.0 || style_relevant_fraction > 1.0)
    throw ConfigError("style_relevant_fraction must be in (0,1]");
  if (!(concentration > 0.0)) throw ConfigError("concentration must be positive");
  if (preference_jitter < 0.0) throw ConfigError("preference_jitter must be nonnegative");
  if (smoothing < 0.0 || smoothing >= 1.0) throw ConfigError("smoothing must be in [0,1)");
  if (designer_affinity < 0.0 || designer_affinity > 1.0)
    throw ConfigError("designer_affinity must be in [0,1]");
  if (window_days <= 0) throw ConfigError("window_days must be positive");
  const double action_total = p_click + p_wishlist + p_cart + p_checkout;
  if (p_click < 0 || p_wishlist < 0 || p_cart < 0 || p_checkout < 0 ||
      std::abs(action_total - 1.0) > 1e-9)
    throw ConfigError("action probabilities must be nonnegative and sum to 1");
}

Catalog generate_catalog(const GenConfig& config) {
  config.validate();
  Rng rng(derive_seed(config.seed, "catalog"));

  Catalog catalog;
  std::vector<std::string> brands;
  for (std::size_t b = 0; b < config.n_brands; ++b) brands.push_back(padded("brand", b, 2));

  std::vector<std::size_t> brand_order(config.n_brands);
  for (std::size_t b = 0; b < config.n_brands; ++b) brand_order[b] = b;
  rng.shuffle(brand_order);
  const std::size_t n_designer = static_cast<std::size_t>(
      std::ceil(config.designer_brand_fraction * static_cast<double>(config.n_brands)));
  std::set<std::size_t> designer_brands(brand_order.begin(),
                                        brand_order.begin() + static_cast<std::ptrdiff_t>(n_designer));

  catalog.vocab.values["brand"] = brands;
  catalog.vocab.values["color"] = take(kColors, config.n_colors);
  catalog.vocab.values["silhouette"] = take(kSilhouettes, config.n_silhouettes);
  catalog.vocab.values["commodity_group"] = take(kCommodityGroups, config.n_commodity_groups);
  catalog.vocab.values["material"] = take(kMaterials, config.n_materials);
  catalog.vocab.values["season_code"] = take(kSeasonCodes, config.n_season_codes);
  catalog.vocab.values["tag"] = take(kTags, config.n_tags);
  catalog.vocab.values["gender"] = {"female", "male", "unisex"};

  const std::size_t n_style_relevant = std::max<std::size_t>(
      1, static_cast<std::size_t>(
             std::llround(config.style_relevant_fraction * static_cast<double>(config.n_silhouettes))));

  for (std::size_t i = 0; i < config.n_skus; ++i) {
    CatalogItem item;
    item.sku = padded("SKU", i, 6);
    const std::size_t brand_idx = i % config.n_brands;
    item.brand = brands[brand_idx];
    item.is_designer = designer_brands.count(brand_idx) > 0;
    item.color = catalog.vocab.of("color")[rng.next_index(config.n_colors)];
    const std::size_t sil_idx = rng.next_index(config.n_silhouettes);
    item.silhouette = catalog.vocab.of("silhouette")[sil_idx];
    item.style_relevant = sil_idx < n_style_relevant;
    item.commodity_group =
        catalog.vocab.of("commodity_group")[rng.next_index(config.n_commodity_groups)];
    item.material = catalog.vocab.of("material")[rng.next_index(config.n_materials)];
    item.season_code = catalog.vocab.of("season_code")[rng.next_index(config.n_season_codes)];
    item.tag = catalog.vocab.of("tag")[rng.next_index(config.n_tags)];
    const double roll = rng.next_double();
    item.gender = roll < 0.45 ? ItemGender::Female : roll < 0.80 ? ItemGender::Male : ItemGender::Unisex;
    double price = std::exp(rng.normal() * 0.5 + 3.4);
    if (item.is_designer) price *= 3.0;
    item.price = std::round(price * 100.0) / 100.0;
    catalog.items.push_back(std::move(item));
  }
  catalog.rebuild_index();
  return catalog;
}

std::size_t designer_interaction_count(const ConsumerHistory& history, const Catalog& catalog,
                                       std::int64_t now, std::int64_t lookback_days) {
  const std::int64_t cutoff = now - lookback_days * kSecondsPerDay;
  std::size_t n = 0;
  for (const auto& e : history.events) {
    if (e.timestamp < cutoff || e.timestamp > now) continue;
    const CatalogItem* item = catalog.find(e.sku);
    if (item && item->is_designer) ++n;
  }
  return n;
}

GeneratedData generate_consumers(const GenConfig& config, const Catalog& catalog) {
  config.validate();
  if (catalog.items.empty()) throw InvalidArgument("catalog is empty");

  std::set<std::string> designer_brand_set;
  for (const auto& item : catalog.items)
    if (item.is_designer) designer_brand_set.insert(item.brand);
  std::vector<std::string> designer_free_brands;
  for (const auto& b : catalog.vocab.of("brand"))
    if (!designer_brand_set.count(b)) designer_free_brands.push_back(b);
  if (designer_brand_set.empty()) throw InvalidArgument("catalog has no designer items");
  if (designer_free_brands.empty()) throw InvalidArgument("catalog has no non-designer brands");

  const std::vector<double> pop = item_popularity(catalog, config.popularity_exponent);
  std::vector<std::size_t> designer_items;
  for (std::size_t i = 0; i < catalog.items.size(); ++i)
    if (catalog.items[i].is_designer) designer_items.push_back(i);
  if (designer_items.empty()) throw InvalidArgument("catalog has no designer items");

  // Per-attribute value index of every item, for fast weight lookups.
  std::map<std::string, std::vector<std::size_t>> value_idx;
  std::map<std::string, std::vector<std::string>> attr_values;
  for (const auto& attr : kPrototypeAttrs) {
    std::map<std::string, std::size_t> index;
    auto& vals = attr_values[attr];
    auto& idx = value_idx[attr];
    idx.reserve(catalog.items.size());
    for (const auto& item : catalog.items) {
      const std::string v = item_attribute(item, attr);
      auto [it, inserted] = index.emplace(v, vals.size());
      if (inserted) vals.push_back(v);
      idx.push_back(it->second);
    }
  }

  GeneratedData data;
  for (std::size_t p = 0; p < config.n_prototypes; ++p) {
    Rng rng(derive_seed(config.seed, "prototype:" + std::to_string(p)));
    StylePrototype proto;
    proto.prototype_id = static_cast<int>(p);
    proto.concentration = config.concentration;

    // Designer brands never enter the preferred subset and take half the
    // smoothing floor, keeping accidental core-designer labels rare.
    std::map<std::string, std::map<std::string, double>> affinity;
    affinity["brand"] = subset_affinity(catalog.vocab.of("brand"), designer_free_brands, 3,
                                        config.smoothing, designer_brand_set, rng,
                                        &proto.preferred_brands);
    affinity["silhouette"] = subset_affinity(catalog.vocab.of("silhouette"),
                                             catalog.vocab.of("silhouette"), 3, config.smoothing,
                                             {}, rng, nullptr);
    affinity["color"] = subset_affinity(catalog.vocab.of("color"), catalog.vocab.of("color"), 3,
                                        config.smoothing, {}, rng, nullptr);
    affinity["commodity_group"] =
        subset_affinity(catalog.vocab.of("commodity_group"), catalog.vocab.of("commodity_group"),
                        2, config.smoothing, {}, rng, nullptr);

    proto.item_weights.resize(catalog.items.size());
    double total = 0.0;
    for (std::size_t i = 0; i < catalog.items.size(); ++i) {
      double w = pop[i];
      for (const auto& attr : kPrototypeAttrs)
        w *= affinity.at(attr).at(item_attribute(catalog.items[i], attr));
      proto.item_weights[i] = w;
      total += w;
    }
    for (auto& w : proto.item_weights) w /= total;

    for (const auto& attr : kPrototypeAttrs) {
      Distribution marginal;
      for (std::size_t i = 0; i < catalog.items.size(); ++i)
        marginal[item_attribute(catalog.items[i], attr)] += proto.item_weights[i];
      proto.preferred[attr] = std::move(marginal);
    }
    data.prototypes.push_back(std::move(proto));
  }

  const std::int64_t window_start = config.now - config.window_days * kSecondsPerDay;
  const bool infinite_conc = !std::isfinite(config.concentration);

  for (std::size_t c = 0; c < config.n_consumers; ++c) {
    const std::string id = padded("C", c, 6);
    Rng rng(derive_seed(config.seed, "consumer:" + id));

    const std::size_t proto_idx = rng.next_index(config.n_prototypes);
    const StylePrototype& proto = data.prototypes[proto_idx];
    const bool core_candidate = rng.bernoulli(config.designer_consumer_fraction);
    const bool is_new = rng.bernoulli(config.new_consumer_fraction);

    // Per-consumer item weights: the prototype distribution sharpened by
    // `concentration` and perturbed by per-value taste jitter.
    std::vector<double> weights;
    std::size_t best_item = 0;
    std::size_t best_designer_item = designer_items.front();
    std::optional<CumulativeSampler> item_sampler;
    std::optional<CumulativeSampler> designer_sampler;
    if (infinite_conc) {
      double best = -1.0;
      double best_designer = -1.0;
      for (std::size_t i = 0; i < catalog.items.size(); ++i) {
        if (proto.item_weights[i] > best) { best = proto.item_weights[i]; best_item = i; }
        if (catalog.items[i].is_designer && proto.item_weights[i] > best_designer) {
          best_designer = proto.item_weights[i];
          best_designer_item = i;
        }
      }
    } else {
      std::map<std::string, std::vector<double>> taste;
      for (const auto& attr : kPrototypeAttrs) {
        auto& f = taste[attr];
        f.resize(attr_values.at(attr).size(), 1.0);
        if (config.preference_jitter > 0.0)
          for (auto& v : f) v = std::exp(config.preference_jitter * rng.normal());
      }
      weights.resize(catalog.items.size());
      for (std::size_t i = 0; i < catalog.items.size(); ++i) {
        double w = config.concentration == 1.0 ? proto.item_weights[i]
                                               : std::pow(proto.item_weights[i], config.concentration);
        for (const auto& attr : kPrototypeAttrs) w *= taste.at(attr)[value_idx.at(attr)[i]];
        weights[i] = w;
      }
      std::vector<double> designer_weights(designer_items.size());
      for (std::size_t d = 0; d < designer_items.size(); ++d)
        designer_weights[d] = weights[designer_items[d]];
      item_sampler.emplace(weights);
      designer_sampler.emplace(designer_weights);
    }

    auto draw_item = [&](bool designer_redirect) -> std::size_t {
      if (infinite_conc) return designer_redirect ? best_designer_item : best_item;
      if (designer_redirect) return designer_items[designer_sampler->draw(rng)];
      return item_sampler->draw(rng);
    };
    auto draw_action = [&]() -> Action {
      const double u = rng.next_double();
      if (u < config.p_click) return Action::Click;
      if (u < config.p_click + config.p_wishlist) return Action::AddToWishlist;
      if (u < config.p_click + config.p_wishlist + config.p_cart) return Action::AddToCart;
      return Action::Checkout;
    };
    auto followed = [&](const CatalogItem& item) -> bool {
      const bool preferred =
          std::find(proto.preferred_brands.begin(), proto.preferred_brands.end(), item.brand) !=
          proto.preferred_brands.end();
      const bool designer_follow = core_candidate && item.is_designer;
      const double p = (preferred || designer_follow) ? config.followed_pref_prob
                                                      : config.followed_base_prob;
      return rng.bernoulli(p);
    };

    const std::size_t n_events = config.events_min == config.events_max
                                     ? config.events_min
                                     : static_cast<std::size_t>(rng.uniform_int(
                                           static_cast<int>(config.events_min),
                                           static_cast<int>(config.events_max)));
    std::int64_t span_start = window_start;
    if (is_new)
      span_start = config.now - static_cast<std::int64_t>(6.5 * static_cast<double>(kSecondsPerDay));

    std::vector<std::int64_t> stamps;
    stamps.reserve(n_events);
    for (std::size_t e = 0; e < n_events; ++e)
      stamps.push_back(span_start +
                       static_cast<std::int64_t>(rng.next_double() *
                                                 static_cast<double>(config.now - span_start)));
    std::sort(stamps.begin(), stamps.end());

    ConsumerHistory history{id, {}};
    for (std::int64_t ts : stamps) {
      const bool redirect = core_candidate && rng.bernoulli(config.designer_affinity);
      const std::size_t idx = draw_item(redirect);
      const auto& item = catalog.items[idx];
      const Action action = draw_action();
      history.events.push_back({id, ts, action, to_string(action), item.sku, followed(item)});
    }

    // Core-designer candidates are guaranteed to reach the interaction
    // threshold inside the labeling window.
    if (core_candidate) {
      const std::size_t have = designer_interaction_count(history, catalog, config.now, 365);
      if (have < config.min_designer_interactions) {
        const std::size_t missing = config.min_designer_interactions - have +
                                    static_cast<std::size_t>(rng.next_index(4));
        const std::int64_t inject_start =
            std::max(span_start, config.now - 300 * kSecondsPerDay);
        for (std::size_t e = 0; e < missing; ++e) {
          const std::int64_t ts =
              inject_start + static_cast<std::int64_t>(
                                 rng.next_double() * static_cast<double>(config.now - inject_start));
          const std::size_t idx = draw_item(true);
          const auto& item = catalog.items[idx];
          const Action action = draw_action();
          history.events.push_back({id, ts, action, to_string(action), item.sku, followed(item)});
        }
        sort_events(history.events);
      }
    }

    ConsumerProfile profile;
    profile.consumer_id = id;
    const double g = rng.next_double();
    profile.gender_preference = g < 0.5 ? "female" : g < 0.9 ? "male" : "unisex";
    profile.age_segment = kAgeSegments[rng.next_index(kAgeSegments.size())];
    profile.sales_channel = rng.next_double() < 0.6 ? "app" : "web";
    const std::int64_t earliest = history.events.front().timestamp;
    if (is_new) {
      profile.first_activity_ts =
          std::min(earliest, config.now - static_cast<std::int64_t>(
                                              rng.next_double() * 6.0 * kSecondsPerDay) -
                                 static_cast<std::int64_t>(kSecondsPerDay / 2));
    } else {
      profile.first_activity_ts =
          earliest - static_cast<std::int64_t>(rng.next_double() * 30.0 * kSecondsPerDay);
    }

    data.truth.prototype_of[id] = proto.prototype_id;
    data.truth.is_core[id] =
        designer_interaction_count(history, catalog, config.now, 365) >=
        config.min_designer_interactions;
    data.histories.push_back(std::move(history));
    data.profiles.push_back(std::move(profile));
  }
  return data;
}

void save_ground_truth(const GroundTruth& truth, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  out << "consumer_id,prototype_id,is_core_designer\n";
  for (const auto& [id, proto] : truth.prototype_of)
    out << id << ',' << proto << ',' << (truth.is_core.at(id) ? "true" : "false") << "\n";
}

GroundTruth load_ground_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open " + path);
  GroundTruth truth;
  std::string line;
  if (!std::getline(in, line)) throw FormatError("ground truth file has no header: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "consumer_id,prototype_id,is_core_designer")
    throw FormatError("bad ground truth header: " + line);
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto f = split_csv(line);
    if (f.size() != 3) throw FormatError("ground truth row has " + std::to_string(f.size()) + " fields");
    truth.prototype_of[f[0]] = std::stoi(f[1]);
    truth.is_core[f[0]] = parse_bool(f[2]);
  }
  return truth;
}

std::vector<InteractionEvent> flatten_histories(const std::vector<ConsumerHistory>& histories) {
  std::vector<InteractionEvent> events;
  for (const auto& h : histories)
    events.insert(events.end(), h.events.begin(), h.events.end());
  return events;
}

}  // namespace unicon
