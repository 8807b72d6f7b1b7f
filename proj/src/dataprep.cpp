#include "unicon/dataprep.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "unicon/io.hpp"
#include "unicon/rng.hpp"

namespace unicon {

namespace {

constexpr std::size_t kMinSequenceEvents = 3;

std::vector<InteractionEvent> filter_events(const std::vector<InteractionEvent>& events,
                                            std::int64_t from, std::int64_t to,
                                            const std::set<Action>* allowed) {
  std::vector<InteractionEvent> out;
  for (const auto& e : events) {
    if (e.timestamp < from || e.timestamp > to) continue;
    if (allowed && !allowed->count(e.action)) continue;
    out.push_back(e);
  }
  return out;
}

std::string split_id(const std::string& id, const std::string& gender) {
  const std::string suffix = "::" + gender;
  if (id.size() >= suffix.size() && id.compare(id.size() - suffix.size(), suffix.size(), suffix) == 0)
    return id;
  return id + suffix;
}

bool single_silhouette(const std::vector<InteractionEvent>& events, const Catalog& catalog) {
  std::set<std::string> seen;
  for (const auto& e : events) {
    seen.insert(catalog.at(e.sku).silhouette);
    if (seen.size() > 1) return false;
  }
  return true;
}

std::vector<InteractionEvent> tail_window(const std::vector<InteractionEvent>& events,
                                          std::size_t window_len) {
  if (events.size() <= window_len) return events;
  return std::vector<InteractionEvent>(events.end() - static_cast<std::ptrdiff_t>(window_len),
                                       events.end());
}

const char* to_string(SeqLabel label) {
  switch (label) {
    case SeqLabel::Core: return "core";
    case SeqLabel::Negative: return "negative";
    case SeqLabel::None: return "none";
  }
  return "none";
}

SeqLabel parse_seq_label(const std::string& s) {
  if (s == "core") return SeqLabel::Core;
  if (s == "negative") return SeqLabel::Negative;
  if (s == "none") return SeqLabel::None;
  throw FormatError("unknown sequence label: " + s);
}

}  // namespace

const char* to_string(Variant v) {
  switch (v) {
    case Variant::Baseline: return "baseline";
    case Variant::V1: return "v1";
    case Variant::V2: return "v2";
    case Variant::V3: return "v3";
    case Variant::V4: return "v4";
  }
  return "baseline";
}

Variant parse_variant(const std::string& s) {
  if (s == "baseline") return Variant::Baseline;
  if (s == "v1") return Variant::V1;
  if (s == "v2") return Variant::V2;
  if (s == "v3") return Variant::V3;
  if (s == "v4") return Variant::V4;
  throw ConfigError("unknown variant: " + s);
}

void LookalikeDatasetSpec::validate() const {
  if (window_len == 0) throw ConfigError("window_len must be positive");
  if (max_windows_per_core == 0) throw ConfigError("max_windows_per_core must be at least 1");
  if (core_lookback_days <= 0 || train_lookback_days <= 0 || min_account_age_days < 0)
    throw ConfigError("lookback windows must be positive");
  if (min_designer_interactions == 0) throw ConfigError("min_designer_interactions must be positive");
  if (allowed_actions.empty()) throw ConfigError("allowed_actions must not be empty");
  if (eval_fraction < 0.0 || eval_fraction >= 1.0) throw ConfigError("eval_fraction must be in [0,1)");
}

std::string base_consumer_id(const std::string& id) {
  const std::size_t pos = id.find("::");
  return pos == std::string::npos ? id : id.substr(0, pos);
}

std::vector<ConsumerHistory> apply_variant(const std::vector<ConsumerHistory>& histories,
                                           const Catalog& catalog, const VariantSpec& spec,
                                           std::int64_t now) {
  std::set<std::string> relevant = spec.style_relevant_silhouettes;
  if (relevant.empty())
    for (const auto& item : catalog.items)
      if (item.style_relevant) relevant.insert(item.silhouette);

  const bool style_filter = spec.variant != Variant::Baseline;
  const bool gender_split = spec.variant == Variant::V2 || spec.variant == Variant::V4;
  const bool drop_single = spec.variant == Variant::V3 || spec.variant == Variant::V4;
  const std::int64_t from = now - spec.lookback_days * kSecondsPerDay;

  std::vector<ConsumerHistory> out;
  for (const auto& h : histories) {
    std::vector<InteractionEvent> kept = filter_events(h.events, from, now, nullptr);
    if (style_filter) {
      std::vector<InteractionEvent> styled;
      for (const auto& e : kept)
        if (relevant.count(catalog.at(e.sku).silhouette)) styled.push_back(e);
      kept = std::move(styled);
    }
    if (kept.empty()) continue;

    std::vector<ConsumerHistory> pieces;
    if (gender_split) {
      std::map<std::string, std::vector<InteractionEvent>> by_gender;
      for (const auto& e : kept) by_gender[to_string(catalog.at(e.sku).gender)].push_back(e);
      for (auto& [gender, events] : by_gender)
        pieces.push_back(ConsumerHistory{split_id(h.consumer_id, gender), std::move(events)});
    } else {
      pieces.push_back(ConsumerHistory{h.consumer_id, std::move(kept)});
    }

    for (auto& piece : pieces) {
      if (piece.events.size() < kMinSequenceEvents) continue;
      if (drop_single && single_silhouette(piece.events, catalog)) continue;
      out.push_back(std::move(piece));
    }
  }
  return out;
}

std::set<std::string> label_core_designers(const std::vector<ConsumerHistory>& histories,
                                           const Catalog& catalog,
                                           const LookalikeDatasetSpec& spec, std::int64_t now) {
  spec.validate();
  const std::int64_t from = now - spec.core_lookback_days * kSecondsPerDay;
  std::set<std::string> core;
  for (const auto& h : histories) {
    std::size_t n = 0;
    for (const auto& e : h.events) {
      if (e.timestamp < from || e.timestamp > now) continue;
      if (catalog.at(e.sku).is_designer) ++n;
    }
    if (n >= spec.min_designer_interactions) core.insert(h.consumer_id);
  }
  return core;
}

LookalikeDataset build_lookalike_dataset(const std::vector<ConsumerHistory>& histories,
                                         const std::vector<ConsumerProfile>& profiles,
                                         const std::set<std::string>& core,
                                         const LookalikeDatasetSpec& spec, std::int64_t now,
                                         std::uint64_t seed) {
  spec.validate();
  if (core.empty()) throw InvalidArgument("core consumer set is empty");

  std::map<std::string, const ConsumerProfile*> profile_of;
  for (const auto& p : profiles) profile_of[p.consumer_id] = &p;

  const std::int64_t train_from = now - spec.train_lookback_days * kSecondsPerDay;
  const std::int64_t min_first_activity = now - spec.min_account_age_days * kSecondsPerDay;

  LookalikeDataset dataset;
  for (const auto& h : histories) {
    auto pit = profile_of.find(h.consumer_id);
    if (pit == profile_of.end())
      throw InvalidArgument("no profile for consumer " + h.consumer_id);
    const ConsumerProfile& profile = *pit->second;
    const bool is_core = core.count(h.consumer_id) > 0;

    std::vector<LabeledSequence> windows;
    if (is_core) {
      const auto eligible = filter_events(h.events, train_from, now, &spec.allowed_actions);
      if (eligible.size() < kMinSequenceEvents) continue;
      const std::size_t w = spec.window_len;
      std::size_t m = std::min(spec.max_windows_per_core, eligible.size() / w);
      std::vector<std::size_t> starts;
      if (m == 0) {
        starts.push_back(0);  // short history: one window holding everything
      } else {
        // Random non-overlapping placement: sorted offsets into the slack.
        Rng rng(derive_seed(seed, "windows:" + h.consumer_id));
        const std::size_t slack = eligible.size() - m * w;
        std::vector<std::size_t> offsets;
        for (std::size_t i = 0; i < m; ++i) offsets.push_back(rng.next_index(slack + 1));
        std::sort(offsets.begin(), offsets.end());
        for (std::size_t i = 0; i < m; ++i) starts.push_back(offsets[i] + i * w);
      }
      for (std::size_t start : starts) {
        LabeledSequence sequence;
        sequence.consumer_id = h.consumer_id;
        const std::size_t len = std::min(w, eligible.size() - start);
        sequence.events.assign(eligible.begin() + static_cast<std::ptrdiff_t>(start),
                               eligible.begin() + static_cast<std::ptrdiff_t>(start + len));
        sequence.label = SeqLabel::Core;
        windows.push_back(std::move(sequence));
      }
    } else {
      if (profile.first_activity_ts > min_first_activity) continue;
      const auto eligible = filter_events(h.events, train_from, now, &spec.allowed_actions);
      if (eligible.size() < kMinSequenceEvents) continue;
      LabeledSequence sequence;
      sequence.consumer_id = h.consumer_id;
      sequence.events = tail_window(eligible, spec.window_len);
      sequence.label = SeqLabel::Negative;
      windows.push_back(std::move(sequence));
    }

    for (auto& sequence : windows) {
      sequence.gender_preference = profile.gender_preference;
      sequence.age_segment = profile.age_segment;
      sequence.sales_channel = profile.sales_channel;
    }
    Rng split_rng(derive_seed(seed, "split:" + h.consumer_id));
    auto& bucket = split_rng.next_double() < spec.eval_fraction ? dataset.eval : dataset.train;
    for (auto& sequence : windows) bucket.push_back(std::move(sequence));
  }
  return dataset;
}

std::vector<LabeledSequence> build_inference_sequences(
    const std::vector<ConsumerHistory>& histories, const std::vector<ConsumerProfile>& profiles,
    const std::set<std::string>& core, const LookalikeDatasetSpec& spec) {
  spec.validate();
  std::map<std::string, const ConsumerProfile*> profile_of;
  for (const auto& p : profiles) profile_of[p.consumer_id] = &p;

  std::vector<LabeledSequence> out;
  for (const auto& h : histories) {
    if (core.count(h.consumer_id)) continue;
    std::vector<InteractionEvent> eligible;
    for (const auto& e : h.events)
      if (spec.allowed_actions.count(e.action)) eligible.push_back(e);
    if (eligible.size() < kMinSequenceEvents) continue;
    LabeledSequence sequence;
    sequence.consumer_id = h.consumer_id;
    sequence.events = tail_window(eligible, spec.window_len);
    sequence.label = SeqLabel::None;
    auto pit = profile_of.find(h.consumer_id);
    if (pit != profile_of.end()) {
      sequence.gender_preference = pit->second->gender_preference;
      sequence.age_segment = pit->second->age_segment;
      sequence.sales_channel = pit->second->sales_channel;
    }
    out.push_back(std::move(sequence));
  }
  return out;
}

void save_sequences(const std::vector<LabeledSequence>& sequences, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  for (const auto& s : sequences) {
    nlohmann::ordered_json j;
    j["consumer_id"] = s.consumer_id;
    j["label"] = to_string(s.label);
    nlohmann::ordered_json events = nlohmann::ordered_json::array();
    for (const auto& e : s.events) {
      nlohmann::ordered_json je;
      je["timestamp"] = e.timestamp;
      je["action"] = to_string(e.action);
      je["sku"] = e.sku;
      je["followed_brand"] = e.followed_brand;
      events.push_back(std::move(je));
    }
    j["events"] = std::move(events);
    j["features"] = {{"gender_preference", s.gender_preference},
                     {"age_segment", s.age_segment},
                     {"sales_channel", s.sales_channel}};
    out << j.dump() << "\n";
  }
}

std::vector<LabeledSequence> load_sequences(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open " + path);
  std::vector<LabeledSequence> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    LabeledSequence s;
    s.consumer_id = j.at("consumer_id").get<std::string>();
    s.label = parse_seq_label(j.at("label").get<std::string>());
    for (const auto& je : j.at("events")) {
      InteractionEvent e;
      e.consumer_id = s.consumer_id;
      e.timestamp = je.at("timestamp").get<std::int64_t>();
      e.action_raw = je.at("action").get<std::string>();
      e.action = parse_action(e.action_raw);
      e.sku = je.at("sku").get<std::string>();
      e.followed_brand = je.value("followed_brand", false);
      s.events.push_back(std::move(e));
    }
    const auto& f = j.at("features");
    s.gender_preference = f.value("gender_preference", "");
    s.age_segment = f.value("age_segment", "");
    s.sales_channel = f.value("sales_channel", "");
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace unicon
