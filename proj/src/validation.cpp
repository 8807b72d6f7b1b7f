#include "unicon/validation.hpp"

#include <set>

namespace unicon {

const char* to_string(FindingKind kind) {
  switch (kind) {
    case FindingKind::DuplicateSku: return "duplicate_sku";
    case FindingKind::OutOfVocabulary: return "out_of_vocabulary";
    case FindingKind::NegativePrice: return "negative_price";
    case FindingKind::UnknownSku: return "unknown_sku";
    case FindingKind::UnknownAction: return "unknown_action";
    case FindingKind::BadTimestamp: return "bad_timestamp";
  }
  return "unknown";
}

std::size_t ValidationReport::count(FindingKind kind) const {
  std::size_t n = 0;
  for (const auto& f : findings)
    if (f.kind == kind) ++n;
  return n;
}

ValidationReport validate_catalog(const Catalog& catalog) {
  ValidationReport report;
  std::set<std::string> seen;
  for (const auto& item : catalog.items) {
    if (!seen.insert(item.sku).second)
      report.findings.push_back({FindingKind::DuplicateSku, item.sku, "sku appears more than once"});
    if (item.price < 0.0)
      report.findings.push_back({FindingKind::NegativePrice, item.sku, "price is negative"});
    for (const auto& attr : categorical_attributes()) {
      const std::string value = item_attribute(item, attr);
      if (!catalog.vocab.contains(attr, value))
        report.findings.push_back(
            {FindingKind::OutOfVocabulary, item.sku, attr + "=" + value + " not in declared vocabulary"});
    }
  }
  return report;
}

ValidationReport validate_events(const std::vector<InteractionEvent>& events,
                                 const Catalog& catalog) {
  ValidationReport report;
  for (const auto& e : events) {
    if (!catalog.find(e.sku))
      report.findings.push_back({FindingKind::UnknownSku, e.consumer_id, "sku " + e.sku + " not in catalog"});
    if (e.action == Action::Unknown)
      report.findings.push_back({FindingKind::UnknownAction, e.consumer_id, "action " + e.action_raw});
    if (e.timestamp <= 0)
      report.findings.push_back(
          {FindingKind::BadTimestamp, e.consumer_id, "timestamp " + std::to_string(e.timestamp)});
  }
  return report;
}

}  // namespace unicon
