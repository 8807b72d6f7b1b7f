#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "unicon/types.hpp"

namespace unicon {

enum class FindingKind {
  DuplicateSku,
  OutOfVocabulary,
  NegativePrice,
  UnknownSku,
  UnknownAction,
  BadTimestamp,
};

const char* to_string(FindingKind kind);

struct Finding {
  FindingKind kind;
  std::string subject;  // sku or consumer id the finding is about
  std::string detail;
};

struct ValidationReport {
  std::vector<Finding> findings;

  bool ok() const { return findings.empty(); }
  std::size_t count(FindingKind kind) const;
};

ValidationReport validate_catalog(const Catalog& catalog);
ValidationReport validate_events(const std::vector<InteractionEvent>& events,
                                 const Catalog& catalog);

}  // namespace unicon
