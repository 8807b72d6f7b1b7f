#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "unicon/types.hpp"

namespace unicon {

// CSV files in this project use no quoting; fields must not contain commas
// or newlines. Generated data never does.
std::vector<std::string> split_csv(const std::string& line);
bool parse_bool(const std::string& s);
std::string format_double(double v);  // shortest round-trip form

// "2025-01-02T03:04:05" with optional trailing "Z", interpreted as UTC.
std::int64_t parse_iso8601(const std::string& s);

void save_catalog(const Catalog& catalog, const std::string& path);
Catalog load_catalog(const std::string& path);

void save_events(const std::vector<InteractionEvent>& events, const std::string& path);
std::vector<InteractionEvent> load_events(const std::string& path);

void save_consumers(const std::vector<ConsumerProfile>& consumers, const std::string& path);
std::vector<ConsumerProfile> load_consumers(const std::string& path);

}  // namespace unicon
