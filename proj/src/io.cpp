#include "unicon/io.hpp"

#include <charconv>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace unicon {

namespace {

std::ifstream open_for_read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open " + path);
  return in;
}

std::ofstream open_for_write(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  return out;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw FormatError("");
    return v;
  } catch (const std::exception&) {
    throw FormatError("bad " + what + " value: " + s);
  }
}

std::int64_t parse_int64(const std::string& s, const std::string& what) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw FormatError("bad " + what + " value: " + s);
  return v;
}

const std::string kCatalogHeader =
    "sku,brand,color,silhouette,commodity_group,material,season_code,tag,"
    "price,is_designer,gender,style_relevant";

}  // namespace

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

bool parse_bool(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw FormatError("bad boolean value: " + s);
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw NumericError("cannot format double");
  return std::string(buf, ptr);
}

std::int64_t parse_iso8601(const std::string& s) {
  std::tm tm = {};
  int y, mo, d, h, mi, sec;
  if (std::sscanf(s.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d", &y, &mo, &d, &h, &mi, &sec) != 6)
    throw FormatError("bad timestamp: " + s);
  tm.tm_year = y - 1900;
  tm.tm_mon = mo - 1;
  tm.tm_mday = d;
  tm.tm_hour = h;
  tm.tm_min = mi;
  tm.tm_sec = sec;
  return static_cast<std::int64_t>(timegm(&tm));
}

void save_catalog(const Catalog& catalog, const std::string& path) {
  auto out = open_for_write(path);
  for (const auto& attr : categorical_attributes()) {
    out << "# vocab " << attr << "=";
    const auto& vals = catalog.vocab.of(attr);
    for (std::size_t i = 0; i < vals.size(); ++i) out << (i ? "," : "") << vals[i];
    out << "\n";
  }
  out << kCatalogHeader << "\n";
  for (const auto& it : catalog.items) {
    out << it.sku << ',' << it.brand << ',' << it.color << ',' << it.silhouette << ','
        << it.commodity_group << ',' << it.material << ',' << it.season_code << ',' << it.tag
        << ',' << format_double(it.price) << ',' << (it.is_designer ? "true" : "false") << ','
        << to_string(it.gender) << ',' << (it.style_relevant ? "true" : "false") << "\n";
  }
}

Catalog load_catalog(const std::string& path) {
  auto in = open_for_read(path);
  Catalog catalog;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    line = strip_cr(line);
    if (line.empty()) continue;
    if (line.rfind("# vocab ", 0) == 0) {
      std::size_t eq = line.find('=', 8);
      if (eq == std::string::npos) throw FormatError("bad vocab line: " + line);
      std::string attr = line.substr(8, eq - 8);
      catalog.vocab.values[attr] = split_csv(line.substr(eq + 1));
      continue;
    }
    if (!header_seen) {
      if (line != kCatalogHeader) throw FormatError("bad catalog header: " + line);
      header_seen = true;
      continue;
    }
    auto f = split_csv(line);
    if (f.size() != 12) throw FormatError("catalog row has " + std::to_string(f.size()) + " fields");
    CatalogItem it;
    it.sku = f[0];
    it.brand = f[1];
    it.color = f[2];
    it.silhouette = f[3];
    it.commodity_group = f[4];
    it.material = f[5];
    it.season_code = f[6];
    it.tag = f[7];
    it.price = parse_double(f[8], "price");
    it.is_designer = parse_bool(f[9]);
    it.gender = parse_item_gender(f[10]);
    it.style_relevant = parse_bool(f[11]);
    catalog.items.push_back(std::move(it));
  }
  if (!header_seen) throw FormatError("catalog file has no header: " + path);
  catalog.rebuild_index();
  return catalog;
}

void save_events(const std::vector<InteractionEvent>& events, const std::string& path) {
  auto out = open_for_write(path);
  for (const auto& e : events) {
    nlohmann::ordered_json j;
    j["consumer_id"] = e.consumer_id;
    j["timestamp"] = e.timestamp;
    j["action"] = to_string(e.action);
    j["sku"] = e.sku;
    j["followed_brand"] = e.followed_brand;
    out << j.dump() << "\n";
  }
}

std::vector<InteractionEvent> load_events(const std::string& path) {
  auto in = open_for_read(path);
  std::vector<InteractionEvent> events;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("consumer_id") || !j.contains("timestamp") ||
        !j.contains("action") || !j.contains("sku"))
      throw FormatError(path + ":" + std::to_string(lineno) + ": missing event field");
    InteractionEvent e;
    e.consumer_id = j.at("consumer_id").get<std::string>();
    const auto& ts = j.at("timestamp");
    if (ts.is_string())
      e.timestamp = parse_iso8601(ts.get<std::string>());
    else if (ts.is_number_integer())
      e.timestamp = ts.get<std::int64_t>();
    else
      throw FormatError(path + ":" + std::to_string(lineno) + ": bad timestamp type");
    e.action_raw = j.at("action").get<std::string>();
    e.action = parse_action(e.action_raw);
    e.sku = j.at("sku").get<std::string>();
    e.followed_brand = j.value("followed_brand", false);
    events.push_back(std::move(e));
  }
  return events;
}

void save_consumers(const std::vector<ConsumerProfile>& consumers, const std::string& path) {
  auto out = open_for_write(path);
  out << "consumer_id,gender_preference,age_segment,sales_channel,first_activity_ts\n";
  for (const auto& c : consumers)
    out << c.consumer_id << ',' << c.gender_preference << ',' << c.age_segment << ','
        << c.sales_channel << ',' << c.first_activity_ts << "\n";
}

std::vector<ConsumerProfile> load_consumers(const std::string& path) {
  auto in = open_for_read(path);
  std::vector<ConsumerProfile> consumers;
  std::string line;
  if (!std::getline(in, line))
    throw FormatError("consumers file has no header: " + path);
  if (strip_cr(line) != "consumer_id,gender_preference,age_segment,sales_channel,first_activity_ts")
    throw FormatError("bad consumers header: " + line);
  while (std::getline(in, line)) {
    line = strip_cr(line);
    if (line.empty()) continue;
    auto f = split_csv(line);
    if (f.size() != 5) throw FormatError("consumers row has " + std::to_string(f.size()) + " fields");
    consumers.push_back({f[0], f[1], f[2], f[3], parse_int64(f[4], "first_activity_ts")});
  }
  return consumers;
}

}  // namespace unicon
