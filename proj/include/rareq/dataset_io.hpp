#pragma once

// Per-location capacity samples as CSV:
//   location_id,x,y,z,sample_index,value
// one row per sample, written with 17 significant digits so values round-trip.

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "rareq/channel_sim.hpp"
#include "rareq/errors.hpp"
#include "rareq/stats_core.hpp"

namespace rareq {

struct LocationSamples {
  Location location;
  SampleSet samples;
};

inline constexpr const char* kDatasetHeader = "location_id,x,y,z,sample_index,value";

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_dataset_csv(std::ostream& out, const std::vector<LocationSamples>& data) {
  out << kDatasetHeader << '\n';
  for (const auto& entry : data) {
    const auto& loc = entry.location;
    const std::string prefix = std::to_string(loc.id) + ',' + format_double(loc.x) + ',' + format_double(loc.y) + ',' +
                               format_double(loc.z) + ',';
    const auto values = entry.samples.values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      out << prefix << i << ',' << format_double(values[i]) << '\n';
    }
  }
}

namespace detail {

inline double parse_double(const std::string& field, std::size_t line) {
  double v = 0.0;
  const auto* first = field.data();
  const auto* last = field.data() + field.size();
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) {
    throw ConfigError("dataset line " + std::to_string(line) + ": cannot parse number '" + field + "'");
  }
  return v;
}

}  // namespace detail

/// Locations are returned in order of first appearance; samples within a
/// location are ordered by sample_index.
inline std::vector<LocationSamples> read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("dataset is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kDatasetHeader) throw ConfigError("dataset header must be '" + std::string(kDatasetHeader) + "'");

  struct Pending {
    Location location;
    std::vector<std::pair<long long, double>> rows;
  };
  std::vector<Pending> pending;
  std::map<std::int64_t, std::size_t> index;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 6) {
      throw ConfigError("dataset line " + std::to_string(line_no) + ": expected 6 fields");
    }
    const auto id = static_cast<std::int64_t>(detail::parse_double(fields[0], line_no));
    const Location loc{id, detail::parse_double(fields[1], line_no), detail::parse_double(fields[2], line_no),
                       detail::parse_double(fields[3], line_no)};
    const auto sample_index = static_cast<long long>(detail::parse_double(fields[4], line_no));
    const double value = detail::parse_double(fields[5], line_no);
    auto [it, inserted] = index.try_emplace(id, pending.size());
    if (inserted) pending.push_back({loc, {}});
    pending[it->second].rows.emplace_back(sample_index, value);
  }

  std::vector<LocationSamples> out;
  out.reserve(pending.size());
  for (auto& p : pending) {
    std::stable_sort(p.rows.begin(), p.rows.end(), [](auto& a, auto& b) { return a.first < b.first; });
    std::vector<double> values;
    values.reserve(p.rows.size());
    for (auto& r : p.rows) values.push_back(r.second);
    out.push_back({p.location, SampleSet(std::move(values))});
  }
  return out;
}

}  // namespace rareq
