#pragma once

#include <array>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "piie/errors.hpp"
#include "piie/metrics.hpp"
#include "piie/tags.hpp"

namespace piie {

// One machine-readable result line. Global TP/FP/FN are the sums of the
// per-category counts, so they are not stored separately.
struct ReportRecord {
  std::string domain;
  std::string config;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::array<PrfScores, category_count> per_category{};

  static ReportRecord from_metrics(std::string domain, std::string config, const MetricsReport& m) {
    return {std::move(domain), std::move(config), m.accuracy, m.precision, m.recall, m.f1, m.per_category};
  }

  friend bool operator==(const ReportRecord&, const ReportRecord&) = default;
};

inline nlohmann::json to_json(const PrfScores& s) {
  return {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}, {"tp", s.tp}, {"fp", s.fp}, {"fn", s.fn}};
}

inline PrfScores prf_from_json(const nlohmann::json& j) {
  PrfScores s;
  s.precision = j.at("precision").get<double>();
  s.recall = j.at("recall").get<double>();
  s.f1 = j.at("f1").get<double>();
  s.tp = j.at("tp").get<std::size_t>();
  s.fp = j.at("fp").get<std::size_t>();
  s.fn = j.at("fn").get<std::size_t>();
  return s;
}

inline nlohmann::json to_json(const ReportRecord& r) {
  nlohmann::json per = nlohmann::json::object();
  for (auto c : all_categories) per[std::string(to_string(c))] = to_json(r.per_category[static_cast<std::size_t>(c)]);
  return {{"domain", r.domain},       {"config", r.config}, {"accuracy", r.accuracy}, {"precision", r.precision},
          {"recall", r.recall},       {"f1", r.f1},         {"per_category", per}};
}

inline ReportRecord record_from_json(const nlohmann::json& j) {
  try {
    ReportRecord r;
    r.domain = j.at("domain").get<std::string>();
    r.config = j.at("config").get<std::string>();
    r.accuracy = j.at("accuracy").get<double>();
    r.precision = j.at("precision").get<double>();
    r.recall = j.at("recall").get<double>();
    r.f1 = j.at("f1").get<double>();
    const auto& per = j.at("per_category");
    for (auto c : all_categories)
      r.per_category[static_cast<std::size_t>(c)] = prf_from_json(per.at(std::string(to_string(c))));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed report record: ") + e.what());
  }
}

inline std::string to_jsonl(const ReportRecord& r) { return to_json(r).dump(); }

inline void write_jsonl(std::ostream& out, const std::vector<ReportRecord>& records) {
  for (const auto& r : records) out << to_jsonl(r) << '\n';
}

inline std::vector<ReportRecord> read_jsonl(std::istream& in) {
  std::vector<ReportRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(std::string("malformed report line: ") + e.what());
    }
  }
  return out;
}

inline std::string percent(double v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * v);
  return buf;
}

// Plain-text table with left-aligned columns.
inline std::string format_table(const std::vector<std::string>& header,
                                const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size() && c < width.size(); ++c) width[c] = std::max(width[c], r[c].size());
  std::ostringstream os;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < width.size(); ++c) {
      const std::string cell = c < cells.size() ? cells[c] : "";
      os << cell;
      if (c + 1 < width.size()) os << std::string(width[c] - cell.size() + 2, ' ');
    }
    os << '\n';
  };
  line(header);
  std::size_t total = 0;
  for (auto w : width) total += w + 2;
  os << std::string(total - 2, '-') << '\n';
  for (const auto& r : rows) line(r);
  return os.str();
}

}  // namespace piie
