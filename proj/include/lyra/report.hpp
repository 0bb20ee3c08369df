#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "lyra/sim.hpp"

namespace lyra {

/// What produced a report; echoed into metrics.json and summary.csv.
struct RunInfo {
  std::string alloc = "lyra";
  std::string reclaim = "lyra";
  std::string scenario = "basic";
  bool loaning = true;
  std::uint64_t seed = 0;
};

nlohmann::ordered_json metrics_to_json(const MetricsReport& m, const RunInfo& info);

/// Inverse of metrics_to_json for the report fields (RunInfo is not restored).
MetricsReport metrics_from_json(const nlohmann::json& doc);

std::string summary_csv_header();
std::string summary_csv_row(const MetricsReport& m, const RunInfo& info);

/// Writes metrics.json and summary.csv into dir (created if missing).
void write_report(const MetricsReport& m, const RunInfo& info, const std::string& dir);

}  // namespace lyra
