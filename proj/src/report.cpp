#include "lyra/report.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace lyra {

namespace {

nlohmann::ordered_json aggregate_to_json(const Aggregate& a) {
  return {{"mean", a.mean}, {"median", a.median}, {"p95", a.p95}};
}

Aggregate aggregate_from_json(const nlohmann::json& j) {
  Aggregate a;
  a.mean = j.at("mean").get<double>();
  a.median = j.at("median").get<double>();
  a.p95 = j.at("p95").get<double>();
  return a;
}

// Shortest round-trip decimal form, same as the JSON files use.
std::string num(double v) { return nlohmann::json(v).dump(); }

}  // namespace

nlohmann::ordered_json metrics_to_json(const MetricsReport& m, const RunInfo& info) {
  nlohmann::ordered_json doc;
  doc["run"] = {{"alloc", info.alloc},
                {"reclaim", info.reclaim},
                {"scenario", info.scenario},
                {"loaning", info.loaning},
                {"seed", info.seed}};
  doc["submissions"] = m.submissions;
  doc["finished"] = m.finished;
  doc["preemptions"] = m.preemptions;
  doc["scale_ops"] = m.scale_ops;
  doc["reclaim_events"] = m.reclaim_events;
  doc["servers_loaned"] = m.servers_loaned;
  doc["servers_reclaimed"] = m.servers_reclaimed;
  doc["preemption_ratio"] = m.preemption_ratio;
  doc["collateral_damage_mean"] = m.collateral_damage_mean;
  doc["queuing_s"] = aggregate_to_json(m.queuing);
  doc["jct_s"] = aggregate_to_json(m.jct);
  doc["usage"] = {{"training_mean", m.training_usage_mean},
                  {"overall_mean", m.overall_usage_mean}};
  auto series = nlohmann::ordered_json::array();
  for (const auto& p : m.usage)
    series.push_back({{"t_s", p.t_s}, {"training", p.training_usage}, {"overall", p.overall_usage}});
  doc["usage"]["series"] = std::move(series);
  auto jobs = nlohmann::ordered_json::array();
  for (const auto& j : m.jobs) {
    jobs.push_back({{"id", j.id},
                    {"submit_s", j.submit_s},
                    {"first_start_s", j.first_start_s},
                    {"finish_s", j.finish_s},
                    {"queuing_s", j.queuing_s},
                    {"running_s", j.running_s},
                    {"overhead_s", j.overhead_s},
                    {"jct_s", j.jct_s},
                    {"preemptions", j.preemptions},
                    {"finished", j.finished}});
  }
  doc["jobs"] = std::move(jobs);
  return doc;
}

MetricsReport metrics_from_json(const nlohmann::json& doc) {
  MetricsReport m;
  m.submissions = doc.at("submissions").get<int>();
  m.finished = doc.at("finished").get<int>();
  m.preemptions = doc.at("preemptions").get<int>();
  m.scale_ops = doc.at("scale_ops").get<int>();
  m.reclaim_events = doc.at("reclaim_events").get<int>();
  m.servers_loaned = doc.at("servers_loaned").get<int>();
  m.servers_reclaimed = doc.at("servers_reclaimed").get<int>();
  m.preemption_ratio = doc.at("preemption_ratio").get<double>();
  m.collateral_damage_mean = doc.at("collateral_damage_mean").get<double>();
  m.queuing = aggregate_from_json(doc.at("queuing_s"));
  m.jct = aggregate_from_json(doc.at("jct_s"));
  m.training_usage_mean = doc.at("usage").at("training_mean").get<double>();
  m.overall_usage_mean = doc.at("usage").at("overall_mean").get<double>();
  for (const auto& p : doc.at("usage").at("series")) {
    UsagePoint u;
    u.t_s = p.at("t_s").get<std::int64_t>();
    u.training_usage = p.at("training").get<double>();
    u.overall_usage = p.at("overall").get<double>();
    m.usage.push_back(u);
  }
  for (const auto& j : doc.at("jobs")) {
    JobMetrics jm;
    jm.id = j.at("id").get<std::string>();
    jm.submit_s = j.at("submit_s").get<double>();
    jm.first_start_s = j.at("first_start_s").get<double>();
    jm.finish_s = j.at("finish_s").get<double>();
    jm.queuing_s = j.at("queuing_s").get<double>();
    jm.running_s = j.at("running_s").get<double>();
    jm.overhead_s = j.at("overhead_s").get<double>();
    jm.jct_s = j.at("jct_s").get<double>();
    jm.preemptions = j.at("preemptions").get<int>();
    jm.finished = j.at("finished").get<bool>();
    m.jobs.push_back(std::move(jm));
  }
  return m;
}

std::string summary_csv_header() {
  return "policy,reclaim,scenario,queuing_mean_s,queuing_median_s,queuing_p95_s,"
         "jct_mean_s,jct_median_s,jct_p95_s,training_usage,overall_usage,"
         "preemption_ratio,collateral_damage,scale_ops";
}

std::string summary_csv_row(const MetricsReport& m, const RunInfo& info) {
  std::ostringstream row;
  row << info.alloc << ',' << info.reclaim << ',' << info.scenario << ',' << num(m.queuing.mean)
      << ',' << num(m.queuing.median) << ',' << num(m.queuing.p95) << ',' << num(m.jct.mean) << ','
      << num(m.jct.median) << ',' << num(m.jct.p95) << ',' << num(m.training_usage_mean) << ','
      << num(m.overall_usage_mean) << ',' << num(m.preemption_ratio) << ','
      << num(m.collateral_damage_mean) << ',' << m.scale_ops;
  return row.str();
}

void write_report(const MetricsReport& m, const RunInfo& info, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const auto path = [&](const char* name) { return (std::filesystem::path(dir) / name).string(); };
  {
    std::ofstream out(path("metrics.json"));
    if (!out) throw std::runtime_error("cannot write " + path("metrics.json"));
    out << metrics_to_json(m, info).dump(2) << '\n';
  }
  {
    std::ofstream out(path("summary.csv"));
    if (!out) throw std::runtime_error("cannot write " + path("summary.csv"));
    out << summary_csv_header() << '\n' << summary_csv_row(m, info) << '\n';
  }
}

}  // namespace lyra
