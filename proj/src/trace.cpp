#include "lyra/trace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "lyra/rng.hpp"

namespace lyra {

namespace {

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return in;
}

std::ofstream create_or_throw(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot create " + path);
  return out;
}

}  // namespace

double UtilTrace::at(double t_s) const {
  if (samples.empty()) throw std::logic_error("empty utilization trace");
  double value = samples.front().utilization;
  for (const auto& s : samples) {
    if (static_cast<double>(s.t_s) > t_s) break;
    value = s.utilization;
  }
  return value;
}

JobTrace parse_job_trace(std::istream& in, const std::string& source_name) {
  static const std::set<std::string> known = {
      "id",           "submit_s",      "gpus_per_worker",
      "min_workers",  "max_workers",   "runtime_at_max_s",
      "gpu_flexible", "checkpointing", "hetero_capable"};
  JobTrace trace;
  std::set<std::string> seen_ids;
  std::string line;
  int lineno = 0;
  std::int64_t last_submit = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw TraceError(source_name, lineno, std::string("bad JSON: ") + e.what());
    }
    if (!j.is_object()) throw TraceError(source_name, lineno, "expected a JSON object");
    for (const auto& [key, value] : j.items())
      if (!known.count(key)) throw TraceError(source_name, lineno, "unknown field '" + key + "'");

    JobSpec spec;
    try {
      spec.id = j.at("id").get<std::string>();
      spec.submit_s = j.at("submit_s").get<std::int64_t>();
      spec.gpus_per_worker = j.at("gpus_per_worker").get<int>();
      spec.min_workers = j.at("min_workers").get<int>();
      spec.max_workers = j.value("max_workers", spec.min_workers);
      spec.runtime_at_max_s = j.at("runtime_at_max_s").get<double>();
      spec.gpu_flexible = j.value("gpu_flexible", false);
      spec.checkpointing = j.value("checkpointing", false);
      spec.hetero_capable = j.value("hetero_capable", false);
    } catch (const nlohmann::json::exception& e) {
      throw TraceError(source_name, lineno, std::string("bad field: ") + e.what());
    }
    try {
      spec.validate();
    } catch (const std::invalid_argument& e) {
      throw TraceError(source_name, lineno, e.what());
    }
    if (!seen_ids.insert(spec.id).second)
      throw TraceError(source_name, lineno, "duplicate job id '" + spec.id + "'");
    if (spec.submit_s < last_submit)
      throw TraceError(source_name, lineno, "submit_s decreases");
    last_submit = spec.submit_s;
    trace.jobs.push_back(std::move(spec));
  }
  return trace;
}

JobTrace parse_job_trace_file(const std::string& path) {
  auto in = open_or_throw(path);
  return parse_job_trace(in, path);
}

void write_job_trace(const JobTrace& trace, std::ostream& out) {
  for (const auto& j : trace.jobs) {
    nlohmann::ordered_json o;
    o["id"] = j.id;
    o["submit_s"] = j.submit_s;
    o["gpus_per_worker"] = j.gpus_per_worker;
    o["min_workers"] = j.min_workers;
    o["max_workers"] = j.max_workers;
    o["runtime_at_max_s"] = j.runtime_at_max_s;
    o["gpu_flexible"] = j.gpu_flexible;
    o["checkpointing"] = j.checkpointing;
    o["hetero_capable"] = j.hetero_capable;
    out << o.dump() << '\n';
  }
}

void write_job_trace_file(const JobTrace& trace, const std::string& path) {
  auto out = create_or_throw(path);
  write_job_trace(trace, out);
}

UtilTrace parse_util_trace(std::istream& in, const std::string& source_name) {
  UtilTrace trace;
  std::string line;
  int lineno = 0;
  if (!std::getline(in, line)) throw TraceError(source_name, 1, "empty utilization trace");
  ++lineno;
  if (line == "t_s,utilization\r") line.pop_back();
  if (line != "t_s,utilization")
    throw TraceError(source_name, lineno, "expected header 't_s,utilization'");
  std::int64_t spacing = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    UtilSample s;
    char comma = 0;
    if (!(row >> s.t_s >> comma >> s.utilization) || comma != ',')
      throw TraceError(source_name, lineno, "malformed row");
    if (s.utilization < 0.0 || s.utilization > 1.0)
      throw TraceError(source_name, lineno, "utilization outside [0, 1]");
    if (!trace.samples.empty()) {
      const std::int64_t dt = s.t_s - trace.samples.back().t_s;
      if (dt <= 0) throw TraceError(source_name, lineno, "timestamps must increase");
      if (spacing < 0)
        spacing = dt;
      else if (dt != spacing)
        throw TraceError(source_name, lineno, "uneven sample spacing");
    }
    trace.samples.push_back(s);
  }
  if (trace.samples.empty()) throw TraceError(source_name, lineno, "no samples");
  return trace;
}

UtilTrace parse_util_trace_file(const std::string& path) {
  auto in = open_or_throw(path);
  return parse_util_trace(in, path);
}

void write_util_trace(const UtilTrace& trace, std::ostream& out) {
  out << "t_s,utilization\n";
  for (const auto& s : trace.samples) {
    nlohmann::json v = s.utilization;  // shortest round-trip formatting
    out << s.t_s << ',' << v.dump() << '\n';
  }
}

void write_util_trace_file(const UtilTrace& trace, const std::string& path) {
  auto out = create_or_throw(path);
  write_util_trace(trace, out);
}

std::vector<LoanInstruction> parse_loan_plan(std::istream& in, const std::string& source_name) {
  std::vector<LoanInstruction> plan;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw TraceError(source_name, lineno, std::string("bad JSON: ") + e.what());
    }
    LoanInstruction instr;
    try {
      instr.at_s = j.at("at_s").get<double>();
      const std::string action = j.at("action").get<std::string>();
      instr.n = j.value("n", 0);
      if (action == "loan")
        instr.action = LoanAction::Loan;
      else if (action == "reclaim")
        instr.action = LoanAction::Reclaim;
      else if (action == "hold")
        instr.action = LoanAction::Hold;
      else
        throw TraceError(source_name, lineno, "unknown action '" + action + "'");
    } catch (const nlohmann::json::exception& e) {
      throw TraceError(source_name, lineno, std::string("bad field: ") + e.what());
    }
    if (instr.n < 0) throw TraceError(source_name, lineno, "negative count");
    if (!plan.empty() && instr.at_s < plan.back().at_s)
      throw TraceError(source_name, lineno, "at_s decreases");
    plan.push_back(instr);
  }
  return plan;
}

std::vector<LoanInstruction> parse_loan_plan_file(const std::string& path) {
  auto in = open_or_throw(path);
  return parse_loan_plan(in, path);
}

ClusterState parse_cluster_layout(std::istream& in, const std::string& source_name) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw TraceError(source_name, 1, std::string("bad JSON: ") + e.what());
  }
  const auto bad = [&](const std::string& what) { return TraceError(source_name, 1, what); };
  if (!doc.is_object()) throw bad("expected a JSON object");

  ClusterState cluster;
  const int default_gpus = doc.value("gpus_per_server", 8);
  cluster.inference_speed_factor = doc.value("inference_speed_factor", kDefaultInferenceSpeed);

  for (const auto& js : doc.value("servers", nlohmann::json::array())) {
    Server s;
    s.id = js.at("id").get<std::string>();
    const std::string kind = js.value("kind", "training");
    if (kind == "training")
      s.kind = GpuKind::Training;
    else if (kind == "inference")
      s.kind = GpuKind::Inference;
    else
      throw bad("unknown server kind '" + kind + "'");
    s.total_gpus = s.free_gpus = js.value("total_gpus", default_gpus);
    s.on_loan = js.value("on_loan", false);
    if (s.on_loan && s.kind != GpuKind::Inference) throw bad("on-loan server must be inference kind");
    s.group = s.kind == GpuKind::Training ? ServerGroup::TrainingPool : ServerGroup::Ungrouped;
    if (s.kind == GpuKind::Training || s.on_loan)
      cluster.whitelist_training.insert(s.id);
    else
      cluster.whitelist_inference.insert(s.id);
    cluster.servers.push_back(std::move(s));
  }

  for (const auto& jj : doc.value("jobs", nlohmann::json::array())) {
    JobState job;
    job.spec.id = jj.at("id").get<std::string>();
    job.spec.gpus_per_worker = jj.value("gpus_per_worker", 1);
    const auto& placements = jj.at("workers");
    const int n = static_cast<int>(placements.size());
    job.spec.min_workers = jj.value("min_workers", std::max(n, 1));
    job.spec.max_workers = jj.value("max_workers", std::max(n, job.spec.min_workers));
    job.spec.runtime_at_max_s = jj.value("runtime_at_max_s", 1.0);
    job.spec.gpu_flexible = jj.value("gpu_flexible", true);
    job.spec.validate();
    job.workload.total_s = job.workload.remaining_s = job.spec.total_workload();
    job.estimated_runtime_s = job.spec.runtime_at_max_s;
    int idx = 0;
    for (const auto& pw : placements) {
      WorkerPlacement w;
      w.server_id = pw.at("server").get<std::string>();
      Server* s = cluster.find_server(w.server_id);
      if (!s) throw bad("worker on unknown server " + w.server_id);
      const std::string role = pw.value("role", "base");
      if (role == "base")
        w.role = WorkerRole::Base;
      else if (role == "flexible")
        w.role = WorkerRole::Flexible;
      else
        throw bad("unknown worker role '" + role + "'");
      w.kind = s->kind;
      if (s->free_gpus < job.spec.gpus_per_worker) throw bad("server " + s->id + " overcommitted");
      s->free_gpus -= job.spec.gpus_per_worker;
      if (s->on_loan)
        s->group = w.role == WorkerRole::Base ? ServerGroup::LoanBase : ServerGroup::LoanFlexible;
      job.workers[idx++] = std::move(w);
    }
    job.phase = job.workers.empty() ? JobPhase::Queued : JobPhase::Running;
    cluster.jobs.push_back(std::move(job));
  }

  cluster.validate();
  return cluster;
}

ClusterState parse_cluster_layout_file(const std::string& path) {
  auto in = open_or_throw(path);
  return parse_cluster_layout(in, path);
}

namespace {

template <typename T>
T pick_weighted(std::mt19937_64& rng, const std::vector<std::pair<T, double>>& options) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (const auto& [value, p] : options) {
    acc += p;
    if (u < acc) return value;
  }
  return options.back().first;
}

}  // namespace

std::pair<JobTrace, UtilTrace> gen_traces(const GenConfig& config) {
  if (config.n_jobs <= 0 || config.days <= 0) throw std::invalid_argument("gen_traces: empty plan");
  std::mt19937_64 rng(config.seed);
  const double horizon_s = static_cast<double>(config.days) * 86400.0;

  // Day/night utilization: mean at util_mean, trough at t = 0, peak at noon,
  // amplitude set so peak/trough hits the requested ratio before noise.
  UtilTrace util;
  const double amp =
      config.util_mean * (config.peak_trough_ratio - 1.0) / (config.peak_trough_ratio + 1.0);
  for (std::int64_t t = 0; t <= static_cast<std::int64_t>(horizon_s);
       t += config.util_interval_s) {
    const double phase = 6.283185307179586 * static_cast<double>(t) / 86400.0;
    double u = config.util_mean - amp * std::cos(phase);
    u += uniform01(rng) * 0.02 - 0.01;
    u = std::clamp(u, 0.01, 0.99);
    util.samples.push_back({t, u});
  }

  // Poisson arrivals over the horizon.
  std::vector<std::int64_t> submits;
  const double rate = static_cast<double>(config.n_jobs) / horizon_s;
  double t = 0.0;
  for (int i = 0; i < config.n_jobs; ++i) {
    t += exponential(rng, rate);
    submits.push_back(static_cast<std::int64_t>(std::llround(t)));
  }

  // Which jobs are elastic: exactly round(n * fraction) of them.
  const int n_elastic = static_cast<int>(std::llround(config.elastic_fraction * config.n_jobs));
  std::vector<int> order(static_cast<std::size_t>(config.n_jobs));
  for (int i = 0; i < config.n_jobs; ++i) order[static_cast<std::size_t>(i)] = i;
  shuffle_deterministic(order, rng);
  std::vector<bool> elastic(static_cast<std::size_t>(config.n_jobs), false);
  for (int i = 0; i < n_elastic; ++i) elastic[static_cast<std::size_t>(order[i])] = true;

  JobTrace jobs;
  const int gpu_cap = 64;  // largest single-job demand
  for (int i = 0; i < config.n_jobs; ++i) {
    JobSpec s;
    char buf[16];
    std::snprintf(buf, sizeof buf, "j%05d", i);
    s.id = buf;
    s.submit_s = submits[static_cast<std::size_t>(i)];
    if (elastic[static_cast<std::size_t>(i)]) {
      s.gpus_per_worker = pick_weighted<int>(rng, {{1, 0.5}, {2, 0.5}});
      s.min_workers = pick_weighted<int>(rng, {{1, 0.4}, {2, 0.4}, {4, 0.2}});
      s.max_workers = std::min(4 * s.min_workers, gpu_cap / s.gpus_per_worker);
      s.runtime_at_max_s = lognormal(rng, std::log(5400.0), 0.8);
      s.runtime_at_max_s = std::clamp(s.runtime_at_max_s, 600.0, 4.0 * 86400.0);
    } else {
      s.gpus_per_worker = pick_weighted<int>(rng, {{1, 0.35}, {2, 0.25}, {4, 0.20}, {8, 0.20}});
      s.min_workers = s.max_workers = pick_weighted<int>(rng, {{1, 0.6}, {2, 0.3}, {4, 0.1}});
      s.runtime_at_max_s = lognormal(rng, std::log(1800.0), 1.2);
      s.runtime_at_max_s = std::clamp(s.runtime_at_max_s, 120.0, 2.0 * 86400.0);
    }
    s.gpu_flexible = uniform01(rng) < config.flexible_fraction;
    s.checkpointing = uniform01(rng) < config.checkpoint_fraction;
    s.hetero_capable = uniform01(rng) < config.hetero_fraction;
    jobs.jobs.push_back(std::move(s));
  }

  // Rescale runtimes so total GPU-time hits the load target with the elastic
  // share exactly; the floor clamp afterwards moves it only marginally.
  const double target = config.load_factor * config.training_servers * config.gpus_per_server *
                        horizon_s;
  double elastic_time = 0.0, inelastic_time = 0.0;
  for (std::size_t i = 0; i < jobs.jobs.size(); ++i) {
    const auto& s = jobs.jobs[i];
    const double gpu_time = s.total_workload() * s.gpus_per_worker;
    (elastic[i] ? elastic_time : inelastic_time) += gpu_time;
  }
  const double elastic_scale =
      elastic_time > 0 ? target * config.elastic_gpu_share / elastic_time : 1.0;
  const double inelastic_scale =
      inelastic_time > 0 ? target * (1.0 - config.elastic_gpu_share) / inelastic_time : 1.0;
  for (std::size_t i = 0; i < jobs.jobs.size(); ++i) {
    auto& s = jobs.jobs[i];
    s.runtime_at_max_s *= elastic[i] ? elastic_scale : inelastic_scale;
    s.runtime_at_max_s = std::max(60.0, s.runtime_at_max_s);
  }

  return {std::move(jobs), std::move(util)};
}

}  // namespace lyra
