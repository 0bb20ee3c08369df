#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "lyra/loaning.hpp"
#include "lyra/oracle.hpp"
#include "lyra/report.hpp"
#include "lyra/sim.hpp"

namespace py = pybind11;

namespace {

py::object json_to_py(const nlohmann::ordered_json& j) {
  using value_t = nlohmann::ordered_json::value_t;
  switch (j.type()) {
    case value_t::null:
      return py::none();
    case value_t::boolean:
      return py::bool_(j.get<bool>());
    case value_t::number_integer:
      return py::int_(j.get<std::int64_t>());
    case value_t::number_unsigned:
      return py::int_(j.get<std::uint64_t>());
    case value_t::number_float:
      return py::float_(j.get<double>());
    case value_t::string:
      return py::str(j.get<std::string>());
    case value_t::array: {
      py::list out;
      for (const auto& item : j) out.append(json_to_py(item));
      return out;
    }
    case value_t::object: {
      py::dict out;
      for (const auto& [key, value] : j.items()) out[py::str(key)] = json_to_py(value);
      return out;
    }
    default:
      throw std::runtime_error("unsupported json value");
  }
}

lyra::MckpInstance instance_from_py(const py::list& groups) {
  lyra::MckpInstance inst;
  for (const auto& g : groups) {
    const py::dict group = g.cast<py::dict>();
    lyra::MckpGroup out;
    out.job_id = group["job"].cast<std::string>();
    for (const auto& i : group["items"].cast<py::list>()) {
      const py::dict item = i.cast<py::dict>();
      lyra::MckpItem mi;
      mi.extra_workers = item["extra_workers"].cast<int>();
      mi.weight_gpus = item["weight_gpus"].cast<int>();
      mi.value_s = item["value_s"].cast<double>();
      out.items.push_back(mi);
    }
    inst.groups.push_back(std::move(out));
  }
  return inst;
}

py::dict selection_to_py(const lyra::MckpSelection& sel) {
  py::dict out;
  out["value_s"] = sel.total_value_s;
  out["weight_gpus"] = sel.total_weight_gpus;
  py::dict chosen;
  for (const auto& [job, extra] : sel.chosen_extra) chosen[py::str(job)] = extra;
  out["chosen_extra"] = chosen;
  return out;
}

lyra::ClusterState layout_from_json(const std::string& text) {
  std::istringstream in(text);
  return lyra::parse_cluster_layout(in, "<layout>");
}

py::dict simulate(const std::string& jobs_path, const std::string& util_path,
                  const std::string& scenario, const std::string& alloc,
                  const std::string& reclaim, std::uint64_t seed, bool loaning, bool elastic,
                  bool imperfect_scaling, int training_servers, int inference_servers,
                  int gpus_per_server, double headroom, double predict_error_frac,
                  const std::string& out_dir) {
  const lyra::JobTrace jobs = lyra::parse_job_trace_file(jobs_path);
  lyra::UtilTrace util;
  if (!util_path.empty()) util = lyra::parse_util_trace_file(util_path);

  lyra::Policies pol;
  if (alloc == "lyra") pol.alloc = lyra::AllocPolicy::Lyra;
  else if (alloc == "fifo") pol.alloc = lyra::AllocPolicy::Fifo;
  else if (alloc == "afs") pol.alloc = lyra::AllocPolicy::Afs;
  else if (alloc == "gandiva") pol.alloc = lyra::AllocPolicy::Gandiva;
  else throw std::invalid_argument("unknown alloc policy: " + alloc);
  if (reclaim == "lyra") pol.reclaim = lyra::ReclaimPolicy::Lyra;
  else if (reclaim == "random") pol.reclaim = lyra::ReclaimPolicy::Random;
  else if (reclaim == "scf") pol.reclaim = lyra::ReclaimPolicy::Scf;
  else throw std::invalid_argument("unknown reclaim policy: " + reclaim);
  pol.loaning = loaning;
  pol.elastic = elastic;

  lyra::ScenarioConfig cfg;
  const auto sc = lyra::scenario_from_string(scenario);
  if (!sc) throw std::invalid_argument("unknown scenario: " + scenario);
  cfg.scenario = *sc;
  cfg.training_servers = training_servers;
  cfg.inference_servers = inference_servers;
  cfg.gpus_per_server = gpus_per_server;
  cfg.headroom = headroom;
  cfg.scaling.imperfect = imperfect_scaling;
  cfg.predict_error.fraction = predict_error_frac;
  cfg.predict_error.seed = seed;

  const lyra::SimResult res = lyra::run(jobs, util, pol, cfg, seed);
  lyra::RunInfo info;
  info.alloc = alloc;
  info.reclaim = reclaim;
  info.scenario = scenario;
  info.loaning = loaning;
  info.seed = seed;
  if (!out_dir.empty()) {
    lyra::write_report(res.metrics, info, out_dir);
    std::ofstream ev(std::filesystem::path(out_dir) / "events.jsonl");
    lyra::write_events_jsonl(res, ev);
  }
  return json_to_py(lyra::metrics_to_json(res.metrics, info)).cast<py::dict>();
}

py::dict gen_traces_py(const std::string& out_dir, int n_jobs, int days, std::uint64_t seed,
                       int training_servers, int inference_servers, double load_factor,
                       double elastic_fraction, double util_mean, double peak_trough_ratio) {
  lyra::GenConfig cfg;
  cfg.n_jobs = n_jobs;
  cfg.days = days;
  cfg.seed = seed;
  cfg.training_servers = training_servers;
  cfg.inference_servers = inference_servers;
  cfg.load_factor = load_factor;
  cfg.elastic_fraction = elastic_fraction;
  cfg.util_mean = util_mean;
  cfg.peak_trough_ratio = peak_trough_ratio;
  const auto [jobs, util] = lyra::gen_traces(cfg);
  std::filesystem::create_directories(out_dir);
  const auto jobs_path = std::filesystem::path(out_dir) / "jobs.jsonl";
  const auto util_path = std::filesystem::path(out_dir) / "util.csv";
  lyra::write_job_trace_file(jobs, jobs_path.string());
  lyra::write_util_trace_file(util, util_path.string());
  py::dict out;
  out["jobs"] = jobs_path.string();
  out["util"] = util_path.string();
  out["n_jobs"] = static_cast<int>(jobs.jobs.size());
  out["n_samples"] = static_cast<int>(util.samples.size());
  return out;
}

}  // namespace

PYBIND11_MODULE(_lyra, m) {
  m.doc() = "elastic GPU cluster scheduling simulator";

  m.def("simulate", &simulate, py::arg("jobs"), py::arg("util") = "",
        py::arg("scenario") = "basic", py::arg("alloc") = "lyra", py::arg("reclaim") = "lyra",
        py::arg("seed") = 42, py::arg("loaning") = true, py::arg("elastic") = true,
        py::arg("imperfect_scaling") = false, py::arg("training_servers") = 64,
        py::arg("inference_servers") = 64, py::arg("gpus_per_server") = 8,
        py::arg("headroom") = 0.10, py::arg("predict_error_frac") = 0.0, py::arg("out") = "",
        "Run one simulation; returns the metrics report as a dict.");

  m.def("gen_traces", &gen_traces_py, py::arg("out"), py::arg("n_jobs") = 2000,
        py::arg("days") = 3, py::arg("seed") = 42, py::arg("training_servers") = 64,
        py::arg("inference_servers") = 64, py::arg("load_factor") = 0.75,
        py::arg("elastic_fraction") = 0.05, py::arg("util_mean") = 0.65,
        py::arg("peak_trough_ratio") = 2.2,
        "Write synthetic jobs.jsonl and util.csv under `out`.");

  m.def(
      "mckp_dp",
      [](const py::list& groups, int capacity) {
        return selection_to_py(lyra::mckp_dp(instance_from_py(groups), capacity));
      },
      py::arg("groups"), py::arg("capacity"));

  m.def(
      "mckp_brute_force",
      [](const py::list& groups, int capacity) {
        return selection_to_py(lyra::oracle::brute_force_mckp(instance_from_py(groups), capacity));
      },
      py::arg("groups"), py::arg("capacity"));

  m.def(
      "two_job_optimal",
      [](double workload_p, double workload_q, int g_min_p, int g_max_p, int g_min_q, int g_max_q,
         int capacity) {
        lyra::oracle::TwoJobInstance inst;
        inst.workload_p = workload_p;
        inst.workload_q = workload_q;
        inst.g_min_p = g_min_p;
        inst.g_max_p = g_max_p;
        inst.g_min_q = g_min_q;
        inst.g_max_q = g_max_q;
        inst.capacity = capacity;
        const lyra::oracle::TwoJobPlan plan = lyra::oracle::two_job_optimal(inst);
        py::dict out;
        out["g_p"] = plan.g_p;
        out["g_q"] = plan.g_q;
        out["avg_jct_s"] = plan.avg_jct_s;
        return out;
      },
      py::arg("workload_p"), py::arg("workload_q"), py::arg("g_min_p"), py::arg("g_max_p"),
      py::arg("g_min_q"), py::arg("g_max_q"), py::arg("capacity"));

  m.def(
      "preemption_costs",
      [](const std::string& layout_json) {
        const lyra::ClusterState cluster = layout_from_json(layout_json);
        py::dict out;
        for (const auto& [server, cost] : lyra::preemption_costs(cluster))
          out[py::str(server)] = cost;
        return out;
      },
      py::arg("layout_json"), "Per-server preemption cost from a layout JSON string.");

  m.def(
      "select_servers",
      [](const std::string& layout_json, int n, const std::string& policy, std::uint64_t seed) {
        const lyra::ClusterState cluster = layout_from_json(layout_json);
        lyra::ReclaimPolicy p = lyra::ReclaimPolicy::Lyra;
        if (policy == "random") p = lyra::ReclaimPolicy::Random;
        else if (policy == "scf") p = lyra::ReclaimPolicy::Scf;
        else if (policy != "lyra") throw std::invalid_argument("unknown reclaim policy: " + policy);
        const lyra::ReclaimOutcome got = lyra::select_servers(cluster, n, p, seed);
        py::dict out;
        out["servers"] = got.selected_servers;
        out["preempted_jobs"] = std::vector<std::string>(got.preempted_jobs.begin(),
                                                         got.preempted_jobs.end());
        out["excess_gpus"] = got.excess_freed_gpus;
        return out;
      },
      py::arg("layout_json"), py::arg("n"), py::arg("policy") = "lyra", py::arg("seed") = 42);

  m.def(
      "exhaustive_reclaim",
      [](const std::string& layout_json, int n) {
        const auto best = lyra::oracle::exhaustive_reclaim(layout_from_json(layout_json), n);
        py::dict out;
        out["preemptions"] = best.min_preemptions;
        out["servers"] = best.servers;
        return out;
      },
      py::arg("layout_json"), py::arg("n"));

  m.def(
      "plan_loaning",
      [](double utilization, int on_loan, int total_inference_servers, double headroom) {
        lyra::LoanPolicy policy;
        policy.headroom = headroom;
        policy.total_inference_servers = total_inference_servers;
        const lyra::LoanInstruction step = lyra::plan_loaning(utilization, on_loan, policy);
        py::dict out;
        out["action"] = std::string(lyra::to_string(step.action));
        out["n"] = step.n;
        return out;
      },
      py::arg("utilization"), py::arg("on_loan"), py::arg("total_inference_servers"),
      py::arg("headroom") = 0.10);
}
