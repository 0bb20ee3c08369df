#include "lyra/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "lyra/oracle.hpp"
#include "lyra/report.hpp"
#include "lyra/sim.hpp"

namespace lyra {

namespace {

std::uint64_t default_seed() {
  if (const char* env = std::getenv("LYRA_SEED")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end && *end == '\0') return v;
  }
  return 42;
}

AllocPolicy alloc_from_string(const std::string& s) {
  if (s == "lyra") return AllocPolicy::Lyra;
  if (s == "fifo") return AllocPolicy::Fifo;
  if (s == "afs") return AllocPolicy::Afs;
  if (s == "gandiva") return AllocPolicy::Gandiva;
  throw CLI::ValidationError("--alloc", "unknown policy " + s);
}

ReclaimPolicy reclaim_from_string(const std::string& s) {
  if (s == "lyra") return ReclaimPolicy::Lyra;
  if (s == "random") return ReclaimPolicy::Random;
  if (s == "scf") return ReclaimPolicy::Scf;
  throw CLI::ValidationError("--reclaim", "unknown policy " + s);
}

struct SimFlags {
  std::string jobs, util, loan_plan;
  std::string scenario = "basic";
  std::string alloc = "lyra";
  std::string reclaim = "lyra";
  std::string out = "out";
  std::uint64_t seed = default_seed();
  int training_servers = 64;
  int inference_servers = 64;
  int gpus_per_server = 8;
  double headroom = 0.10;
  std::int64_t sched_interval = 60;
  std::int64_t orch_interval = 300;
  double hetero_efficiency = 0.7;
  double inference_speed = kDefaultInferenceSpeed;
  bool no_loaning = false;
  bool no_elastic = false;
  bool imperfect_scaling = false;
  double predict_error_frac = 0.0;
  double predict_error_max = 0.25;
};

void add_sim_flags(CLI::App* cmd, SimFlags& f) {
  cmd->add_option("--jobs", f.jobs, "job trace (JSON Lines)")->required();
  cmd->add_option("--util", f.util, "inference utilization trace (CSV)");
  cmd->add_option("--loan-plan", f.loan_plan, "replay recorded loan instructions (JSON Lines)");
  cmd->add_option("--scenario", f.scenario)->check(CLI::IsMember({"basic", "advanced", "ideal"}));
  cmd->add_option("--reclaim", f.reclaim)->check(CLI::IsMember({"lyra", "random", "scf"}));
  cmd->add_option("--seed", f.seed, "default from LYRA_SEED, else 42");
  cmd->add_option("--out", f.out, "report directory");
  cmd->add_option("--training-servers", f.training_servers);
  cmd->add_option("--inference-servers", f.inference_servers);
  cmd->add_option("--gpus-per-server", f.gpus_per_server);
  cmd->add_option("--headroom", f.headroom, "loaning reserve margin");
  cmd->add_option("--sched-interval", f.sched_interval, "scheduler tick (s)");
  cmd->add_option("--orch-interval", f.orch_interval, "orchestrator tick (s)");
  cmd->add_option("--hetero-efficiency", f.hetero_efficiency);
  cmd->add_option("--inference-speed", f.inference_speed, "training speed on inference GPUs");
  cmd->add_flag("--no-loaning", f.no_loaning, "keep the clusters separate");
  cmd->add_flag("--no-elastic", f.no_elastic, "pin every job at max_workers");
  cmd->add_flag("--imperfect-scaling", f.imperfect_scaling, "10% loss per step past midpoint");
  cmd->add_option("--predict-error-frac", f.predict_error_frac,
                  "fraction of jobs with a wrong runtime estimate");
  cmd->add_option("--predict-error-max", f.predict_error_max, "max relative estimate error");
}

ScenarioConfig config_from_flags(const SimFlags& f) {
  ScenarioConfig cfg;
  cfg.scenario = *scenario_from_string(f.scenario);
  cfg.training_servers = f.training_servers;
  cfg.inference_servers = f.inference_servers;
  cfg.gpus_per_server = f.gpus_per_server;
  cfg.sched_interval_s = f.sched_interval;
  cfg.orch_interval_s = f.orch_interval;
  cfg.hetero_efficiency = f.hetero_efficiency;
  cfg.inference_speed_factor = f.inference_speed;
  cfg.headroom = f.headroom;
  cfg.scaling.imperfect = f.imperfect_scaling;
  cfg.predict_error.fraction = f.predict_error_frac;
  cfg.predict_error.max_rel = f.predict_error_max;
  cfg.predict_error.seed = f.seed;
  return cfg;
}

Policies policies_from_flags(const SimFlags& f, const std::string& alloc) {
  Policies pol;
  pol.alloc = alloc_from_string(alloc);
  pol.reclaim = reclaim_from_string(f.reclaim);
  pol.loaning = !f.no_loaning;
  pol.elastic = !f.no_elastic;
  if (!f.loan_plan.empty()) pol.loan_plan = parse_loan_plan_file(f.loan_plan);
  return pol;
}

void require_util_or_plan(const SimFlags& f) {
  if (f.util.empty() && !f.no_loaning && f.loan_plan.empty())
    throw CLI::RequiredError("--util (or --no-loaning / --loan-plan)");
}

RunInfo info_for(const SimFlags& f, const std::string& alloc) {
  RunInfo info;
  info.alloc = alloc;
  info.reclaim = f.reclaim;
  info.scenario = f.scenario;
  info.loaning = !f.no_loaning;
  info.seed = f.seed;
  return info;
}

int cmd_simulate(const SimFlags& f) {
  require_util_or_plan(f);
  const JobTrace jobs = parse_job_trace_file(f.jobs);
  UtilTrace util;
  if (!f.util.empty()) util = parse_util_trace_file(f.util);
  const SimResult res = run(jobs, util, policies_from_flags(f, f.alloc), config_from_flags(f), f.seed);

  const RunInfo info = info_for(f, f.alloc);
  write_report(res.metrics, info, f.out);
  std::ofstream ev((std::filesystem::path(f.out) / "events.jsonl").string());
  if (!ev) throw std::runtime_error("cannot write events.jsonl under " + f.out);
  write_events_jsonl(res, ev);

  std::cout << summary_csv_header() << '\n' << summary_csv_row(res.metrics, info) << '\n';
  return 0;
}

int cmd_compare(const SimFlags& f, const std::string& allocs_csv) {
  require_util_or_plan(f);
  const JobTrace jobs = parse_job_trace_file(f.jobs);
  UtilTrace util;
  if (!f.util.empty()) util = parse_util_trace_file(f.util);

  std::vector<std::string> allocs;
  std::stringstream ss(allocs_csv);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) allocs.push_back(item);

  std::filesystem::create_directories(f.out);
  std::ofstream summary((std::filesystem::path(f.out) / "summary.csv").string());
  if (!summary) throw std::runtime_error("cannot write summary.csv under " + f.out);
  summary << summary_csv_header() << '\n';
  std::cout << summary_csv_header() << '\n';
  for (const auto& alloc : allocs) {
    const SimResult res = run(jobs, util, policies_from_flags(f, alloc), config_from_flags(f), f.seed);
    const RunInfo info = info_for(f, alloc);
    write_report(res.metrics, info, (std::filesystem::path(f.out) / alloc).string());
    const std::string row = summary_csv_row(res.metrics, info);
    summary << row << '\n';
    std::cout << row << '\n';
  }
  return 0;
}

struct GenFlags {
  GenConfig cfg;
  std::string out = "traces";
};

int cmd_gen_trace(const GenFlags& g) {
  const auto [jobs, util] = gen_traces(g.cfg);
  std::filesystem::create_directories(g.out);
  write_job_trace_file(jobs, (std::filesystem::path(g.out) / "jobs.jsonl").string());
  write_util_trace_file(util, (std::filesystem::path(g.out) / "util.csv").string());
  std::cout << "wrote " << jobs.jobs.size() << " jobs and " << util.samples.size()
            << " utilization samples under " << g.out << '\n';
  return 0;
}

MckpInstance parse_mckp_instance_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json doc = nlohmann::json::parse(in);
  MckpInstance inst;
  for (const auto& jg : doc.at("groups")) {
    MckpGroup g;
    g.job_id = jg.at("job").get<std::string>();
    for (const auto& ji : jg.at("items")) {
      MckpItem item;
      item.extra_workers = ji.at("extra_workers").get<int>();
      item.weight_gpus = ji.at("weight_gpus").get<int>();
      item.value_s = ji.at("value_s").get<double>();
      g.items.push_back(item);
    }
    inst.groups.push_back(std::move(g));
  }
  return inst;
}

}  // namespace

int run_cli(std::vector<std::string> args) {
  CLI::App app{"lyra: elastic GPU cluster scheduling simulator"};
  app.name("lyra");
  app.require_subcommand(0, 1);

  SimFlags sim_flags;
  CLI::App* simulate = app.add_subcommand("simulate", "run one simulation and write reports");
  add_sim_flags(simulate, sim_flags);
  simulate->add_option("--alloc", sim_flags.alloc)
      ->check(CLI::IsMember({"lyra", "fifo", "afs", "gandiva"}));

  SimFlags cmp_flags;
  std::string allocs_csv = "lyra,fifo,afs,gandiva";
  CLI::App* compare = app.add_subcommand("compare", "run a policy matrix, one summary row per cell");
  add_sim_flags(compare, cmp_flags);
  compare->add_option("--allocs", allocs_csv, "comma-separated allocation policies");

  GenFlags gen_flags;
  gen_flags.cfg.seed = default_seed();
  CLI::App* gen = app.add_subcommand("gen-trace", "generate synthetic job and utilization traces");
  gen->add_option("--n-jobs", gen_flags.cfg.n_jobs);
  gen->add_option("--days", gen_flags.cfg.days);
  gen->add_option("--seed", gen_flags.cfg.seed);
  gen->add_option("--training-servers", gen_flags.cfg.training_servers);
  gen->add_option("--inference-servers", gen_flags.cfg.inference_servers);
  gen->add_option("--gpus-per-server", gen_flags.cfg.gpus_per_server);
  gen->add_option("--load-factor", gen_flags.cfg.load_factor);
  gen->add_option("--elastic-fraction", gen_flags.cfg.elastic_fraction);
  gen->add_option("--elastic-share", gen_flags.cfg.elastic_gpu_share);
  gen->add_option("--flexible-fraction", gen_flags.cfg.flexible_fraction);
  gen->add_option("--hetero-fraction", gen_flags.cfg.hetero_fraction);
  gen->add_option("--checkpoint-fraction", gen_flags.cfg.checkpoint_fraction);
  gen->add_option("--util-mean", gen_flags.cfg.util_mean);
  gen->add_option("--peak-trough-ratio", gen_flags.cfg.peak_trough_ratio);
  gen->add_option("--out", gen_flags.out);

  CLI::App* oracle = app.add_subcommand("oracle", "ground-truth reference computations");
  oracle->require_subcommand(1);

  std::string layout_path;
  int reclaim_n = 1;
  std::string reclaim_policy = "lyra";
  std::uint64_t oracle_seed = default_seed();
  CLI::App* orc_reclaim = oracle->add_subcommand("reclaim", "exhaustive vs policy reclaiming");
  orc_reclaim->add_option("--layout", layout_path, "cluster layout (JSON)")->required();
  orc_reclaim->add_option("--n", reclaim_n, "servers to reclaim")->required();
  orc_reclaim->add_option("--policy", reclaim_policy)
      ->check(CLI::IsMember({"lyra", "random", "scf"}));
  orc_reclaim->add_option("--seed", oracle_seed);

  oracle::TwoJobInstance tj;
  CLI::App* orc_twojob = oracle->add_subcommand("twojob", "closed-form two-job optimum");
  orc_twojob->add_option("--lp", tj.workload_p, "workload of p (GPU-seconds)")->required();
  orc_twojob->add_option("--lq", tj.workload_q, "workload of q (GPU-seconds)")->required();
  orc_twojob->add_option("--gp-min", tj.g_min_p)->required();
  orc_twojob->add_option("--gp-max", tj.g_max_p)->required();
  orc_twojob->add_option("--gq-min", tj.g_min_q)->required();
  orc_twojob->add_option("--gq-max", tj.g_max_q)->required();
  orc_twojob->add_option("--capacity", tj.capacity)->required();

  std::string alloc_jobs_path;
  int alloc_capacity = 0;
  CLI::App* orc_alloc = oracle->add_subcommand("alloc", "enumerated optimal initial allocation");
  orc_alloc->add_option("--jobs", alloc_jobs_path, "job trace (JSON Lines), at most 4 jobs")
      ->required();
  orc_alloc->add_option("--capacity", alloc_capacity, "GPUs")->required();

  std::string mckp_path;
  int mckp_capacity = 0;
  CLI::App* orc_mckp = oracle->add_subcommand("mckp", "knapsack DP against enumeration");
  orc_mckp->add_option("--instance", mckp_path, "instance (JSON)")->required();
  orc_mckp->add_option("--capacity", mckp_capacity, "GPUs")->required();

  if (args.empty()) {
    std::cout << app.help();
    return 2;
  }
  try {
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (simulate->parsed()) return cmd_simulate(sim_flags);
    if (compare->parsed()) return cmd_compare(cmp_flags, allocs_csv);
    if (gen->parsed()) return cmd_gen_trace(gen_flags);
    if (orc_reclaim->parsed()) {
      const ClusterState cluster = parse_cluster_layout_file(layout_path);
      const oracle::ExhaustiveReclaim best = oracle::exhaustive_reclaim(cluster, reclaim_n);
      ReclaimPolicy policy = ReclaimPolicy::Lyra;
      if (reclaim_policy == "random") policy = ReclaimPolicy::Random;
      if (reclaim_policy == "scf") policy = ReclaimPolicy::Scf;
      const ReclaimOutcome got = select_servers(cluster, reclaim_n, policy, oracle_seed);
      nlohmann::ordered_json out;
      out["exhaustive"] = {{"preemptions", best.min_preemptions}, {"servers", best.servers}};
      out[reclaim_policy] = {{"preemptions", static_cast<int>(got.preempted_jobs.size())},
                            {"servers", got.selected_servers},
                            {"excess_gpus", got.excess_freed_gpus}};
      std::cout << out.dump(2) << '\n';
      return 0;
    }
    if (orc_twojob->parsed()) {
      const oracle::TwoJobPlan plan = oracle::two_job_optimal(tj);
      nlohmann::ordered_json out{{"g_p", plan.g_p}, {"g_q", plan.g_q}, {"avg_jct_s", plan.avg_jct_s}};
      std::cout << out.dump(2) << '\n';
      return 0;
    }
    if (orc_alloc->parsed()) {
      const JobTrace jobs = parse_job_trace_file(alloc_jobs_path);
      const oracle::AllocationSearch best = oracle::brute_force_allocation(jobs.jobs, alloc_capacity);
      nlohmann::ordered_json out;
      out["workers"] = best.workers;
      out["avg_jct_s"] = best.avg_jct_s;
      std::cout << out.dump(2) << '\n';
      return 0;
    }
    if (orc_mckp->parsed()) {
      const MckpInstance inst = parse_mckp_instance_file(mckp_path);
      const MckpSelection dp = mckp_dp(inst, mckp_capacity);
      const MckpSelection brute = oracle::brute_force_mckp(inst, mckp_capacity);
      nlohmann::ordered_json out;
      out["dp"] = {{"value_s", dp.total_value_s},
                   {"weight_gpus", dp.total_weight_gpus},
                   {"chosen_extra", dp.chosen_extra}};
      out["brute_force"] = {{"value_s", brute.total_value_s},
                            {"weight_gpus", brute.total_weight_gpus},
                            {"chosen_extra", brute.chosen_extra}};
      out["match"] = dp.total_value_s == brute.total_value_s;
      std::cout << out.dump(2) << '\n';
      return 0;
    }
  } catch (const TraceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }

  std::cout << app.help();
  return 2;
}

}  // namespace lyra
