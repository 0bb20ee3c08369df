#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lyra/alloc.hpp"
#include "lyra/core.hpp"
#include "lyra/loaning.hpp"
#include "lyra/reclaim.hpp"
#include "lyra/trace.hpp"

namespace lyra {

/// Basic: no job spans GPU kinds. Advanced: trace flags as-is, spanning jobs
/// pay the heterogeneity penalty. Ideal: every job elastic, flexible and
/// penalty-free, with min_workers relaxed toward max_workers/4.
enum class Scenario { Basic, Advanced, Ideal };

const char* to_string(Scenario scenario);
std::optional<Scenario> scenario_from_string(const std::string& name);

/// Seeded fraction of jobs whose runtime estimate is off by up to max_rel.
struct PredictError {
  double fraction = 0.0;
  double max_rel = 0.25;
  std::uint64_t seed = 0;
};

struct ScenarioConfig {
  Scenario scenario = Scenario::Basic;
  int training_servers = 64;
  int inference_servers = 64;
  int gpus_per_server = 8;
  std::int64_t sched_interval_s = 60;
  std::int64_t orch_interval_s = 300;
  double preempt_overhead_s = 63.0;
  double scale_overhead_s = 0.0;
  double hetero_efficiency = 0.7;  // rate multiplier for jobs spanning GPU kinds
  ScalingModel scaling;            // linear unless imperfect is set
  PredictError predict_error;      // fraction 0 disables
  double inference_speed_factor = kDefaultInferenceSpeed;
  double headroom = 0.10;                  // loaning reserve margin
  double max_sim_s = 400.0 * 86400.0;      // hard stop; exceeding it throws
  bool validate_each_event = false;        // test hook, expensive

  void validate() const;  // throws std::invalid_argument
};

struct Policies {
  AllocPolicy alloc = AllocPolicy::Lyra;
  ReclaimPolicy reclaim = ReclaimPolicy::Lyra;
  bool loaning = true;
  bool elastic = true;  // false pins every job at max_workers
  std::vector<LoanInstruction> loan_plan;      // non-empty: replay instead of planning
  std::map<std::string, int> fixed_allocation;  // worker counts for AllocPolicy::Fixed
};

struct JobMetrics {
  std::string id;
  double submit_s = 0.0;
  double first_start_s = -1.0;
  double finish_s = -1.0;
  double queuing_s = 0.0;
  double running_s = 0.0;
  double overhead_s = 0.0;
  double jct_s = 0.0;  // queuing + running + overhead
  int preemptions = 0;
  bool finished = false;
};

struct UsagePoint {
  std::int64_t t_s = 0;
  double training_usage = 0.0;  // busy fraction of training-whitelisted GPUs
  double overall_usage = 0.0;   // both clusters, inference demand overlaid
};

struct Aggregate {
  double mean = 0.0;
  double median = 0.0;
  double p95 = 0.0;
};

struct MetricsReport {
  int submissions = 0;
  int finished = 0;
  int preemptions = 0;
  int scale_ops = 0;
  int reclaim_events = 0;  // reclaims that had to preempt
  int servers_loaned = 0;
  int servers_reclaimed = 0;
  double preemption_ratio = 0.0;
  double collateral_damage_mean = 0.0;
  Aggregate queuing;
  Aggregate jct;
  double training_usage_mean = 0.0;
  double overall_usage_mean = 0.0;
  std::vector<UsagePoint> usage;  // one point per orchestrator interval
  std::vector<JobMetrics> jobs;   // submission order
};

/// Nearest-rank percentile of `values`: the ceil(p*n)-th smallest, p in (0,1].
double percentile_nearest_rank(std::vector<double> values, double p);

/// Piecewise-constant worker history of one job; enough to recompute its
/// progress under a different scaling model. workers == 0 marks overhead
/// time (no progress either way).
struct RateSegment {
  std::string job_id;
  double t0 = 0.0;
  double t1 = 0.0;
  int workers = 0;
  double speed_sum = 0.0;  // sum of per-worker GPU speed factors
  double hetero_mult = 1.0;
};

struct SimResult {
  MetricsReport metrics;
  std::vector<nlohmann::ordered_json> events;  // one object per logged event
  std::vector<RateSegment> segments;           // grouped by job, time-ordered
  ClusterState final_cluster;
};

/// Workload units per second for the job's current worker set.
double progress_rate(const JobState& job, const ScenarioConfig& config);

/// Runtime estimates per job id: exactly round(fraction * n) jobs get
/// true * (1 +- u), u uniform in (0, max_rel]; the rest are exact.
std::map<std::string, double> inject_prediction_error(const JobTrace& jobs, double fraction,
                                                      double max_rel, std::uint64_t seed);

/// Discrete-event run to quiescence. Deterministic given identical inputs
/// and seed. Throws on invalid config or if max_sim_s is exceeded.
SimResult run(const JobTrace& jobs, const UtilTrace& util, const Policies& policies,
              const ScenarioConfig& config, std::uint64_t seed);

/// Recomputes each job's running time from the recorded segments under
/// `scaling`, holding the worker-count decisions fixed (the last segment's
/// worker set persists if the slower model needs more time).
std::map<std::string, double> replay_running_times(const SimResult& result,
                                                   const ScalingModel& scaling);

void write_events_jsonl(const SimResult& result, std::ostream& out);

}  // namespace lyra
