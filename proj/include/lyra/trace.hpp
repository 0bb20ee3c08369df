#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lyra/core.hpp"
#include "lyra/loaning.hpp"

namespace lyra {

class TraceError : public std::runtime_error {
 public:
  TraceError(const std::string& source, int line, const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line(line) {}
  int line;
};

struct JobTrace {
  std::vector<JobSpec> jobs;  // nondecreasing submit_s
};

struct UtilSample {
  std::int64_t t_s = 0;
  double utilization = 0.0;
};

/// Inference-cluster utilization as a step function over regular samples.
struct UtilTrace {
  std::vector<UtilSample> samples;

  /// Value of the latest sample at or before t (first sample before that).
  double at(double t_s) const;
};

/// JSON Lines, one job object per line. Unknown keys rejected; max_workers
/// defaults to min_workers; booleans default to false. Errors carry the
/// offending line number.
JobTrace parse_job_trace(std::istream& in, const std::string& source_name);
JobTrace parse_job_trace_file(const std::string& path);
void write_job_trace(const JobTrace& trace, std::ostream& out);
void write_job_trace_file(const JobTrace& trace, const std::string& path);

/// CSV with header "t_s,utilization", evenly spaced strictly increasing
/// timestamps, values in [0, 1].
UtilTrace parse_util_trace(std::istream& in, const std::string& source_name);
UtilTrace parse_util_trace_file(const std::string& path);
void write_util_trace(const UtilTrace& trace, std::ostream& out);
void write_util_trace_file(const UtilTrace& trace, const std::string& path);

/// JSON Lines of {"at_s": N, "action": "loan"|"reclaim"|"hold", "n": N}.
std::vector<LoanInstruction> parse_loan_plan(std::istream& in, const std::string& source_name);
std::vector<LoanInstruction> parse_loan_plan_file(const std::string& path);

/// Cluster layout snapshot (servers, placed jobs) for the reclaim oracle.
/// JSON object; see docs/format.md. Free GPUs are derived from placements.
ClusterState parse_cluster_layout(std::istream& in, const std::string& source_name);
ClusterState parse_cluster_layout_file(const std::string& path);

struct GenConfig {
  int n_jobs = 2000;
  int days = 3;
  int training_servers = 64;
  int inference_servers = 64;
  int gpus_per_server = 8;
  std::uint64_t seed = 42;

  double load_factor = 0.75;        // offered GPU-time / training-cluster GPU-time
  double elastic_fraction = 0.05;   // share of jobs that are elastic
  double elastic_gpu_share = 0.36;  // share of GPU-time carried by elastic jobs
  double flexible_fraction = 0.21;  // jobs able to use inference GPUs
  double hetero_fraction = 0.10;    // jobs able to span GPU kinds
  double checkpoint_fraction = 0.50;

  double util_mean = 0.65;
  double peak_trough_ratio = 2.2;
  int util_interval_s = 300;
};

/// Synthetic day/night workload: Poisson arrivals, mostly small inelastic
/// jobs, a few large elastic ones scaling over [w, 4w] (at most 64 GPUs),
/// and a sinusoidal inference utilization trace around util_mean.
std::pair<JobTrace, UtilTrace> gen_traces(const GenConfig& config);

}  // namespace lyra
