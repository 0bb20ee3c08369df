#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace lyra {

/// GPU pool a server belongs to. Training GPUs run jobs at full speed;
/// inference GPUs are a different (slower for training) part.
enum class GpuKind { Training, Inference };

constexpr double kDefaultInferenceSpeed = 0.25;

/// Relative training throughput of one worker on a GPU of the given kind.
double speed_factor(GpuKind kind, double inference_speed = kDefaultInferenceSpeed);

const char* to_string(GpuKind kind);

/// Static description of a submitted job. Elastic jobs have
/// min_workers < max_workers and can run anywhere in that range.
struct JobSpec {
  std::string id;
  std::int64_t submit_s = 0;
  int gpus_per_worker = 1;
  int min_workers = 1;
  int max_workers = 1;
  double runtime_at_max_s = 0.0;  // runtime when running max_workers on training GPUs
  bool gpu_flexible = false;      // may use inference GPUs
  bool checkpointing = false;     // resumes from checkpoint after preemption
  bool hetero_capable = false;    // may span GPU kinds within one job

  bool elastic() const { return min_workers < max_workers; }

  /// Total work in worker-seconds at training speed.
  double total_workload() const { return runtime_at_max_s * static_cast<double>(max_workers); }

  void validate() const;  // throws std::invalid_argument on nonsense
};

struct Workload {
  double total_s = 0.0;      // worker-seconds at training speed
  double remaining_s = 0.0;
};

enum class JobPhase { Queued, Running, Preempted, Finished };

const char* to_string(JobPhase phase);

enum class WorkerRole { Base, Flexible };

struct WorkerPlacement {
  std::string server_id;
  GpuKind kind = GpuKind::Training;
  WorkerRole role = WorkerRole::Base;
};

/// Live state of one job. Worker ids are small ints local to the job;
/// each worker occupies spec.gpus_per_worker GPUs on exactly one server.
struct JobState {
  JobSpec spec;
  Workload workload;
  JobPhase phase = JobPhase::Queued;
  std::map<int, WorkerPlacement> workers;
  std::optional<double> first_start_s;
  std::optional<double> finish_s;
  int preempt_count = 0;
  double estimated_runtime_s = 0.0;  // scheduler's belief; equals runtime_at_max_s unless perturbed

  // simulator bookkeeping
  double queued_since_s = 0.0;
  double queuing_total_s = 0.0;
  double pending_overhead_s = 0.0;  // restart/scale cost still to be paid in wall time
  double overhead_paid_s = 0.0;
  double last_progress_s = 0.0;
  std::uint64_t completion_gen = 0;  // bumped whenever the projected completion changes

  int worker_count() const { return static_cast<int>(workers.size()); }
  int worker_count(WorkerRole role) const;
  int flexible_gpus() const { return worker_count(WorkerRole::Flexible) * spec.gpus_per_worker; }
  bool spans_kinds() const;
  int next_worker_index() const;

  /// Remaining work as the scheduler sees it: true remaining scaled by the
  /// ratio of estimated to actual total runtime.
  double estimated_remaining_s() const;
};

/// On-loan servers are grouped so flexible workers can be drained without
/// touching base workers. Empty on-loan servers are Ungrouped until the
/// first worker lands.
enum class ServerGroup { TrainingPool, Ungrouped, LoanBase, LoanFlexible };

const char* to_string(ServerGroup group);

struct Server {
  std::string id;
  GpuKind kind = GpuKind::Training;
  int total_gpus = 8;
  int free_gpus = 8;
  bool on_loan = false;  // inference server currently whitelisted for training
  ServerGroup group = ServerGroup::TrainingPool;

  bool empty() const { return free_gpus == total_gpus; }
  int used_gpus() const { return total_gpus - free_gpus; }
};

/// Whole-cluster snapshot: servers of both kinds, all jobs, and the two
/// scheduler whitelists (every server id is in exactly one of them).
struct ClusterState {
  std::vector<Server> servers;
  std::vector<JobState> jobs;
  std::set<std::string> whitelist_training;
  std::set<std::string> whitelist_inference;
  double now_s = 0.0;
  double inference_speed_factor = kDefaultInferenceSpeed;

  Server& server(const std::string& id);
  const Server& server(const std::string& id) const;
  Server* find_server(const std::string& id);
  JobState* find_job(const std::string& id);
  const JobState* find_job(const std::string& id) const;

  std::vector<std::string> on_loan_server_ids() const;  // ascending id
  int on_loan_count() const;

  /// Free GPUs on servers the training scheduler may use (training pool
  /// plus on-loan servers).
  int idle_training_capacity_gpus() const;

  /// Throws std::logic_error if a structural invariant is broken (GPU
  /// conservation, whitelist partition, worker counts vs job phase).
  void validate() const;
};

/// Builds a cluster of `training` + `inference` servers with ids t0000...,
/// i0000..., all idle, whitelists split by kind.
ClusterState make_cluster(int training, int inference, int gpus_per_server = 8,
                          double inference_speed = kDefaultInferenceSpeed);

/// Jobs occupying a server: (job id, GPUs held there), ordered by job id.
/// Throws std::invalid_argument for an unknown server id.
std::vector<std::pair<std::string, int>> occupancy(const ClusterState& cluster,
                                                   const std::string& server_id);

struct UsageMetrics {
  double training_usage = 0.0;  // busy fraction of training-kind GPUs
  double overall_usage = 0.0;   // busy fraction across both kinds
};

/// Occupancy-based usage. `normalized` weights inference GPUs by the
/// cluster's inference speed factor in the overall figure.
UsageMetrics usage_metrics(const ClusterState& cluster, bool normalized = false);

/// Removes the given workers (or all of them), releasing server GPUs and
/// resetting drained on-loan servers to Ungrouped. Phase is untouched.
void release_workers(ClusterState& cluster, JobState& job, const std::vector<int>& indices);
void release_all_workers(ClusterState& cluster, JobState& job);

/// Progress multiplier for running `workers` workers: 1 up to the midpoint
/// of the job's scaling range, then (1 - loss_per_step) per extra worker.
struct ScalingModel {
  bool imperfect = false;
  double loss_per_step = 0.10;

  double multiplier(const JobSpec& spec, int workers) const;
};

}  // namespace lyra
