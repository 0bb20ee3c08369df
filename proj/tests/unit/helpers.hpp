#pragma once

#include <string>

#include "lyra/core.hpp"

namespace lyra::testing {

inline JobSpec spec(std::string id, int gpus_per_worker, int min_workers, int max_workers,
                    double runtime_at_max_s, std::int64_t submit_s = 0) {
  JobSpec s;
  s.id = std::move(id);
  s.submit_s = submit_s;
  s.gpus_per_worker = gpus_per_worker;
  s.min_workers = min_workers;
  s.max_workers = max_workers;
  s.runtime_at_max_s = runtime_at_max_s;
  return s;
}

inline JobState job(JobSpec s) {
  JobState j;
  j.spec = std::move(s);
  j.workload.total_s = j.workload.remaining_s = j.spec.total_workload();
  j.estimated_runtime_s = j.spec.runtime_at_max_s;
  return j;
}

/// Puts one worker of `job` on `server`, adjusting free GPUs and groups the
/// way apply_placement would.
inline void add_worker(ClusterState& cluster, JobState& j, const std::string& server_id,
                       WorkerRole role = WorkerRole::Base) {
  Server& s = cluster.server(server_id);
  s.free_gpus -= j.spec.gpus_per_worker;
  if (s.on_loan)
    s.group = role == WorkerRole::Flexible ? ServerGroup::LoanFlexible : ServerGroup::LoanBase;
  WorkerPlacement p;
  p.server_id = server_id;
  p.kind = s.kind;
  p.role = role;
  j.workers[j.next_worker_index()] = p;
  j.phase = JobPhase::Running;
}

}  // namespace lyra::testing
