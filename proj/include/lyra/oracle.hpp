#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "lyra/alloc.hpp"
#include "lyra/core.hpp"

namespace lyra {
namespace oracle {

struct ExhaustiveReclaim {
  int min_preemptions = 0;
  std::vector<std::string> servers;  // lexicographically first witness
};

/// Minimum number of preempted jobs over all n_r-subsets of on-loan servers.
/// Guarded to at most 20 on-loan servers.
ExhaustiveReclaim exhaustive_reclaim(const ClusterState& cluster, int n_r);

/// Two elastic jobs sharing a capacity of C GPUs, one GPU per worker.
/// Valid when g_max_p <= g_max_q < C and
/// g_min_p + g_min_q < C < g_max_p + g_max_q.
struct TwoJobInstance {
  double workload_p = 0.0;  // GPU-seconds
  double workload_q = 0.0;
  int g_min_p = 1, g_max_p = 1;
  int g_min_q = 1, g_max_q = 1;
  int capacity = 0;

  void validate() const;
};

struct TwoJobPlan {
  int g_p = 0, g_q = 0;
  double avg_jct_s = 0.0;
};

/// Average JCT when the jobs start at (g_p, C - g_p) and the survivor scales
/// to its maximum the moment the other finishes.
double two_job_avg_jct(const TwoJobInstance& inst, int g_p);

/// Closed-form optimal split. When C >= 2 * g_max_p the high endpoint of
/// g_p's feasible interval wins; otherwise the average JCT rises toward the
/// equal-finish point and falls past it, so the best split is whichever
/// interval endpoint evaluates lower.
TwoJobPlan two_job_optimal(const TwoJobInstance& inst);

struct AllocationSearch {
  std::map<std::string, int> workers;
  double avg_jct_s = 0.0;
};

/// Enumerates every feasible initial worker vector (all jobs present at time
/// zero, workers within [min, max], total GPUs within capacity), simulating
/// completions with immediate greedy scale-up of survivors in input order.
/// Guarded to 4 jobs and 32 GPUs.
AllocationSearch brute_force_allocation(const std::vector<JobSpec>& jobs, int capacity_gpus);

/// Exact reference for mckp_dp by cartesian enumeration; guarded to 1e7
/// combinations.
MckpSelection brute_force_mckp(const MckpInstance& instance, int capacity_gpus);

}  // namespace oracle
}  // namespace lyra
