#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "lyra/core.hpp"

namespace lyra {

/// Result of picking servers to hand back to the inference cluster.
struct ReclaimOutcome {
  std::vector<std::string> selected_servers;  // in selection order
  std::set<std::string> preempted_jobs;       // jobs with a worker on a selected server
  int excess_freed_gpus = 0;  // GPUs those jobs vacate on servers that were NOT selected
};

class InfeasibleReclaimError : public std::runtime_error {
 public:
  InfeasibleReclaimError(int requested, int max_reclaimable)
      : std::runtime_error("cannot reclaim " + std::to_string(requested) + " servers, only " +
                           std::to_string(max_reclaimable) + " on loan"),
        max_reclaimable(max_reclaimable) {}
  int max_reclaimable;
};

/// Preemption cost of each on-loan server: sum over jobs hosted there of
/// 1/|servers hosting that job| (all pools count in the denominator).
/// Vacating a server whose jobs live nowhere else costs one whole job.
std::map<std::string, double> preemption_costs(const ClusterState& cluster);

enum class ReclaimPolicy { Lyra, Random, Scf };

/// Greedy minimum-cost selection: repeatedly take the cheapest on-loan
/// server, preempt its jobs everywhere, and discount the other servers
/// those jobs touched. n_r == 1 degenerates to picking the server hosting
/// the fewest jobs. Ties break on lowest server id.
ReclaimOutcome select_servers_lyra(const ClusterState& cluster, int n_r);

/// Uniform sample of on-loan servers, without replacement.
ReclaimOutcome select_servers_random(const ClusterState& cluster, int n_r, std::uint64_t seed);

/// Smallest-count-first: ascending number of hosted jobs, ties by id.
ReclaimOutcome select_servers_scf(const ClusterState& cluster, int n_r);

ReclaimOutcome select_servers(const ClusterState& cluster, int n_r, ReclaimPolicy policy,
                              std::uint64_t seed = 0);

const char* to_string(ReclaimPolicy policy);

}  // namespace lyra
