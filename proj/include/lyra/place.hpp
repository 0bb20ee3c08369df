#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lyra/core.hpp"

namespace lyra {

/// Workers to place for one job in one pass. Fresh jobs carry base and
/// flexible counts; scale-outs carry only flexible ones. `locked_kind` pins
/// running jobs that must stay on a single GPU kind.
struct PlacementRequest {
  std::string job_id;
  int gpus_per_worker = 1;
  int base_workers = 0;
  int flexible_workers = 0;
  bool elastic = false;
  bool gpu_flexible = false;
  bool may_span_kinds = false;
  std::optional<GpuKind> locked_kind;
  int first_worker_index = 0;
};

struct PlacementAssignment {
  std::string job_id;
  int worker_index = 0;
  std::string server_id;
  GpuKind kind = GpuKind::Training;
  WorkerRole role = WorkerRole::Base;
};

struct PlacementPlan {
  std::vector<PlacementAssignment> assignments;  // in placement order
  std::vector<std::string> new_servers_opened;
  std::vector<std::string> deferred;  // jobs placed not at all (all-or-none per job)
};

/// Best-fit decreasing over `requests` (descending gpus_per_worker, ties by
/// job id). Each worker goes to the non-empty candidate server that leaves
/// the fewest free GPUs; pool preference is training-then-loan for inelastic
/// jobs and loan-then-training for elastic ones (loan pools only when
/// gpu_flexible), with base workers restricted to LoanBase servers and
/// flexible workers to LoanFlexible ones. A fresh empty server in the
/// preferred pool opens only when no non-empty candidate fits. Jobs that
/// cannot span GPU kinds are placed entirely on one kind, retrying the other
/// kind wholesale before deferring. Pure over the cluster snapshot.
PlacementPlan place_workers(const std::vector<PlacementRequest>& requests,
                            const ClusterState& cluster);

/// Mutates the cluster per the plan: decrements free GPUs, sets lazy loan
/// groups, and appends workers to each job's worker map.
void apply_placement(ClusterState& cluster, const PlacementPlan& plan);

}  // namespace lyra
