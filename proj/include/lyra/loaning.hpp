#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "lyra/core.hpp"
#include "lyra/reclaim.hpp"

namespace lyra {

struct LoanPolicy {
  double headroom = 0.10;          // reserve utilization * (1 + headroom)
  int interval_s = 300;
  int total_inference_servers = 0;
};

enum class LoanAction { Loan, Reclaim, Hold };

struct LoanInstruction {
  LoanAction action = LoanAction::Hold;
  int n = 0;
  double at_s = 0.0;
};

const char* to_string(LoanAction action);

/// Threshold rule: reserved = ceil(util * (1 + headroom) * total); whatever
/// is not reserved may be on loan. Emits the delta against on_loan_count.
LoanInstruction plan_loaning(double utilization, int on_loan_count, const LoanPolicy& policy);

struct LoanResult {
  std::vector<std::string> moved;  // ascending id
  int shortfall = 0;
};

/// Moves up to n idle inference servers into the training whitelist,
/// lowest id first. Short supply is clamped and reported, not an error.
LoanResult execute_loan(ClusterState& cluster, int n);

struct ReclaimExecution {
  std::vector<std::string> returned;       // every server handed back, in order
  std::vector<std::string> idle_returned;  // stage 1a: empty on-loan servers
  std::vector<std::string> drained;        // stage 1b: LoanFlexible servers emptied by scale-in
  std::set<std::string> scaled_in_jobs;    // jobs that lost flexible workers in stage 1b
  ReclaimOutcome outcome;                  // stage 2 selection (empty if demand met earlier)
  int demanded = 0;
};

/// Hands n servers back to the inference cluster. Stage 1 returns idle
/// on-loan servers, then drains LoanFlexible servers by removing flexible
/// workers (no preemption). Stage 2 covers the rest via the selector and
/// preempts every job touching a selected server (workers removed on all
/// servers; phase set to Preempted, requeue bookkeeping is the caller's).
/// Throws InfeasibleReclaimError when n exceeds the on-loan count.
ReclaimExecution execute_reclaim(ClusterState& cluster, int n, ReclaimPolicy policy,
                                 std::uint64_t seed = 0);

}  // namespace lyra
