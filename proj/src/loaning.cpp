#include "lyra/loaning.hpp"

#include <algorithm>
#include <cmath>

namespace lyra {

const char* to_string(LoanAction action) {
  switch (action) {
    case LoanAction::Loan: return "loan";
    case LoanAction::Reclaim: return "reclaim";
    case LoanAction::Hold: return "hold";
  }
  return "?";
}

LoanInstruction plan_loaning(double utilization, int on_loan_count, const LoanPolicy& policy) {
  if (utilization < 0.0 || utilization > 1.0)
    throw std::invalid_argument("utilization outside [0, 1]");
  const double total = static_cast<double>(policy.total_inference_servers);
  // Tolerance keeps an exactly-representable product (0.5 * 1.1 * 100 = 55)
  // from rounding up twice.
  const int reserved =
      static_cast<int>(std::ceil(utilization * (1.0 + policy.headroom) * total - 1e-9));
  const int loanable = std::max(0, policy.total_inference_servers - reserved);
  LoanInstruction instr;
  const int delta = loanable - on_loan_count;
  if (delta > 0) {
    instr.action = LoanAction::Loan;
    instr.n = delta;
  } else if (delta < 0) {
    instr.action = LoanAction::Reclaim;
    instr.n = -delta;
  }
  return instr;
}

LoanResult execute_loan(ClusterState& cluster, int n) {
  if (n < 0) throw std::invalid_argument("cannot loan a negative count");
  LoanResult r;
  std::vector<Server*> idle;
  for (auto& s : cluster.servers)
    if (s.kind == GpuKind::Inference && !s.on_loan && s.empty()) idle.push_back(&s);
  std::sort(idle.begin(), idle.end(),
            [](const Server* a, const Server* b) { return a->id < b->id; });
  const int take = std::min<int>(n, static_cast<int>(idle.size()));
  for (int i = 0; i < take; ++i) {
    Server* s = idle[static_cast<std::size_t>(i)];
    s->on_loan = true;
    s->group = ServerGroup::Ungrouped;
    cluster.whitelist_inference.erase(s->id);
    cluster.whitelist_training.insert(s->id);
    r.moved.push_back(s->id);
  }
  r.shortfall = n - take;
  return r;
}

namespace {

void hand_back(ClusterState& cluster, const std::string& id) {
  Server& s = cluster.server(id);
  s.on_loan = false;
  s.group = ServerGroup::Ungrouped;
  cluster.whitelist_training.erase(id);
  cluster.whitelist_inference.insert(id);
}

}  // namespace

ReclaimExecution execute_reclaim(ClusterState& cluster, int n, ReclaimPolicy policy,
                                 std::uint64_t seed) {
  const auto on_loan = cluster.on_loan_server_ids();
  if (n < 0) throw std::invalid_argument("cannot reclaim a negative count");
  if (n > static_cast<int>(on_loan.size()))
    throw InfeasibleReclaimError(n, static_cast<int>(on_loan.size()));

  ReclaimExecution exec;
  exec.demanded = n;
  int need = n;

  // Stage 1a: idle on-loan servers cost nothing to return.
  for (const auto& id : on_loan) {
    if (need == 0) break;
    if (cluster.server(id).empty()) {
      hand_back(cluster, id);
      exec.idle_returned.push_back(id);
      exec.returned.push_back(id);
      --need;
    }
  }

  // Stage 1b: drain whole LoanFlexible servers by scaling elastic jobs in.
  for (const auto& id : on_loan) {
    if (need == 0) break;
    Server* s = cluster.find_server(id);
    if (!s || !s->on_loan || s->group != ServerGroup::LoanFlexible) continue;
    for (auto& job : cluster.jobs) {
      if (job.phase != JobPhase::Running) continue;
      std::vector<int> here;
      for (const auto& [idx, w] : job.workers)
        if (w.server_id == id) here.push_back(idx);
      if (here.empty()) continue;
      release_workers(cluster, job, here);
      job.completion_gen++;
      exec.scaled_in_jobs.insert(job.spec.id);
    }
    hand_back(cluster, id);
    exec.drained.push_back(id);
    exec.returned.push_back(id);
    --need;
  }

  // Stage 2: pick among the remaining on-loan servers and preempt.
  if (need > 0) {
    exec.outcome = select_servers(cluster, need, policy, seed);
    for (const auto& job_id : exec.outcome.preempted_jobs) {
      JobState* job = cluster.find_job(job_id);
      release_all_workers(cluster, *job);
      job->phase = JobPhase::Preempted;
      job->completion_gen++;
    }
    for (const auto& id : exec.outcome.selected_servers) {
      hand_back(cluster, id);
      exec.returned.push_back(id);
    }
  }
  return exec;
}

}  // namespace lyra
