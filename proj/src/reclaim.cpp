#include "lyra/reclaim.hpp"

#include <algorithm>
#include <limits>

#include "lyra/rng.hpp"

namespace lyra {

namespace {

// Which servers host each running job, and which jobs sit on each on-loan
// server. Only jobs touching at least one on-loan server matter here, but
// their spread across training servers still counts.
struct Hosting {
  std::map<std::string, std::set<std::string>> servers_of_job;   // job -> all hosting servers
  std::map<std::string, std::set<std::string>> jobs_of_server;   // on-loan server -> jobs
  std::map<std::string, std::map<std::string, int>> gpus_of_job; // job -> server -> GPUs held
};

Hosting collect_hosting(const ClusterState& cluster) {
  std::set<std::string> on_loan;
  for (const auto& s : cluster.servers)
    if (s.on_loan) on_loan.insert(s.id);

  Hosting h;
  for (const auto& s : cluster.servers)
    if (s.on_loan) h.jobs_of_server[s.id];  // every on-loan server appears, even idle ones
  for (const auto& j : cluster.jobs) {
    if (j.phase != JobPhase::Running) continue;
    bool touches_loan = false;
    for (const auto& [idx, w] : j.workers)
      if (on_loan.count(w.server_id)) touches_loan = true;
    if (!touches_loan) continue;
    for (const auto& [idx, w] : j.workers) {
      h.servers_of_job[j.spec.id].insert(w.server_id);
      h.gpus_of_job[j.spec.id][w.server_id] += j.spec.gpus_per_worker;
      if (on_loan.count(w.server_id)) h.jobs_of_server[w.server_id].insert(j.spec.id);
    }
  }
  return h;
}

// Preempted jobs and excess for a fixed selection, recomputed from scratch.
ReclaimOutcome outcome_for_selection(const ClusterState& cluster,
                                     std::vector<std::string> selected) {
  const Hosting h = collect_hosting(cluster);
  ReclaimOutcome out;
  out.selected_servers = std::move(selected);
  const std::set<std::string> chosen(out.selected_servers.begin(), out.selected_servers.end());
  for (const auto& [job, servers] : h.servers_of_job) {
    bool hit = false;
    for (const auto& s : servers)
      if (chosen.count(s)) hit = true;
    if (!hit) continue;
    out.preempted_jobs.insert(job);
    for (const auto& [server, gpus] : h.gpus_of_job.at(job))
      if (!chosen.count(server)) out.excess_freed_gpus += gpus;
  }
  return out;
}

std::vector<std::string> on_loan_ids_checked(const ClusterState& cluster, int n_r) {
  auto ids = cluster.on_loan_server_ids();
  if (n_r < 0) throw std::invalid_argument("n_r must be nonnegative");
  if (n_r > static_cast<int>(ids.size()))
    throw InfeasibleReclaimError(n_r, static_cast<int>(ids.size()));
  return ids;
}

}  // namespace

std::map<std::string, double> preemption_costs(const ClusterState& cluster) {
  const Hosting h = collect_hosting(cluster);
  std::map<std::string, double> costs;
  for (const auto& [server, jobs] : h.jobs_of_server) {
    double c = 0.0;
    for (const auto& job : jobs)
      c += 1.0 / static_cast<double>(h.servers_of_job.at(job).size());
    costs[server] = c;
  }
  return costs;
}

ReclaimOutcome select_servers_lyra(const ClusterState& cluster, int n_r) {
  auto ids = on_loan_ids_checked(cluster, n_r);
  if (n_r == 0) return {};

  Hosting h = collect_hosting(cluster);

  if (n_r == 1) {
    // One server: the cheapest choice is simply the one hosting the fewest jobs.
    std::string best;
    std::size_t best_jobs = std::numeric_limits<std::size_t>::max();
    for (const auto& id : ids) {
      const std::size_t n = h.jobs_of_server.at(id).size();
      if (n < best_jobs) {
        best_jobs = n;
        best = id;
      }
    }
    return outcome_for_selection(cluster, {best});
  }

  std::map<std::string, double> cost;
  std::map<std::string, std::size_t> span;  // |servers of job| at init; the discount unit is fixed
  for (const auto& [job, servers] : h.servers_of_job) span[job] = servers.size();
  for (const auto& id : ids) {
    double c = 0.0;
    for (const auto& job : h.jobs_of_server.at(id)) c += 1.0 / static_cast<double>(span[job]);
    cost[id] = c;
  }

  std::vector<std::string> selected;
  for (int round = 0; round < n_r; ++round) {
    std::string best;
    double best_cost = std::numeric_limits<double>::infinity();
    for (const auto& [id, c] : cost) {
      if (c < best_cost) {
        best_cost = c;
        best = id;
      }
    }
    selected.push_back(best);
    const auto victims = h.jobs_of_server.at(best);
    cost.erase(best);
    h.jobs_of_server.erase(best);
    for (const auto& job : victims) {
      for (const auto& server : h.servers_of_job.at(job)) {
        auto it = h.jobs_of_server.find(server);
        if (it == h.jobs_of_server.end()) continue;  // training-side or already selected
        if (it->second.erase(job))
          cost[server] -= 1.0 / static_cast<double>(span[job]);
      }
    }
  }
  return outcome_for_selection(cluster, std::move(selected));
}

ReclaimOutcome select_servers_random(const ClusterState& cluster, int n_r, std::uint64_t seed) {
  auto ids = on_loan_ids_checked(cluster, n_r);
  if (n_r == 0) return {};
  std::mt19937_64 rng(seed);
  std::vector<std::string> selected;
  for (int i = 0; i < n_r; ++i) {
    const std::size_t pick = static_cast<std::size_t>(uniform_below(rng, ids.size()));
    selected.push_back(ids[pick]);
    ids.erase(ids.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return outcome_for_selection(cluster, std::move(selected));
}

ReclaimOutcome select_servers_scf(const ClusterState& cluster, int n_r) {
  auto ids = on_loan_ids_checked(cluster, n_r);
  if (n_r == 0) return {};
  const Hosting h = collect_hosting(cluster);
  std::stable_sort(ids.begin(), ids.end(), [&](const std::string& a, const std::string& b) {
    return h.jobs_of_server.at(a).size() < h.jobs_of_server.at(b).size();
  });
  ids.resize(static_cast<std::size_t>(n_r));
  return outcome_for_selection(cluster, std::move(ids));
}

ReclaimOutcome select_servers(const ClusterState& cluster, int n_r, ReclaimPolicy policy,
                              std::uint64_t seed) {
  switch (policy) {
    case ReclaimPolicy::Lyra: return select_servers_lyra(cluster, n_r);
    case ReclaimPolicy::Random: return select_servers_random(cluster, n_r, seed);
    case ReclaimPolicy::Scf: return select_servers_scf(cluster, n_r);
  }
  throw std::logic_error("unreachable");
}

const char* to_string(ReclaimPolicy policy) {
  switch (policy) {
    case ReclaimPolicy::Lyra: return "lyra";
    case ReclaimPolicy::Random: return "random";
    case ReclaimPolicy::Scf: return "scf";
  }
  return "?";
}

}  // namespace lyra
