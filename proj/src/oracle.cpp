#include "lyra/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

namespace lyra {
namespace oracle {

namespace {

void subsets(const std::vector<std::string>& ids, std::size_t start, int left,
             std::vector<std::string>& current,
             const std::function<void(const std::vector<std::string>&)>& visit) {
  if (left == 0) {
    visit(current);
    return;
  }
  if (ids.size() - start < static_cast<std::size_t>(left)) return;
  for (std::size_t i = start; i < ids.size(); ++i) {
    current.push_back(ids[i]);
    subsets(ids, i + 1, left - 1, current, visit);
    current.pop_back();
  }
}

}  // namespace

ExhaustiveReclaim exhaustive_reclaim(const ClusterState& cluster, int n_r) {
  const auto ids = cluster.on_loan_server_ids();
  if (ids.size() > 20) throw std::invalid_argument("exhaustive_reclaim: more than 20 on-loan servers");
  if (n_r < 0 || n_r > static_cast<int>(ids.size()))
    throw std::invalid_argument("exhaustive_reclaim: n_r out of range");

  // job -> on-loan servers hosting it
  std::map<std::string, std::set<std::string>> hosted;
  std::set<std::string> loan_set(ids.begin(), ids.end());
  for (const auto& j : cluster.jobs) {
    if (j.phase != JobPhase::Running) continue;
    for (const auto& [idx, w] : j.workers)
      if (loan_set.count(w.server_id)) hosted[j.spec.id].insert(w.server_id);
  }

  ExhaustiveReclaim best;
  best.min_preemptions = std::numeric_limits<int>::max();
  std::vector<std::string> current;
  subsets(ids, 0, n_r, current, [&](const std::vector<std::string>& subset) {
    int preempted = 0;
    for (const auto& [job, servers] : hosted) {
      for (const auto& s : subset) {
        if (servers.count(s)) {
          ++preempted;
          break;
        }
      }
    }
    if (preempted < best.min_preemptions) {  // strict: keeps the lexicographically first witness
      best.min_preemptions = preempted;
      best.servers = subset;
    }
  });
  if (best.min_preemptions == std::numeric_limits<int>::max()) best.min_preemptions = 0;
  return best;
}

void TwoJobInstance::validate() const {
  auto fail = [](const char* what) { throw std::invalid_argument(what); };
  if (workload_p <= 0 || workload_q <= 0) fail("workloads must be positive");
  if (g_min_p < 1 || g_min_q < 1) fail("minimum demands must be at least 1");
  if (g_max_p < g_min_p || g_max_q < g_min_q) fail("demand ranges inverted");
  if (!(g_max_p <= g_max_q)) fail("expected g_max_p <= g_max_q");
  if (!(g_max_q < capacity)) fail("expected g_max_q < capacity");
  if (!(g_min_p + g_min_q < capacity)) fail("expected joint minimum below capacity");
  if (!(capacity < g_max_p + g_max_q)) fail("expected contention: capacity below joint maximum");
}

double two_job_avg_jct(const TwoJobInstance& inst, int g_p) {
  const int g_q = inst.capacity - g_p;
  const double tp = inst.workload_p / g_p;
  const double tq = inst.workload_q / g_q;
  double jct_p, jct_q;
  if (tp <= tq) {
    jct_p = tp;
    const double left = inst.workload_q - tp * g_q;
    jct_q = left <= 0 ? tq : tp + left / inst.g_max_q;
  } else {
    jct_q = tq;
    const double left = inst.workload_p - tq * g_p;
    jct_p = tq + left / inst.g_max_p;
  }
  return 0.5 * (jct_p + jct_q);
}

TwoJobPlan two_job_optimal(const TwoJobInstance& inst) {
  inst.validate();
  const int lo = std::max(inst.g_min_p, inst.capacity - inst.g_max_q);
  const int hi = std::min(inst.g_max_p, inst.capacity - inst.g_min_q);

  TwoJobPlan plan;
  if (inst.capacity >= 2 * inst.g_max_p) {
    plan.g_p = hi;  // average JCT falls monotonically with g_p here
  } else {
    const double f_lo = two_job_avg_jct(inst, lo);
    const double f_hi = two_job_avg_jct(inst, hi);
    if (f_lo < f_hi) {
      plan.g_p = lo;
    } else if (f_hi < f_lo) {
      plan.g_p = hi;
    } else {
      plan.g_p = inst.workload_p <= inst.workload_q ? hi : lo;
    }
  }
  plan.g_q = inst.capacity - plan.g_p;
  plan.avg_jct_s = two_job_avg_jct(inst, plan.g_p);
  return plan;
}

namespace {

// Continuous-time run of fixed-capacity jobs; on each completion the freed
// GPUs go to survivors in input order, up to their maximum demand.
double simulate_with_scale_up(const std::vector<JobSpec>& jobs, std::vector<int> workers,
                              int capacity_gpus) {
  const std::size_t n = jobs.size();
  std::vector<double> remaining(n), jct(n, 0.0);
  std::vector<bool> done(n, false);
  for (std::size_t i = 0; i < n; ++i) remaining[i] = jobs[i].total_workload();

  double now = 0.0;
  int free_gpus = capacity_gpus;
  for (std::size_t i = 0; i < n; ++i) free_gpus -= workers[i] * jobs[i].gpus_per_worker;

  std::size_t finished = 0;
  while (finished < n) {
    // Next completion at current rates.
    double dt = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i)
      if (!done[i]) dt = std::min(dt, remaining[i] / workers[i]);
    now += dt;
    for (std::size_t i = 0; i < n; ++i) {
      if (done[i]) continue;
      remaining[i] -= dt * workers[i];
      if (remaining[i] <= 1e-9) {
        done[i] = true;
        jct[i] = now;
        free_gpus += workers[i] * jobs[i].gpus_per_worker;
        ++finished;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {  // survivors grow immediately
      if (done[i]) continue;
      const int more =
          std::min(jobs[i].max_workers - workers[i], free_gpus / jobs[i].gpus_per_worker);
      if (more > 0) {
        workers[i] += more;
        free_gpus -= more * jobs[i].gpus_per_worker;
      }
    }
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += jct[i];
  return sum / static_cast<double>(n);
}

}  // namespace

AllocationSearch brute_force_allocation(const std::vector<JobSpec>& jobs, int capacity_gpus) {
  if (jobs.size() > 4) throw std::invalid_argument("brute_force_allocation: more than 4 jobs");
  if (capacity_gpus > 32) throw std::invalid_argument("brute_force_allocation: capacity above 32");
  for (const auto& j : jobs) j.validate();

  AllocationSearch best;
  best.avg_jct_s = std::numeric_limits<double>::infinity();
  const std::size_t n = jobs.size();
  std::vector<int> workers(n);

  std::function<void(std::size_t, int)> walk = [&](std::size_t i, int used) {
    if (i == n) {
      const double avg = simulate_with_scale_up(jobs, workers, capacity_gpus);
      if (avg < best.avg_jct_s) {
        best.avg_jct_s = avg;
        best.workers.clear();
        for (std::size_t k = 0; k < n; ++k) best.workers[jobs[k].id] = workers[k];
      }
      return;
    }
    for (int w = jobs[i].min_workers; w <= jobs[i].max_workers; ++w) {
      const int cost = w * jobs[i].gpus_per_worker;
      if (used + cost > capacity_gpus) break;
      workers[i] = w;
      walk(i + 1, used + cost);
    }
  };
  if (n > 0) walk(0, 0);
  if (!std::isfinite(best.avg_jct_s))
    throw std::invalid_argument("brute_force_allocation: no feasible allocation");
  return best;
}

MckpSelection brute_force_mckp(const MckpInstance& instance, int capacity_gpus) {
  double combos = 1.0;
  for (const auto& g : instance.groups) combos *= static_cast<double>(g.items.size() + 1);
  if (combos > 1e7) throw std::invalid_argument("brute_force_mckp: instance too large");

  const std::size_t n = instance.groups.size();
  MckpSelection best;  // taking nothing is always feasible
  std::vector<int> choice(n, -1);

  std::function<void(std::size_t, double, int)> walk = [&](std::size_t g, double value, int weight) {
    if (g == n) {
      if (value > best.total_value_s ||
          (value == best.total_value_s && weight < best.total_weight_gpus)) {
        best.total_value_s = value;
        best.total_weight_gpus = weight;
        best.chosen_extra.clear();
        for (std::size_t k = 0; k < n; ++k)
          if (choice[k] >= 0)
            best.chosen_extra[instance.groups[k].job_id] =
                instance.groups[k].items[static_cast<std::size_t>(choice[k])].extra_workers;
      }
      return;
    }
    choice[g] = -1;
    walk(g + 1, value, weight);
    const auto& items = instance.groups[g].items;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (weight + items[i].weight_gpus > capacity_gpus) continue;
      choice[g] = static_cast<int>(i);
      walk(g + 1, value + items[i].value_s, weight + items[i].weight_gpus);
    }
    choice[g] = -1;
  };
  walk(0, 0.0, 0);
  return best;
}

}  // namespace oracle
}  // namespace lyra
