#include "lyra/alloc.hpp"

#include <algorithm>
#include <cassert>
#include <limits>

namespace lyra {

namespace {

double sjf_key(const JobState& j) {
  return j.estimated_remaining_s() / static_cast<double>(j.spec.min_workers);
}

int base_demand_gpus(const JobState& j) { return j.spec.min_workers * j.spec.gpus_per_worker; }

}  // namespace

std::vector<const JobState*> sort_jobs(std::vector<const JobState*> queued) {
  std::sort(queued.begin(), queued.end(), [](const JobState* a, const JobState* b) {
    const double ka = sjf_key(*a), kb = sjf_key(*b);
    if (ka != kb) return ka < kb;
    if (a->spec.submit_s != b->spec.submit_s) return a->spec.submit_s < b->spec.submit_s;
    return a->spec.id < b->spec.id;
  });
  return queued;
}

InelasticResult allocate_inelastic(const std::vector<const JobState*>& sorted, int capacity_gpus) {
  InelasticResult r;
  r.remaining_gpus = capacity_gpus;
  for (const JobState* j : sorted) {
    const int demand = base_demand_gpus(*j);
    if (demand <= r.remaining_gpus) {
      r.base_workers[j->spec.id] = j->spec.min_workers;
      r.remaining_gpus -= demand;
    } else {
      r.deferred.push_back(j->spec.id);
    }
  }
  return r;
}

MckpInstance build_mckp(const std::vector<const JobState*>& elastic_jobs) {
  MckpInstance inst;
  for (const JobState* j : elastic_jobs) {
    const int headroom = j->spec.max_workers - j->spec.min_workers;
    if (headroom <= 0) continue;
    MckpGroup g;
    g.job_id = j->spec.id;
    // Runtime at base workers; granting w extra shortens it by value(w).
    const double base_runtime = j->estimated_remaining_s() / j->spec.min_workers;
    for (int w = 1; w <= headroom; ++w) {
      MckpItem item;
      item.extra_workers = w;
      item.weight_gpus = w * j->spec.gpus_per_worker;
      item.value_s = base_runtime * w / static_cast<double>(w + j->spec.min_workers);
      g.items.push_back(item);
    }
    inst.groups.push_back(std::move(g));
  }
  return inst;
}

MckpSelection mckp_dp(const MckpInstance& instance, int capacity_gpus) {
  MckpSelection sel;
  if (capacity_gpus < 0) capacity_gpus = 0;
  const int n = static_cast<int>(instance.groups.size());
  if (n == 0) return sel;

  // No group can usefully exceed the sum of item weights.
  int max_weight = 0;
  for (const auto& g : instance.groups) {
    int m = 0;
    for (const auto& it : g.items) m = std::max(m, it.weight_gpus);
    max_weight += m;
  }
  const int cap = std::min(capacity_gpus, max_weight);

  struct Cell {
    double value = 0.0;
    int weight = 0;
    int choice = -1;  // item index within the group, -1 = skip
  };
  // table[g][c]: best over the first g groups with at most c GPUs.
  std::vector<std::vector<Cell>> table(static_cast<std::size_t>(n) + 1,
                                       std::vector<Cell>(static_cast<std::size_t>(cap) + 1));
  for (int g = 1; g <= n; ++g) {
    const auto& items = instance.groups[static_cast<std::size_t>(g - 1)].items;
    for (int c = 0; c <= cap; ++c) {
      Cell best = table[g - 1][c];  // skip first, so ties keep the skip
      best.choice = -1;
      for (int i = 0; i < static_cast<int>(items.size()); ++i) {
        const auto& item = items[static_cast<std::size_t>(i)];
        if (item.weight_gpus > c) continue;
        const Cell& prev = table[g - 1][c - item.weight_gpus];
        const double value = prev.value + item.value_s;
        const int weight = prev.weight + item.weight_gpus;
        if (value > best.value || (value == best.value && weight < best.weight)) {
          best.value = value;
          best.weight = weight;
          best.choice = i;
        }
      }
      table[g][c] = best;
    }
  }

  int c = cap;
  for (int g = n; g >= 1; --g) {
    const Cell& cell = table[g][c];
    if (cell.choice >= 0) {
      const auto& group = instance.groups[static_cast<std::size_t>(g - 1)];
      const auto& item = group.items[static_cast<std::size_t>(cell.choice)];
      sel.chosen_extra[group.job_id] = item.extra_workers;
      c -= item.weight_gpus;
    }
  }
  sel.total_value_s = table[n][cap].value;
  sel.total_weight_gpus = table[n][cap].weight;
  return sel;
}

AllocationPlan allocate_lyra(const std::vector<const JobState*>& queued,
                             const std::vector<const JobState*>& running_elastic,
                             int capacity_gpus) {
  AllocationPlan plan;
  const auto sorted = sort_jobs(queued);
  const InelasticResult base = allocate_inelastic(sorted, capacity_gpus);
  plan.deferred = base.deferred;
  for (const auto& [id, workers] : base.base_workers) plan.scheduled[id] = workers;

  // Flexible demand competes for what is left plus nothing extra: GPUs held
  // by running jobs' flexible workers are already inside capacity_gpus.
  std::vector<const JobState*> elastic;
  for (const JobState* j : sorted)
    if (base.base_workers.count(j->spec.id) && j->spec.elastic()) elastic.push_back(j);
  for (const JobState* j : running_elastic) elastic.push_back(j);

  const MckpInstance inst = build_mckp(elastic);
  const MckpSelection sel = mckp_dp(inst, base.remaining_gpus);

  for (const JobState* j : elastic) {
    const auto it = sel.chosen_extra.find(j->spec.id);
    const int extra = it == sel.chosen_extra.end() ? 0 : it->second;
    plan.flexible_grant[j->spec.id] = extra;
    plan.scheduled[j->spec.id] = j->spec.min_workers + extra;
  }
  return plan;
}

AllocationPlan allocate_fifo(const std::vector<const JobState*>& queued, int capacity_gpus) {
  AllocationPlan plan;
  std::vector<const JobState*> order(queued);
  std::sort(order.begin(), order.end(), [](const JobState* a, const JobState* b) {
    if (a->spec.submit_s != b->spec.submit_s) return a->spec.submit_s < b->spec.submit_s;
    return a->spec.id < b->spec.id;
  });
  int remaining = capacity_gpus;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const JobState* j = order[i];
    const int demand = j->spec.max_workers * j->spec.gpus_per_worker;
    if (demand > remaining) {
      // Head of line blocks; everything behind it waits.
      for (; i < order.size(); ++i) plan.deferred.push_back(order[i]->spec.id);
      break;
    }
    plan.scheduled[j->spec.id] = j->spec.max_workers;
    remaining -= demand;
  }
  return plan;
}

AllocationPlan allocate_afs(const std::vector<const JobState*>& queued,
                            const std::vector<const JobState*>& running_elastic,
                            int capacity_gpus, const ScalingModel& scaling) {
  AllocationPlan plan;
  const auto sorted = sort_jobs(queued);
  const InelasticResult base = allocate_inelastic(sorted, capacity_gpus);
  plan.deferred = base.deferred;
  for (const auto& [id, workers] : base.base_workers) plan.scheduled[id] = workers;

  struct Cand {
    const JobState* job;
    int workers;
  };
  std::vector<Cand> cands;
  for (const JobState* j : sorted)
    if (base.base_workers.count(j->spec.id) && j->spec.elastic())
      cands.push_back({j, j->spec.min_workers});
  for (const JobState* j : running_elastic) cands.push_back({j, j->spec.min_workers});
  for (auto& c : cands) plan.flexible_grant[c.job->spec.id] = 0;

  int remaining = base.remaining_gpus;
  for (;;) {
    Cand* best = nullptr;
    double best_gain = -std::numeric_limits<double>::infinity();
    double best_rem = 0.0;
    for (auto& c : cands) {
      if (c.workers >= c.job->spec.max_workers) continue;
      if (c.job->spec.gpus_per_worker > remaining) continue;
      const double mult_now = scaling.multiplier(c.job->spec, c.workers);
      const double mult_next = scaling.multiplier(c.job->spec, c.workers + 1);
      const double gain = ((c.workers + 1) * mult_next - c.workers * mult_now) /
                          static_cast<double>(c.job->spec.gpus_per_worker);
      const double rem = c.job->estimated_remaining_s() / c.workers;
      const bool better =
          gain > best_gain ||
          (gain == best_gain && best &&
           (rem < best_rem || (rem == best_rem && c.job->spec.id < best->job->spec.id)));
      if (better) {
        best = &c;
        best_gain = gain;
        best_rem = rem;
      }
    }
    if (!best) break;
    best->workers += 1;
    remaining -= best->job->spec.gpus_per_worker;
  }

  for (const auto& c : cands) {
    plan.flexible_grant[c.job->spec.id] = c.workers - c.job->spec.min_workers;
    plan.scheduled[c.job->spec.id] = c.workers;
  }
  return plan;
}

std::map<std::string, int> allocate_gandiva(const std::vector<const JobState*>& running_elastic,
                                            int idle_gpus, bool pending_empty) {
  std::map<std::string, int> extra;
  if (!pending_empty) return extra;
  std::vector<const JobState*> order(running_elastic);
  std::sort(order.begin(), order.end(),
            [](const JobState* a, const JobState* b) { return a->spec.id < b->spec.id; });
  std::map<std::string, int> workers;
  for (const JobState* j : order) workers[j->spec.id] = j->worker_count();

  bool granted = true;
  while (granted) {
    granted = false;
    for (const JobState* j : order) {
      if (workers[j->spec.id] >= j->spec.max_workers) continue;
      if (j->spec.gpus_per_worker > idle_gpus) continue;
      workers[j->spec.id] += 1;
      extra[j->spec.id] += 1;
      idle_gpus -= j->spec.gpus_per_worker;
      granted = true;
    }
  }
  return extra;
}

const char* to_string(AllocPolicy policy) {
  switch (policy) {
    case AllocPolicy::Lyra: return "lyra";
    case AllocPolicy::Fifo: return "fifo";
    case AllocPolicy::Afs: return "afs";
    case AllocPolicy::Gandiva: return "gandiva";
    case AllocPolicy::Fixed: return "fixed";
  }
  return "?";
}

}  // namespace lyra
