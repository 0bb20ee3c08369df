#include "lyra/place.hpp"

#include <algorithm>
#include <limits>
#include <set>

namespace lyra {

namespace {

struct WorkServer {
  std::string id;
  GpuKind kind;
  int total;
  int free;
  bool on_loan;
  ServerGroup group;
};

enum class Pool { Training, LoanForRole };  // loan pool compatible with the worker's role

bool group_accepts(ServerGroup group, WorkerRole role) {
  if (group == ServerGroup::Ungrouped) return true;
  return role == WorkerRole::Base ? group == ServerGroup::LoanBase
                                  : group == ServerGroup::LoanFlexible;
}

// Pools to scan, most preferred first.
std::vector<Pool> pool_order(const PlacementRequest& req, WorkerRole role) {
  if (!req.gpu_flexible) return {Pool::Training};
  if (req.elastic || role == WorkerRole::Flexible) return {Pool::LoanForRole, Pool::Training};
  return {Pool::Training, Pool::LoanForRole};  // inelastic but GPU-flexible
}

bool server_in_pool(const WorkServer& s, Pool pool, WorkerRole role) {
  if (pool == Pool::Training) return s.kind == GpuKind::Training;
  return s.on_loan && group_accepts(s.group, role);
}

bool kind_allowed(const WorkServer& s, const std::optional<GpuKind>& kind) {
  return !kind || s.kind == *kind;
}

class Planner {
 public:
  explicit Planner(const ClusterState& cluster) {
    for (const auto& s : cluster.servers)
      servers_.push_back({s.id, s.kind, s.total_gpus, s.free_gpus, s.on_loan, s.group});
  }

  // Places all workers of the request or none. Appends to plan on success.
  bool place(const PlacementRequest& req, PlacementPlan& plan) {
    std::vector<WorkerRole> roles;
    roles.insert(roles.end(), static_cast<std::size_t>(req.base_workers), WorkerRole::Base);
    roles.insert(roles.end(), static_cast<std::size_t>(req.flexible_workers),
                 WorkerRole::Flexible);
    if (roles.empty()) return true;

    std::vector<std::optional<GpuKind>> attempts;
    if (req.may_span_kinds && req.gpu_flexible) {
      attempts.push_back(std::nullopt);
    } else if (req.locked_kind) {
      attempts.push_back(req.locked_kind);
    } else if (req.gpu_flexible) {
      // Single-kind job: try the preferred kind wholesale, then the other.
      if (req.elastic) {
        attempts.push_back(GpuKind::Inference);
        attempts.push_back(GpuKind::Training);
      } else {
        attempts.push_back(GpuKind::Training);
        attempts.push_back(GpuKind::Inference);
      }
    } else {
      attempts.push_back(GpuKind::Training);
    }

    for (const auto& kind : attempts) {
      const auto snapshot = servers_;
      std::vector<PlacementAssignment> placed;
      std::vector<std::string> opened;
      bool ok = true;
      int index = req.first_worker_index;
      for (const WorkerRole role : roles) {
        WorkServer* target = pick_server(req, role, kind, opened);
        if (!target) {
          ok = false;
          break;
        }
        target->free -= req.gpus_per_worker;
        if (target->on_loan && target->group == ServerGroup::Ungrouped)
          target->group = role == WorkerRole::Base ? ServerGroup::LoanBase
                                                   : ServerGroup::LoanFlexible;
        placed.push_back({req.job_id, index++, target->id, target->kind, role});
      }
      if (ok) {
        plan.assignments.insert(plan.assignments.end(), placed.begin(), placed.end());
        plan.new_servers_opened.insert(plan.new_servers_opened.end(), opened.begin(),
                                       opened.end());
        return true;
      }
      servers_ = snapshot;
    }
    return false;
  }

 private:
  WorkServer* pick_server(const PlacementRequest& req, WorkerRole role,
                          const std::optional<GpuKind>& kind, std::vector<std::string>& opened) {
    const auto pools = pool_order(req, role);
    // Best fit among occupied servers, scanning pools in preference order.
    for (const Pool pool : pools) {
      WorkServer* best = nullptr;
      for (auto& s : servers_) {
        if (s.free == s.total) continue;
        if (!server_in_pool(s, pool, role) || !kind_allowed(s, kind)) continue;
        if (s.free < req.gpus_per_worker) continue;
        if (!best || s.free < best->free || (s.free == best->free && s.id < best->id)) best = &s;
      }
      if (best) return best;
    }
    // Nothing occupied fits: open an empty server, preferred pool first.
    for (const Pool pool : pools) {
      WorkServer* first = nullptr;
      for (auto& s : servers_) {
        if (s.free != s.total) continue;
        if (!server_in_pool(s, pool, role) || !kind_allowed(s, kind)) continue;
        if (s.free < req.gpus_per_worker) continue;
        if (!first || s.id < first->id) first = &s;
      }
      if (first) {
        opened.push_back(first->id);
        return first;
      }
    }
    return nullptr;
  }

  std::vector<WorkServer> servers_;
};

}  // namespace

PlacementPlan place_workers(const std::vector<PlacementRequest>& requests,
                            const ClusterState& cluster) {
  std::vector<const PlacementRequest*> order;
  for (const auto& r : requests) order.push_back(&r);
  std::sort(order.begin(), order.end(), [](const PlacementRequest* a, const PlacementRequest* b) {
    if (a->gpus_per_worker != b->gpus_per_worker) return a->gpus_per_worker > b->gpus_per_worker;
    return a->job_id < b->job_id;
  });

  PlacementPlan plan;
  Planner planner(cluster);
  for (const PlacementRequest* req : order) {
    if (!planner.place(*req, plan)) plan.deferred.push_back(req->job_id);
  }
  return plan;
}

void apply_placement(ClusterState& cluster, const PlacementPlan& plan) {
  for (const auto& a : plan.assignments) {
    JobState* job = cluster.find_job(a.job_id);
    if (!job) throw std::invalid_argument("placement for unknown job " + a.job_id);
    Server& s = cluster.server(a.server_id);
    if (s.free_gpus < job->spec.gpus_per_worker)
      throw std::logic_error("placement overflows server " + s.id);
    s.free_gpus -= job->spec.gpus_per_worker;
    if (s.on_loan && s.group == ServerGroup::Ungrouped)
      s.group = a.role == WorkerRole::Base ? ServerGroup::LoanBase : ServerGroup::LoanFlexible;
    job->workers[a.worker_index] = {a.server_id, a.kind, a.role};
  }
}

}  // namespace lyra
