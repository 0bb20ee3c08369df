#include "lyra/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lyra {

double speed_factor(GpuKind kind, double inference_speed) {
  return kind == GpuKind::Training ? 1.0 : inference_speed;
}

const char* to_string(GpuKind kind) {
  return kind == GpuKind::Training ? "training" : "inference";
}

const char* to_string(JobPhase phase) {
  switch (phase) {
    case JobPhase::Queued: return "queued";
    case JobPhase::Running: return "running";
    case JobPhase::Preempted: return "preempted";
    case JobPhase::Finished: return "finished";
  }
  return "?";
}

const char* to_string(ServerGroup group) {
  switch (group) {
    case ServerGroup::TrainingPool: return "training_pool";
    case ServerGroup::Ungrouped: return "ungrouped";
    case ServerGroup::LoanBase: return "loan_base";
    case ServerGroup::LoanFlexible: return "loan_flexible";
  }
  return "?";
}

void JobSpec::validate() const {
  auto fail = [this](const std::string& what) {
    throw std::invalid_argument("job " + (id.empty() ? std::string("<unnamed>") : id) + ": " + what);
  };
  if (id.empty()) fail("empty id");
  if (submit_s < 0) fail("negative submit_s");
  if (gpus_per_worker <= 0) fail("gpus_per_worker must be positive");
  if (min_workers <= 0) fail("min_workers must be positive");
  if (max_workers < min_workers) fail("max_workers below min_workers");
  if (!(runtime_at_max_s > 0.0)) fail("runtime_at_max_s must be positive");
}

int JobState::worker_count(WorkerRole role) const {
  int n = 0;
  for (const auto& [idx, w] : workers)
    if (w.role == role) ++n;
  return n;
}

bool JobState::spans_kinds() const {
  bool training = false, inference = false;
  for (const auto& [idx, w] : workers) {
    (w.kind == GpuKind::Training ? training : inference) = true;
  }
  return training && inference;
}

int JobState::next_worker_index() const {
  return workers.empty() ? 0 : workers.rbegin()->first + 1;
}

double JobState::estimated_remaining_s() const {
  if (spec.runtime_at_max_s <= 0.0) return workload.remaining_s;
  return workload.remaining_s * (estimated_runtime_s / spec.runtime_at_max_s);
}

Server& ClusterState::server(const std::string& id) {
  if (Server* s = find_server(id)) return *s;
  throw std::invalid_argument("unknown server id: " + id);
}

const Server& ClusterState::server(const std::string& id) const {
  return const_cast<ClusterState*>(this)->server(id);
}

Server* ClusterState::find_server(const std::string& id) {
  for (auto& s : servers)
    if (s.id == id) return &s;
  return nullptr;
}

JobState* ClusterState::find_job(const std::string& id) {
  for (auto& j : jobs)
    if (j.spec.id == id) return &j;
  return nullptr;
}

const JobState* ClusterState::find_job(const std::string& id) const {
  return const_cast<ClusterState*>(this)->find_job(id);
}

std::vector<std::string> ClusterState::on_loan_server_ids() const {
  std::vector<std::string> ids;
  for (const auto& s : servers)
    if (s.on_loan) ids.push_back(s.id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

int ClusterState::on_loan_count() const {
  int n = 0;
  for (const auto& s : servers)
    if (s.on_loan) ++n;
  return n;
}

int ClusterState::idle_training_capacity_gpus() const {
  int n = 0;
  for (const auto& s : servers)
    if (whitelist_training.count(s.id)) n += s.free_gpus;
  return n;
}

void ClusterState::validate() const {
  auto fail = [](const std::string& what) { throw std::logic_error("cluster invariant: " + what); };

  std::map<std::string, int> used;
  for (const auto& s : servers) {
    if (s.free_gpus < 0 || s.free_gpus > s.total_gpus) fail("free GPUs out of range on " + s.id);
    if (whitelist_training.count(s.id) + whitelist_inference.count(s.id) != 1)
      fail("server " + s.id + " not in exactly one whitelist");
    if (s.on_loan && s.kind != GpuKind::Inference) fail("on-loan server " + s.id + " is not inference kind");
    if (s.on_loan && !whitelist_training.count(s.id)) fail("on-loan server " + s.id + " not training-whitelisted");
    if (!s.on_loan && s.kind == GpuKind::Inference && !whitelist_inference.count(s.id))
      fail("inference server " + s.id + " missing from inference whitelist");
    if (s.kind == GpuKind::Training && s.group != ServerGroup::TrainingPool)
      fail("training server " + s.id + " has a loan group");
    used[s.id] = 0;
  }
  for (const auto& other : whitelist_training)
    if (std::none_of(servers.begin(), servers.end(), [&](const Server& s) { return s.id == other; }))
      fail("whitelisted id " + other + " has no server");

  for (const auto& j : jobs) {
    const bool holds = !j.workers.empty();
    if (holds && j.phase != JobPhase::Running) fail("job " + j.spec.id + " holds workers while " + to_string(j.phase));
    if (j.phase == JobPhase::Running) {
      if (!holds) fail("running job " + j.spec.id + " has no workers");
      if (j.worker_count() < j.spec.min_workers || j.worker_count() > j.spec.max_workers)
        fail("running job " + j.spec.id + " outside its worker range");
      if (j.worker_count(WorkerRole::Base) != std::min(j.spec.min_workers, j.worker_count()))
        fail("running job " + j.spec.id + " has wrong base worker count");
    }
    if (j.phase == JobPhase::Finished && j.workload.remaining_s > 1e-6)
      fail("finished job " + j.spec.id + " has workload left");
    for (const auto& [idx, w] : j.workers) {
      auto it = used.find(w.server_id);
      if (it == used.end()) fail("job " + j.spec.id + " placed on unknown server " + w.server_id);
      it->second += j.spec.gpus_per_worker;
    }
  }
  for (const auto& s : servers) {
    if (used[s.id] != s.used_gpus()) {
      std::ostringstream os;
      os << "GPU accounting off on " << s.id << ": placed " << used[s.id] << " vs used " << s.used_gpus();
      fail(os.str());
    }
    if (s.on_loan) {
      bool base = false, flex = false;
      for (const auto& j : jobs)
        for (const auto& [idx, w] : j.workers)
          if (w.server_id == s.id) (w.role == WorkerRole::Base ? base : flex) = true;
      if (base && flex) fail("base and flexible workers share on-loan server " + s.id);
      if (s.group == ServerGroup::Ungrouped && (base || flex)) fail("occupied on-loan server " + s.id + " ungrouped");
      if (s.group == ServerGroup::LoanBase && flex) fail("flexible worker on LoanBase server " + s.id);
      if (s.group == ServerGroup::LoanFlexible && base) fail("base worker on LoanFlexible server " + s.id);
    }
  }
}

ClusterState make_cluster(int training, int inference, int gpus_per_server, double inference_speed) {
  if (training < 0 || inference < 0 || gpus_per_server <= 0)
    throw std::invalid_argument("make_cluster: bad dimensions");
  ClusterState c;
  c.inference_speed_factor = inference_speed;
  char buf[16];
  for (int i = 0; i < training; ++i) {
    std::snprintf(buf, sizeof buf, "t%04d", i);
    Server s;
    s.id = buf;
    s.kind = GpuKind::Training;
    s.total_gpus = s.free_gpus = gpus_per_server;
    s.group = ServerGroup::TrainingPool;
    c.whitelist_training.insert(s.id);
    c.servers.push_back(std::move(s));
  }
  for (int i = 0; i < inference; ++i) {
    std::snprintf(buf, sizeof buf, "i%04d", i);
    Server s;
    s.id = buf;
    s.kind = GpuKind::Inference;
    s.total_gpus = s.free_gpus = gpus_per_server;
    s.group = ServerGroup::Ungrouped;
    c.whitelist_inference.insert(s.id);
    c.servers.push_back(std::move(s));
  }
  return c;
}

std::vector<std::pair<std::string, int>> occupancy(const ClusterState& cluster,
                                                   const std::string& server_id) {
  if (std::none_of(cluster.servers.begin(), cluster.servers.end(),
                   [&](const Server& s) { return s.id == server_id; }))
    throw std::invalid_argument("unknown server id: " + server_id);
  std::map<std::string, int> held;
  for (const auto& j : cluster.jobs)
    for (const auto& [idx, w] : j.workers)
      if (w.server_id == server_id) held[j.spec.id] += j.spec.gpus_per_worker;
  return {held.begin(), held.end()};
}

UsageMetrics usage_metrics(const ClusterState& cluster, bool normalized) {
  double train_total = 0, train_busy = 0, inf_total = 0, inf_busy = 0;
  for (const auto& s : cluster.servers) {
    if (s.kind == GpuKind::Training) {
      train_total += s.total_gpus;
      train_busy += s.used_gpus();
    } else {
      inf_total += s.total_gpus;
      inf_busy += s.used_gpus();
    }
  }
  const double w = normalized ? cluster.inference_speed_factor : 1.0;
  UsageMetrics m;
  m.training_usage = train_total > 0 ? train_busy / train_total : 0.0;
  const double denom = train_total + w * inf_total;
  m.overall_usage = denom > 0 ? (train_busy + w * inf_busy) / denom : 0.0;
  return m;
}

void release_workers(ClusterState& cluster, JobState& job, const std::vector<int>& indices) {
  for (const int idx : indices) {
    const auto it = job.workers.find(idx);
    if (it == job.workers.end()) throw std::invalid_argument("released worker does not exist");
    Server& s = cluster.server(it->second.server_id);
    s.free_gpus += job.spec.gpus_per_worker;
    if (s.on_loan && s.empty()) s.group = ServerGroup::Ungrouped;
    job.workers.erase(it);
  }
}

void release_all_workers(ClusterState& cluster, JobState& job) {
  std::vector<int> all;
  for (const auto& [idx, w] : job.workers) all.push_back(idx);
  release_workers(cluster, job, all);
}

double ScalingModel::multiplier(const JobSpec& spec, int workers) const {
  if (!imperfect) return 1.0;
  const int midpoint = (spec.min_workers + spec.max_workers + 1) / 2;  // ceil
  const int steps = std::max(0, workers - midpoint);
  return std::pow(1.0 - loss_per_step, steps);
}

}  // namespace lyra
