#include "lyra/sim.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <queue>
#include <random>
#include <set>
#include <sstream>

#include "lyra/place.hpp"
#include "lyra/rng.hpp"

namespace lyra {

const char* to_string(Scenario scenario) {
  switch (scenario) {
    case Scenario::Basic: return "basic";
    case Scenario::Advanced: return "advanced";
    case Scenario::Ideal: return "ideal";
  }
  return "?";
}

std::optional<Scenario> scenario_from_string(const std::string& name) {
  if (name == "basic") return Scenario::Basic;
  if (name == "advanced") return Scenario::Advanced;
  if (name == "ideal") return Scenario::Ideal;
  return std::nullopt;
}

void ScenarioConfig::validate() const {
  auto fail = [](const char* what) { throw std::invalid_argument(std::string("config: ") + what); };
  if (training_servers < 0 || inference_servers < 0) fail("negative server count");
  if (gpus_per_server <= 0) fail("gpus_per_server must be positive");
  if (sched_interval_s <= 0 || orch_interval_s <= 0) fail("intervals must be positive");
  if (preempt_overhead_s < 0 || scale_overhead_s < 0) fail("negative overhead");
  if (!(hetero_efficiency > 0.0 && hetero_efficiency <= 1.0)) fail("hetero_efficiency outside (0,1]");
  if (!(inference_speed_factor > 0.0 && inference_speed_factor <= 1.0))
    fail("inference_speed_factor outside (0,1]");
  if (predict_error.fraction < 0.0 || predict_error.fraction > 1.0)
    fail("predict_error.fraction outside [0,1]");
  if (predict_error.max_rel < 0.0) fail("negative predict_error.max_rel");
  if (headroom < 0.0) fail("negative headroom");
  if (max_sim_s <= 0.0) fail("max_sim_s must be positive");
}

double percentile_nearest_rank(std::vector<double> values, double p) {
  if (values.empty()) return 0.0;
  if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("percentile p outside (0,1]");
  std::sort(values.begin(), values.end());
  auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(values.size())));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

double progress_rate(const JobState& job, const ScenarioConfig& config) {
  if (job.phase != JobPhase::Running || job.workers.empty()) return 0.0;
  double speed = 0.0;
  for (const auto& [idx, w] : job.workers)
    speed += speed_factor(w.kind, config.inference_speed_factor);
  const double hetero = job.spans_kinds() ? config.hetero_efficiency : 1.0;
  return hetero * config.scaling.multiplier(job.spec, job.worker_count()) * speed;
}

std::map<std::string, double> inject_prediction_error(const JobTrace& jobs, double fraction,
                                                      double max_rel, std::uint64_t seed) {
  std::map<std::string, double> est;
  for (const auto& j : jobs.jobs) est[j.id] = j.runtime_at_max_s;
  const auto n = static_cast<int>(jobs.jobs.size());
  const int k = static_cast<int>(std::llround(fraction * n));
  if (k == 0 || max_rel <= 0.0) return est;

  std::mt19937_64 rng(seed);
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  shuffle_deterministic(order, rng);
  for (int i = 0; i < k && i < n; ++i) {
    const JobSpec& spec = jobs.jobs[static_cast<std::size_t>(order[i])];
    const double mag = max_rel * (1.0 - uniform01(rng));  // in (0, max_rel]
    const double sign = uniform01(rng) < 0.5 ? -1.0 : 1.0;
    est[spec.id] = spec.runtime_at_max_s * (1.0 + sign * mag);
  }
  return est;
}

namespace {

// Queue ranks; lower runs first at equal times.
enum EventRank { kCompletion = 0, kOrchTick = 1, kSchedTick = 2, kArrival = 3 };

struct Event {
  double t = 0.0;
  int rank = 0;
  std::string id;  // job id where applicable
  std::uint64_t seq = 0;
  std::uint64_t gen = 0;  // completion generation
};

struct EventAfter {
  bool operator()(const Event& a, const Event& b) const {
    if (a.t != b.t) return a.t > b.t;
    if (a.rank != b.rank) return a.rank > b.rank;
    if (a.id != b.id) return a.id > b.id;
    return a.seq > b.seq;
  }
};

class Simulator {
 public:
  Simulator(const JobTrace& jobs, const UtilTrace& util, const Policies& policies,
            const ScenarioConfig& config, std::uint64_t seed)
      : util_(util), pol_(policies), cfg_(config), rng_(seed) {
    cfg_.validate();
    if (cfg_.scenario == Scenario::Ideal) cfg_.hetero_efficiency = 1.0;
    estimates_ = inject_prediction_error(jobs, cfg_.predict_error.fraction,
                                         cfg_.predict_error.max_rel, cfg_.predict_error.seed);
    for (const auto& spec : jobs.jobs) {
      incoming_.push_back(preprocess(spec));
      incoming_.back().validate();
    }
    cluster_ = make_cluster(cfg_.training_servers, cfg_.inference_servers, cfg_.gpus_per_server,
                            cfg_.inference_speed_factor);
    for (const auto& spec : incoming_)
      push({static_cast<double>(spec.submit_s), kArrival, spec.id, 0, 0});
    if (!incoming_.empty()) {
      push({0.0, kSchedTick, "", 0, 0});
      if (pol_.loaning) {
        if (pol_.loan_plan.empty()) {
          push({0.0, kOrchTick, "", 0, 0});
        } else {
          for (const auto& instr : pol_.loan_plan) push({instr.at_s, kOrchTick, "", 0, 0});
        }
      }
    }
  }

  SimResult run() {
    while (!queue_.empty()) {
      const Event e = queue_.top();
      queue_.pop();
      if (e.rank == kCompletion && !completion_live(e)) continue;
      if (e.t > cfg_.max_sim_s)
        throw std::runtime_error("simulation exceeded max_sim_s; likely an unplaceable job");
      sample_until(e.t);
      advance_all(e.t);
      switch (e.rank) {
        case kArrival: on_arrival(e.id); break;
        case kSchedTick: on_sched_tick(); break;
        case kOrchTick: on_orch_tick(); break;
        case kCompletion: on_completion(e.id); break;
      }
      if (cfg_.validate_each_event) cluster_.validate();
    }
    if (finished_ != static_cast<int>(incoming_.size()))
      throw std::runtime_error("event queue drained with unfinished jobs");
    return finalize();
  }

 private:
  // --- setup -------------------------------------------------------------

  JobSpec preprocess(JobSpec spec) const {
    switch (cfg_.scenario) {
      case Scenario::Basic:
        spec.hetero_capable = false;
        break;
      case Scenario::Advanced:
        break;
      case Scenario::Ideal:
        spec.gpu_flexible = true;
        spec.hetero_capable = true;
        spec.min_workers = std::min(spec.min_workers, std::max(1, (spec.max_workers + 3) / 4));
        break;
    }
    if (!pol_.elastic) spec.min_workers = spec.max_workers;
    return spec;
  }

  void push(Event e) {
    e.seq = seq_++;
    queue_.push(std::move(e));
  }

  double now() const { return cluster_.now_s; }

  double util_at(double t) const { return util_.samples.empty() ? 0.0 : util_.at(t); }

  bool completion_live(const Event& e) const {
    const JobState* j = cluster_.find_job(e.id);
    return j && j->phase == JobPhase::Running && j->completion_gen == e.gen;
  }

  // --- progress ----------------------------------------------------------

  double speed_sum(const JobState& j) const {
    double s = 0.0;
    for (const auto& [idx, w] : j.workers) s += speed_factor(w.kind, cfg_.inference_speed_factor);
    return s;
  }

  void add_segment(const JobState& j, double t0, double t1, int workers, double speed,
                   double hetero) {
    if (t1 <= t0) return;
    auto& segs = segments_[j.spec.id];
    if (!segs.empty()) {
      RateSegment& last = segs.back();
      if (last.t1 == t0 && last.workers == workers && last.speed_sum == speed &&
          last.hetero_mult == hetero) {
        last.t1 = t1;
        return;
      }
    }
    segs.push_back({j.spec.id, t0, t1, workers, speed, hetero});
  }

  void advance(JobState& j, double t) {
    double t0 = j.last_progress_s;
    j.last_progress_s = t;
    double dt = t - t0;
    if (dt <= 0.0 || j.phase != JobPhase::Running) return;
    if (j.pending_overhead_s > 0.0) {
      const double o = std::min(dt, j.pending_overhead_s);
      j.pending_overhead_s -= o;
      j.overhead_paid_s += o;
      add_segment(j, t0, t0 + o, 0, 0.0, 1.0);
      t0 += o;
      dt -= o;
    }
    if (dt > 0.0) {
      const double rate = progress_rate(j, cfg_);
      j.workload.remaining_s = std::max(0.0, j.workload.remaining_s - rate * dt);
      add_segment(j, t0, t, j.worker_count(), speed_sum(j),
                  j.spans_kinds() ? cfg_.hetero_efficiency : 1.0);
    }
  }

  void advance_all(double t) {
    for (auto& j : cluster_.jobs) advance(j, t);
    cluster_.now_s = t;
  }

  void schedule_completion(JobState& j) {
    ++j.completion_gen;
    if (j.phase != JobPhase::Running) return;
    const double rate = progress_rate(j, cfg_);
    if (rate <= 0.0) return;
    const double t_done = now() + j.pending_overhead_s + j.workload.remaining_s / rate;
    push({t_done, kCompletion, j.spec.id, 0, j.completion_gen});
  }

  // --- event handlers ----------------------------------------------------

  void on_arrival(const std::string& id) {
    const JobSpec* spec = nullptr;
    for (const auto& s : incoming_)
      if (s.id == id) spec = &s;
    JobState js;
    js.spec = *spec;
    js.workload.total_s = js.workload.remaining_s = spec->total_workload();
    js.estimated_runtime_s = estimates_.at(id);
    js.queued_since_s = now();
    js.last_progress_s = now();
    cluster_.jobs.push_back(std::move(js));
    log({{"t", now()}, {"event", "arrival"}, {"job", id}});
    dirty_ = true;
    // Fixed-allocation jobs skip the tick queue and start on arrival if they fit.
    if (pol_.alloc == AllocPolicy::Fixed && pol_.fixed_allocation.count(id)) try_fixed_launch(id);
  }

  void try_fixed_launch(const std::string& id) {
    JobState& j = *cluster_.find_job(id);
    const int workers = pol_.fixed_allocation.at(id);
    if (workers < j.spec.min_workers || workers > j.spec.max_workers)
      throw std::invalid_argument("fixed allocation outside worker range for " + id);
    PlacementPlan plan = place_workers({launch_request(j, workers)}, cluster_);
    if (!plan.deferred.empty()) return;  // no room yet; the tick retries
    commit_launch(j, plan, workers);
  }

  PlacementRequest launch_request(const JobState& j, int workers) const {
    PlacementRequest req;
    req.job_id = j.spec.id;
    req.gpus_per_worker = j.spec.gpus_per_worker;
    req.base_workers = std::min(j.spec.min_workers, workers);
    req.flexible_workers = workers - req.base_workers;
    req.elastic = j.spec.elastic();
    req.gpu_flexible = j.spec.gpu_flexible;
    req.may_span_kinds = j.spec.hetero_capable;
    req.first_worker_index = j.next_worker_index();
    return req;
  }

  PlacementRequest scale_up_request(const JobState& j, int extra) const {
    PlacementRequest req;
    req.job_id = j.spec.id;
    req.gpus_per_worker = j.spec.gpus_per_worker;
    req.base_workers = 0;
    req.flexible_workers = extra;
    req.elastic = true;
    req.gpu_flexible = j.spec.gpu_flexible;
    req.may_span_kinds = j.spec.hetero_capable;
    if (!j.spec.hetero_capable && !j.workers.empty())
      req.locked_kind = j.workers.begin()->second.kind;
    req.first_worker_index = j.next_worker_index();
    return req;
  }

  void commit_launch(JobState& j, const PlacementPlan& plan, int workers) {
    apply_placement(cluster_, plan);
    j.phase = JobPhase::Running;
    j.queuing_total_s += now() - j.queued_since_s;
    if (!j.first_start_s) j.first_start_s = now();
    log({{"t", now()}, {"event", "launch"}, {"job", j.spec.id}, {"workers", workers}});
    schedule_completion(j);
  }

  void on_completion(const std::string& id) {
    JobState& j = *cluster_.find_job(id);
    if (std::abs(j.workload.remaining_s) > 1e-6)
      throw std::logic_error("completion fired with workload left: " + id);
    j.workload.remaining_s = 0.0;
    j.phase = JobPhase::Finished;
    j.finish_s = now();
    ++j.completion_gen;
    release_all_workers(cluster_, j);
    ++finished_;
    log({{"t", now()},
         {"event", "complete"},
         {"job", id},
         {"jct_s", now() - static_cast<double>(j.spec.submit_s)}});
    dirty_ = true;
    schedule_pass(/*admissions=*/false);
  }

  void on_sched_tick() {
    if (dirty_) {
      dirty_ = false;
      schedule_pass(/*admissions=*/true);
    }
    if (finished_ < static_cast<int>(incoming_.size()))
      push({now() + static_cast<double>(cfg_.sched_interval_s), kSchedTick, "", 0, 0});
  }

  void on_orch_tick() {
    LoanInstruction instr;
    if (!pol_.loan_plan.empty()) {
      instr = pol_.loan_plan[plan_cursor_++];
    } else {
      LoanPolicy lp;
      lp.headroom = cfg_.headroom;
      lp.interval_s = static_cast<int>(cfg_.orch_interval_s);
      lp.total_inference_servers = cfg_.inference_servers;
      instr = plan_loaning(util_at(now()), cluster_.on_loan_count(), lp);
      if (finished_ < static_cast<int>(incoming_.size()))
        push({now() + static_cast<double>(cfg_.orch_interval_s), kOrchTick, "", 0, 0});
    }
    if (instr.action == LoanAction::Loan && instr.n > 0) {
      const LoanResult r = execute_loan(cluster_, instr.n);
      servers_loaned_ += static_cast<int>(r.moved.size());
      log({{"t", now()},
           {"event", "loan_move"},
           {"n", static_cast<int>(r.moved.size())},
           {"servers", r.moved},
           {"shortfall", r.shortfall}});
      dirty_ = true;
    } else if (instr.action == LoanAction::Reclaim && instr.n > 0) {
      do_reclaim(instr.n);
    }
  }

  void do_reclaim(int n) {
    std::map<std::string, int> before;
    for (const auto& j : cluster_.jobs)
      if (j.phase == JobPhase::Running) before[j.spec.id] = j.worker_count();

    const ReclaimExecution ex = execute_reclaim(cluster_, n, pol_.reclaim, rng_());
    servers_reclaimed_ += static_cast<int>(ex.returned.size());

    for (const auto& id : ex.scaled_in_jobs) {
      JobState& j = *cluster_.find_job(id);
      const int delta = j.worker_count() - before.at(id);
      j.pending_overhead_s += cfg_.scale_overhead_s;
      ++scale_ops_;
      log({{"t", now()},
           {"event", "scale"},
           {"job", id},
           {"delta", delta},
           {"workers", j.worker_count()}});
      schedule_completion(j);
    }
    std::vector<std::string> preempted(ex.outcome.preempted_jobs.begin(),
                                       ex.outcome.preempted_jobs.end());
    for (const auto& id : preempted) {
      JobState& j = *cluster_.find_job(id);
      ++j.preempt_count;
      ++preemptions_;
      j.queued_since_s = now();
      j.pending_overhead_s += cfg_.preempt_overhead_s;
      if (!j.spec.checkpointing) j.workload.remaining_s = j.workload.total_s;
      log({{"t", now()},
           {"event", "preempt"},
           {"job", id},
           {"checkpointing", j.spec.checkpointing}});
    }
    log({{"t", now()},
         {"event", "reclaim_move"},
         {"n", ex.demanded},
         {"returned", ex.returned},
         {"preempted", preempted},
         {"excess_gpus", ex.outcome.excess_freed_gpus}});
    const auto stage2 = static_cast<int>(ex.outcome.selected_servers.size());
    if (stage2 > 0) {
      ++reclaim_events_;
      collateral_sum_ += static_cast<double>(ex.outcome.excess_freed_gpus) /
                         (static_cast<double>(stage2) * cfg_.gpus_per_server);
    }
    dirty_ = true;
  }

  // --- the scheduling pass -------------------------------------------------
  //
  // Allocation decides counts; placement decides feasibility. A job whose
  // launch cannot be placed is taken out of this tick's queue and the pass
  // reruns so its GPUs go elsewhere. Scale-ups that fail placement are
  // simply dropped. Commits happen once, against the real cluster.

  struct PassPlan {
    std::map<std::string, int> launch;      // pending job -> workers
    std::vector<std::string> launch_order;  // placement issue order
    std::map<std::string, int> target;      // running elastic job -> workers
  };

  PassPlan plan_pass(const std::vector<const JobState*>& pending,
                     const std::vector<const JobState*>& running_elastic, bool admissions) {
    PassPlan pp;
    for (const JobState* j : running_elastic) pp.target[j->spec.id] = j->worker_count();

    const int idle = cluster_.idle_training_capacity_gpus();
    int flex = 0;
    for (const JobState* j : running_elastic) flex += j->flexible_gpus();

    const auto adopt = [&](const AllocationPlan& plan) {
      for (const JobState* j : pending)
        if (auto it = plan.scheduled.find(j->spec.id); it != plan.scheduled.end()) {
          pp.launch[j->spec.id] = it->second;
          pp.launch_order.push_back(j->spec.id);
        }
      for (const JobState* j : running_elastic)
        if (auto it = plan.scheduled.find(j->spec.id); it != plan.scheduled.end())
          pp.target[j->spec.id] = it->second;
    };

    switch (pol_.alloc) {
      case AllocPolicy::Lyra:
        adopt(allocate_lyra(pending, running_elastic, idle + flex));
        sort_launches(pp, pending);
        break;
      case AllocPolicy::Afs:
        adopt(allocate_afs(pending, running_elastic, idle + flex, cfg_.scaling));
        sort_launches(pp, pending);
        break;
      case AllocPolicy::Fifo:
        adopt(allocate_fifo(pending, idle));
        pp.launch_order = fifo_order(pp.launch, pending);
        break;
      case AllocPolicy::Gandiva: {
        // Base-demand admission in arrival order, then round-robin growth.
        std::vector<const JobState*> order(pending);
        std::sort(order.begin(), order.end(), [](const JobState* a, const JobState* b) {
          if (a->spec.submit_s != b->spec.submit_s) return a->spec.submit_s < b->spec.submit_s;
          return a->spec.id < b->spec.id;
        });
        int remaining = idle;
        bool blocked = false;
        for (const JobState* j : order) {
          const int demand = j->spec.min_workers * j->spec.gpus_per_worker;
          if (demand > remaining) {
            blocked = true;
            break;
          }
          pp.launch[j->spec.id] = j->spec.min_workers;
          pp.launch_order.push_back(j->spec.id);
          remaining -= demand;
        }
        for (const auto& [id, extra] : allocate_gandiva(running_elastic, remaining, !blocked))
          pp.target[id] += extra;
        break;
      }
      case AllocPolicy::Fixed:
        if (admissions) {
          for (const JobState* j : pending)
            if (auto it = pol_.fixed_allocation.find(j->spec.id);
                it != pol_.fixed_allocation.end()) {
              pp.launch[j->spec.id] = it->second;
              pp.launch_order.push_back(j->spec.id);
            }
        } else {
          // Survivors absorb freed capacity up to their max, in id order.
          int remaining = idle;
          for (const JobState* j : running_elastic) {
            const int add = std::min(j->spec.max_workers - j->worker_count(),
                                     remaining / j->spec.gpus_per_worker);
            if (add > 0) {
              pp.target[j->spec.id] += add;
              remaining -= add * j->spec.gpus_per_worker;
            }
          }
        }
        break;
    }
    return pp;
  }

  void sort_launches(PassPlan& pp, const std::vector<const JobState*>& pending) {
    std::vector<const JobState*> launched;
    for (const JobState* j : pending)
      if (pp.launch.count(j->spec.id)) launched.push_back(j);
    launched = sort_jobs(std::move(launched));
    pp.launch_order.clear();
    for (const JobState* j : launched) pp.launch_order.push_back(j->spec.id);
  }

  std::vector<std::string> fifo_order(const std::map<std::string, int>& launch,
                                      const std::vector<const JobState*>& pending) {
    std::vector<const JobState*> order;
    for (const JobState* j : pending)
      if (launch.count(j->spec.id)) order.push_back(j);
    std::sort(order.begin(), order.end(), [](const JobState* a, const JobState* b) {
      if (a->spec.submit_s != b->spec.submit_s) return a->spec.submit_s < b->spec.submit_s;
      return a->spec.id < b->spec.id;
    });
    std::vector<std::string> ids;
    for (const JobState* j : order) ids.push_back(j->spec.id);
    return ids;
  }

  // Highest-index flexible workers go first on scale-in.
  std::vector<int> pick_scale_down(const JobState& j, int count) const {
    std::vector<int> picked;
    for (auto it = j.workers.rbegin(); it != j.workers.rend() && count > 0; ++it) {
      if (it->second.role != WorkerRole::Flexible) continue;
      picked.push_back(it->first);
      --count;
    }
    if (count > 0) throw std::logic_error("scale-in below base workers");
    return picked;
  }

  void schedule_pass(bool admissions) {
    // FIFO-like policies are single-pass: the first launch that will not
    // place blocks the line until the next tick. The knapsack policies
    // rerun with the unplaceable job excluded so its share is reassigned.
    const bool sequential =
        pol_.alloc == AllocPolicy::Fifo || pol_.alloc == AllocPolicy::Gandiva ||
        pol_.alloc == AllocPolicy::Fixed;
    const bool blocking = pol_.alloc != AllocPolicy::Fixed;

    std::set<std::string> deferred;
    const int guard = static_cast<int>(cluster_.jobs.size()) + 3;
    for (int pass = 0; pass < guard; ++pass) {
      std::vector<const JobState*> pending;
      std::vector<const JobState*> running_elastic;
      for (const auto& j : cluster_.jobs) {
        if (admissions && (j.phase == JobPhase::Queued || j.phase == JobPhase::Preempted) &&
            !deferred.count(j.spec.id))
          pending.push_back(&j);
        if (j.phase == JobPhase::Running && j.spec.elastic()) running_elastic.push_back(&j);
      }
      if (pending.empty() && running_elastic.empty()) return;

      PassPlan pp = plan_pass(pending, running_elastic, admissions);

      // Scale-downs free GPUs for everything placed afterwards.
      std::vector<std::pair<std::string, std::vector<int>>> downs;
      std::vector<std::string> ups;  // placement candidates among targets
      for (const JobState* j : running_elastic) {
        const int tgt = pp.target.at(j->spec.id);
        if (tgt < j->worker_count())
          downs.emplace_back(j->spec.id, pick_scale_down(*j, j->worker_count() - tgt));
        else if (tgt > j->worker_count())
          ups.push_back(j->spec.id);
      }

      ClusterState trial = cluster_;
      for (const auto& [id, indices] : downs)
        release_workers(trial, *trial.find_job(id), indices);

      PlacementPlan placed;
      std::set<std::string> skipped;  // launches not committed this tick
      if (sequential) {
        bool blocked = false;
        for (const auto& id : pp.launch_order) {
          if (blocked) {
            skipped.insert(id);
            continue;
          }
          const JobState& j = *trial.find_job(id);
          PlacementPlan one = place_workers({launch_request(j, pp.launch.at(id))}, trial);
          if (!one.deferred.empty()) {
            skipped.insert(id);
            blocked = blocking;
            continue;
          }
          apply_placement(trial, one);
          for (auto& a : one.assignments) placed.assignments.push_back(std::move(a));
        }
        std::vector<PlacementRequest> reqs;
        for (const auto& id : ups) {
          const JobState& j = *trial.find_job(id);
          reqs.push_back(scale_up_request(j, pp.target.at(id) - j.worker_count()));
        }
        PlacementPlan rest = place_workers(reqs, trial);
        for (auto& a : rest.assignments) placed.assignments.push_back(std::move(a));
        for (auto& d : rest.deferred) placed.deferred.push_back(std::move(d));
      } else {
        std::vector<PlacementRequest> reqs;
        for (const auto& id : pp.launch_order)
          reqs.push_back(launch_request(*trial.find_job(id), pp.launch.at(id)));
        for (const auto& id : ups) {
          const JobState& j = *trial.find_job(id);
          reqs.push_back(scale_up_request(j, pp.target.at(id) - j.worker_count()));
        }
        placed = place_workers(reqs, trial);
        std::vector<std::string> failed_launches;
        for (const auto& id : placed.deferred)
          if (pp.launch.count(id)) failed_launches.push_back(id);
        if (!failed_launches.empty()) {
          deferred.insert(failed_launches.begin(), failed_launches.end());
          continue;  // rerun; their capacity is up for grabs
        }
      }

      const bool changed = commit_pass(pp, downs, placed, skipped);
      // A skipped launch or dropped scale-up leaves GPUs a waiting job could
      // claim once the freed capacity is visible to a fresh pass.
      if (changed && (!deferred.empty() || !skipped.empty() || !placed.deferred.empty()))
        dirty_ = true;
      return;
    }
    throw std::logic_error("scheduling pass did not converge");
  }

  bool commit_pass(const PassPlan& pp,
                   const std::vector<std::pair<std::string, std::vector<int>>>& downs,
                   const PlacementPlan& placed, const std::set<std::string>& skipped) {
    std::set<std::string> dropped(placed.deferred.begin(), placed.deferred.end());
    std::map<std::string, int> count_before;
    for (const auto& [id, tgt] : pp.target)
      if (const JobState* j = cluster_.find_job(id)) count_before[id] = j->worker_count();

    bool changed = false;
    for (const auto& [id, indices] : downs) {
      JobState& j = *cluster_.find_job(id);
      release_workers(cluster_, j, indices);
      j.pending_overhead_s += cfg_.scale_overhead_s;
      ++scale_ops_;
      changed = true;
      log({{"t", now()},
           {"event", "scale"},
           {"job", id},
           {"delta", -static_cast<int>(indices.size())},
           {"workers", j.worker_count()}});
      schedule_completion(j);
    }

    PlacementPlan real;
    real.assignments = placed.assignments;
    apply_placement(cluster_, real);

    for (const auto& id : pp.launch_order) {
      if (dropped.count(id) || skipped.count(id)) continue;
      JobState& j = *cluster_.find_job(id);
      j.phase = JobPhase::Running;
      j.queuing_total_s += now() - j.queued_since_s;
      if (!j.first_start_s) j.first_start_s = now();
      changed = true;
      log({{"t", now()}, {"event", "launch"}, {"job", id}, {"workers", j.worker_count()}});
      schedule_completion(j);
    }
    for (const auto& [id, tgt] : pp.target) {
      if (dropped.count(id) || pp.launch.count(id)) continue;
      JobState& j = *cluster_.find_job(id);
      if (j.phase != JobPhase::Running) continue;
      const int delta = j.worker_count() - count_before.at(id);
      if (delta > 0) {
        j.pending_overhead_s += cfg_.scale_overhead_s;
        ++scale_ops_;
        changed = true;
        log({{"t", now()},
             {"event", "scale"},
             {"job", id},
             {"delta", delta},
             {"workers", j.worker_count()}});
        schedule_completion(j);
      }
    }
    return changed;
  }

  // --- sampling and output -------------------------------------------------

  void sample_until(double t) {
    while (static_cast<double>(next_sample_s_) <= t) {
      UsagePoint p;
      p.t_s = next_sample_s_;
      double train_cap = 0, train_busy = 0, all_cap = 0, all_busy = 0, inf_idle_cap = 0;
      for (const auto& s : cluster_.servers) {
        all_cap += s.total_gpus;
        all_busy += s.used_gpus();
        if (cluster_.whitelist_training.count(s.id)) {
          train_cap += s.total_gpus;
          train_busy += s.used_gpus();
        } else {
          inf_idle_cap += s.total_gpus;
        }
      }
      const double serving = util_at(static_cast<double>(next_sample_s_)) * inf_idle_cap;
      p.training_usage = train_cap > 0 ? train_busy / train_cap : 0.0;
      p.overall_usage = all_cap > 0 ? (all_busy + serving) / all_cap : 0.0;
      usage_.push_back(p);
      next_sample_s_ += cfg_.orch_interval_s;
    }
  }

  void log(nlohmann::ordered_json e) { events_.push_back(std::move(e)); }

  SimResult finalize() {
    SimResult out;
    MetricsReport& m = out.metrics;
    m.submissions = static_cast<int>(incoming_.size());
    m.finished = finished_;
    m.preemptions = preemptions_;
    m.scale_ops = scale_ops_;
    m.reclaim_events = reclaim_events_;
    m.servers_loaned = servers_loaned_;
    m.servers_reclaimed = servers_reclaimed_;
    m.preemption_ratio =
        m.submissions > 0 ? static_cast<double>(preemptions_) / m.submissions : 0.0;
    m.collateral_damage_mean = reclaim_events_ > 0 ? collateral_sum_ / reclaim_events_ : 0.0;

    std::vector<double> queuing, jct;
    for (const auto& spec : incoming_) {
      const JobState& j = *cluster_.find_job(spec.id);
      JobMetrics jm;
      jm.id = spec.id;
      jm.submit_s = static_cast<double>(spec.submit_s);
      jm.first_start_s = j.first_start_s.value_or(-1.0);
      jm.finish_s = j.finish_s.value_or(-1.0);
      jm.queuing_s = j.queuing_total_s;
      jm.overhead_s = j.overhead_paid_s;
      jm.preemptions = j.preempt_count;
      jm.finished = j.phase == JobPhase::Finished;
      if (jm.finished) {
        jm.jct_s = jm.finish_s - jm.submit_s;
        jm.running_s = jm.jct_s - jm.queuing_s - jm.overhead_s;
        queuing.push_back(jm.queuing_s);
        jct.push_back(jm.jct_s);
      }
      m.jobs.push_back(std::move(jm));
    }
    const auto agg = [](const std::vector<double>& v) {
      Aggregate a;
      if (v.empty()) return a;
      double sum = 0;
      for (double x : v) sum += x;
      a.mean = sum / static_cast<double>(v.size());
      a.median = percentile_nearest_rank(v, 0.5);
      a.p95 = percentile_nearest_rank(v, 0.95);
      return a;
    };
    m.queuing = agg(queuing);
    m.jct = agg(jct);

    m.usage = usage_;
    double ts = 0, os = 0;
    for (const auto& p : usage_) {
      ts += p.training_usage;
      os += p.overall_usage;
    }
    if (!usage_.empty()) {
      m.training_usage_mean = ts / static_cast<double>(usage_.size());
      m.overall_usage_mean = os / static_cast<double>(usage_.size());
    }

    out.events = std::move(events_);
    for (auto& [id, segs] : segments_)
      for (auto& s : segs) out.segments.push_back(std::move(s));
    out.final_cluster = std::move(cluster_);
    return out;
  }

  UtilTrace util_;
  Policies pol_;
  ScenarioConfig cfg_;
  std::mt19937_64 rng_;
  std::vector<JobSpec> incoming_;
  std::map<std::string, double> estimates_;
  ClusterState cluster_;

  std::priority_queue<Event, std::vector<Event>, EventAfter> queue_;
  std::uint64_t seq_ = 0;
  std::size_t plan_cursor_ = 0;
  bool dirty_ = false;

  int finished_ = 0;
  int preemptions_ = 0;
  int scale_ops_ = 0;
  int reclaim_events_ = 0;
  int servers_loaned_ = 0;
  int servers_reclaimed_ = 0;
  double collateral_sum_ = 0.0;
  std::int64_t next_sample_s_ = 0;

  std::vector<nlohmann::ordered_json> events_;
  std::map<std::string, std::vector<RateSegment>> segments_;
  std::vector<UsagePoint> usage_;
};

}  // namespace

SimResult run(const JobTrace& jobs, const UtilTrace& util, const Policies& policies,
              const ScenarioConfig& config, std::uint64_t seed) {
  Simulator sim(jobs, util, policies, config, seed);
  return sim.run();
}

std::map<std::string, double> replay_running_times(const SimResult& result,
                                                   const ScalingModel& scaling) {
  std::map<std::string, double> out;
  std::map<std::string, const JobSpec*> specs;
  for (const auto& j : result.final_cluster.jobs) specs[j.spec.id] = &j.spec;

  std::map<std::string, std::vector<const RateSegment*>> by_job;
  for (const auto& s : result.segments) by_job[s.job_id].push_back(&s);

  for (const auto& [id, segs] : by_job) {
    const JobSpec& spec = *specs.at(id);
    double remaining = spec.total_workload();
    double t_run = 0.0;
    double last_rate = 0.0;
    bool done = false;
    for (const RateSegment* s : segs) {
      const double dur = s->t1 - s->t0;
      const double rate =
          s->workers == 0 ? 0.0
                          : s->hetero_mult * scaling.multiplier(spec, s->workers) * s->speed_sum;
      if (rate > 0.0) last_rate = rate;
      if (rate > 0.0 && remaining <= rate * dur) {
        t_run += remaining / rate;
        remaining = 0.0;
        done = true;
        break;
      }
      remaining -= rate * dur;
      t_run += dur;
    }
    if (!done && remaining > 0.0 && last_rate > 0.0) t_run += remaining / last_rate;
    out[id] = t_run;
  }
  return out;
}

void write_events_jsonl(const SimResult& result, std::ostream& out) {
  for (const auto& e : result.events) out << e.dump() << '\n';
}

}  // namespace lyra
