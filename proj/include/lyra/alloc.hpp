#pragma once

#include <map>
#include <string>
#include <vector>

#include "lyra/core.hpp"

namespace lyra {

/// One candidate grant for an elastic job: `extra_workers` beyond its base,
/// costing `weight_gpus`, shortening its completion by `value_s`.
struct MckpItem {
  int extra_workers = 0;
  int weight_gpus = 0;
  double value_s = 0.0;
};

struct MckpGroup {
  std::string job_id;
  std::vector<MckpItem> items;  // extra_workers = 1, 2, ... in order
};

struct MckpInstance {
  std::vector<MckpGroup> groups;
};

struct MckpSelection {
  std::map<std::string, int> chosen_extra;  // group -> extra workers (groups absent took nothing)
  double total_value_s = 0.0;
  int total_weight_gpus = 0;
};

struct AllocationPlan {
  std::map<std::string, int> scheduled;       // job -> total workers this tick
  std::map<std::string, int> flexible_grant;  // job -> workers beyond min (elastic only)
  std::vector<std::string> deferred;          // queued jobs that did not fit
};

/// Shortest-job-first over the scheduler's runtime estimates: key is
/// estimated remaining work / min_workers, ties by submit time then id.
std::vector<const JobState*> sort_jobs(std::vector<const JobState*> queued);

struct InelasticResult {
  std::map<std::string, int> base_workers;
  std::vector<std::string> deferred;
  int remaining_gpus = 0;
};

/// Walks the sorted queue granting min_workers each; jobs whose base demand
/// does not fit are skipped, not blocking.
InelasticResult allocate_inelastic(const std::vector<const JobState*>& sorted, int capacity_gpus);

/// One group per elastic job with headroom; item for w extra workers weighs
/// w * gpus_per_worker and is worth base_runtime * w / (w + min_workers),
/// where base_runtime = estimated remaining / min_workers.
MckpInstance build_mckp(const std::vector<const JobState*>& elastic_jobs);

/// Exact multiple-choice knapsack over the groups (at most one item each).
/// Deterministic ties: lower total weight, then earlier-group/smaller-item.
MckpSelection mckp_dp(const MckpInstance& instance, int capacity_gpus);

/// Two-phase allocation: SJF base grants for the queue, then a knapsack over
/// the flexible headroom of newly scheduled and running elastic jobs.
/// `capacity_gpus` counts idle GPUs plus GPUs held by flexible workers of
/// running elastic jobs; running jobs keep at least their base.
AllocationPlan allocate_lyra(const std::vector<const JobState*>& queued,
                             const std::vector<const JobState*>& running_elastic,
                             int capacity_gpus);

/// Strict arrival order at fixed max demand with head-of-line blocking.
AllocationPlan allocate_fifo(const std::vector<const JobState*>& queued, int capacity_gpus);

/// Base grants like allocate_lyra, then workers one at a time to the job
/// with the highest marginal throughput gain per GPU.
AllocationPlan allocate_afs(const std::vector<const JobState*>& queued,
                            const std::vector<const JobState*>& running_elastic,
                            int capacity_gpus, const ScalingModel& scaling = {});

/// Opportunistic round-robin scale-out, one worker per pass, only when the
/// pending queue is empty. Returns extra workers per running elastic job.
std::map<std::string, int> allocate_gandiva(const std::vector<const JobState*>& running_elastic,
                                            int idle_gpus, bool pending_empty);

enum class AllocPolicy { Lyra, Fifo, Afs, Gandiva, Fixed };

const char* to_string(AllocPolicy policy);

}  // namespace lyra
