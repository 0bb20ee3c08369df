#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "lyra/alloc.hpp"
#include "lyra/oracle.hpp"
#include "lyra/rng.hpp"

using namespace lyra;
using testing::job;
using testing::spec;

namespace {

// Two elastic jobs sharing an 8 GPU cluster; A finishes in 50 s at six
// workers, B in 20 s.
JobState table3_a() { return job(spec("A", 1, 2, 6, 50.0)); }
JobState table3_b() { return job(spec("B", 1, 2, 6, 20.0)); }

// The counterexample pair: A is capped at three workers and needs 2 GPUs
// per worker.
JobState table5_a() { return job(spec("A", 2, 2, 3, 100.0)); }
JobState table5_b() { return job(spec("B", 1, 2, 6, 20.0)); }

std::vector<const JobState*> ptrs(const std::vector<JobState*>& js) {
  std::vector<const JobState*> out;
  for (auto* j : js) out.push_back(j);
  return out;
}

}  // namespace

TEST_CASE("sort_jobs is SJF on max running time") {
  JobState a = table3_a();  // 300 worker-s / 2 = 150
  JobState b = table3_b();  // 120 / 2 = 60
  auto sorted = sort_jobs({&a, &b});
  REQUIRE(sorted.size() == 2);
  CHECK(sorted[0]->spec.id == "B");
  CHECK(sorted[1]->spec.id == "A");

  SUBCASE("ties break by submit time then id") {
    JobState c = job(spec("C", 1, 2, 6, 20.0, 5));
    JobState d = job(spec("D", 1, 2, 6, 20.0, 1));
    auto order = sort_jobs({&a, &c, &d, &b});
    CHECK(order[0]->spec.id == "B");  // same key, earliest submit
    CHECK(order[1]->spec.id == "D");
    CHECK(order[2]->spec.id == "C");
    CHECK(order[3]->spec.id == "A");
  }
  CHECK(sort_jobs({}).empty());
}

TEST_CASE("allocate_inelastic grants bases and skips what does not fit") {
  JobState a = table3_a();
  JobState b = table3_b();
  auto r = allocate_inelastic(sort_jobs({&a, &b}), 8);
  CHECK(r.base_workers.at("A") == 2);
  CHECK(r.base_workers.at("B") == 2);
  CHECK(r.remaining_gpus == 4);
  CHECK(r.deferred.empty());

  SUBCASE("capacity zero defers everything") {
    auto none = allocate_inelastic(sort_jobs({&a, &b}), 0);
    CHECK(none.base_workers.empty());
    CHECK(none.deferred.size() == 2);
  }

  SUBCASE("an oversized job is skipped, not blocking") {
    JobState j4 = job(spec("j4", 4, 1, 1, 30.0));
    JobState j8 = job(spec("j8", 8, 1, 1, 30.0));
    JobState j2 = job(spec("j2", 2, 1, 1, 30.0));
    auto r6 = allocate_inelastic(sort_jobs({&j4, &j8, &j2}), 6);
    CHECK(r6.base_workers.size() == 2);
    CHECK(r6.base_workers.count("j4") == 1);
    CHECK(r6.base_workers.count("j2") == 1);
    CHECK(r6.deferred == std::vector<std::string>{"j8"});
    CHECK(r6.remaining_gpus == 0);
  }
}

TEST_CASE("build_mckp emits the printed item table") {
  JobState a = table5_a();
  JobState b = table5_b();
  MckpInstance inst = build_mckp({&a, &b});
  REQUIRE(inst.groups.size() == 2);

  const MckpGroup& ga = inst.groups[0];
  CHECK(ga.job_id == "A");
  REQUIRE(ga.items.size() == 1);
  CHECK(ga.items[0].extra_workers == 1);
  CHECK(ga.items[0].weight_gpus == 2);
  CHECK(ga.items[0].value_s == doctest::Approx(50.0).epsilon(1e-12));

  const MckpGroup& gb = inst.groups[1];
  CHECK(gb.job_id == "B");
  REQUIRE(gb.items.size() == 4);
  const double want_value[] = {20.0, 30.0, 36.0, 40.0};
  for (int i = 0; i < 4; ++i) {
    CHECK(gb.items[i].extra_workers == i + 1);
    CHECK(gb.items[i].weight_gpus == i + 1);
    CHECK(gb.items[i].value_s == doctest::Approx(want_value[i]).epsilon(1e-12));
  }

  SUBCASE("value identity: T(min) - T(min+w)") {
    for (const auto& g : inst.groups) {
      const JobState& j = g.job_id == "A" ? a : b;
      const double rem = j.estimated_remaining_s();
      for (const auto& item : g.items) {
        const double t_min = rem / j.spec.min_workers;
        const double t_w = rem / (j.spec.min_workers + item.extra_workers);
        CHECK(item.value_s == doctest::Approx(t_min - t_w).epsilon(1e-9));
      }
    }
  }

  SUBCASE("rigid jobs yield no group") {
    JobState rigid = job(spec("R", 1, 2, 2, 10.0));
    CHECK(build_mckp({&rigid}).groups.empty());
  }

  SUBCASE("direct evaluation") {
    JobState j = job(spec("J", 1, 1, 3, 100.0 / 3.0));
    j.workload.remaining_s = 100.0;
    j.workload.total_s = 100.0;
    MckpInstance one = build_mckp({&j});
    REQUIRE(one.groups.size() == 1);
    REQUIRE(one.groups[0].items.size() == 2);
    CHECK(one.groups[0].items[0].value_s == doctest::Approx(50.0));
    CHECK(one.groups[0].items[1].value_s == doctest::Approx(100.0 * 2 / 3));
  }
}

TEST_CASE("mckp_dp exact optima on the printed instance") {
  JobState a = table5_a();
  JobState b = table5_b();
  MckpInstance inst = build_mckp({&a, &b});

  MckpSelection cap2 = mckp_dp(inst, 2);
  CHECK(cap2.total_value_s == doctest::Approx(50.0));
  CHECK(cap2.chosen_extra == std::map<std::string, int>{{"A", 1}});

  MckpSelection cap6 = mckp_dp(inst, 6);
  CHECK(cap6.total_value_s == doctest::Approx(90.0));
  CHECK(cap6.total_weight_gpus == 6);
  CHECK(cap6.chosen_extra == std::map<std::string, int>{{"A", 1}, {"B", 4}});

  CHECK(mckp_dp(inst, 0).chosen_extra.empty());
  CHECK(mckp_dp({}, 10).total_value_s == 0.0);

  SUBCASE("tie prefers lower weight") {
    MckpInstance tie;
    tie.groups.push_back({"x", {{1, 3, 10.0}}});
    tie.groups.push_back({"y", {{1, 2, 10.0}}});
    MckpSelection sel = mckp_dp(tie, 3);
    CHECK(sel.total_value_s == 10.0);
    CHECK(sel.total_weight_gpus == 2);
    CHECK(sel.chosen_extra == std::map<std::string, int>{{"y", 1}});
  }
}

TEST_CASE("mckp_dp matches brute force on random instances") {
  std::mt19937_64 rng(20240801);
  for (int iter = 0; iter < 200; ++iter) {
    MckpInstance inst;
    const int n_groups = 1 + static_cast<int>(uniform_below(rng, 6));
    for (int g = 0; g < n_groups; ++g) {
      MckpGroup group;
      group.job_id = "j" + std::to_string(g);
      const int n_items = 1 + static_cast<int>(uniform_below(rng, 8));
      for (int i = 0; i < n_items; ++i) {
        MckpItem item;
        item.extra_workers = i + 1;
        item.weight_gpus = 1 + static_cast<int>(uniform_below(rng, 10));
        item.value_s = std::floor(uniform01(rng) * 1000.0) / 8.0;
        group.items.push_back(item);
      }
      inst.groups.push_back(std::move(group));
    }
    const int capacity = static_cast<int>(uniform_below(rng, 41));
    MckpSelection dp = mckp_dp(inst, capacity);
    MckpSelection brute = oracle::brute_force_mckp(inst, capacity);
    REQUIRE(dp.total_value_s == brute.total_value_s);
    REQUIRE(dp.total_weight_gpus <= capacity);
  }
}

TEST_CASE("allocate_lyra two-phase plan") {
  SUBCASE("counterexample pair at capacity 8: favor A") {
    JobState a = table5_a();
    JobState b = table5_b();
    AllocationPlan plan = allocate_lyra(ptrs({&a, &b}), {}, 8);
    CHECK(plan.scheduled.at("A") == 3);
    CHECK(plan.scheduled.at("B") == 2);
    CHECK(plan.flexible_grant.at("A") == 1);
    CHECK(plan.deferred.empty());
  }

  SUBCASE("no elastic jobs: plan equals phase 1") {
    JobState r1 = job(spec("r1", 2, 2, 2, 30.0));
    JobState r2 = job(spec("r2", 1, 4, 4, 10.0));
    AllocationPlan plan = allocate_lyra(ptrs({&r1, &r2}), {}, 8);
    CHECK(plan.scheduled.at("r1") == 2);
    CHECK(plan.scheduled.at("r2") == 4);
    CHECK(plan.flexible_grant.empty());
  }

  SUBCASE("running elastic jobs reshuffle from their base") {
    JobState a = table3_a();
    a.phase = JobPhase::Running;
    AllocationPlan plan = allocate_lyra({}, {&a}, 6);
    CHECK(plan.scheduled.at("A") == 6);
    CHECK(plan.flexible_grant.at("A") == 4);
  }

  SUBCASE("scheduled worker counts stay within range and capacity") {
    JobState a = table3_a();
    JobState b = table3_b();
    for (int cap = 0; cap <= 14; ++cap) {
      AllocationPlan plan = allocate_lyra(ptrs({&a, &b}), {}, cap);
      int used = 0;
      for (const auto& [id, w] : plan.scheduled) {
        const JobSpec& s = id == "A" ? a.spec : b.spec;
        CHECK(w >= s.min_workers);
        CHECK(w <= s.max_workers);
        used += w * s.gpus_per_worker;
      }
      CHECK(used <= cap);
    }
  }
}

TEST_CASE("allocate_fifo blocks behind the head") {
  JobState a = table3_a();
  JobState b = table3_b();

  AllocationPlan plan = allocate_fifo(ptrs({&a, &b}), 8);
  CHECK(plan.scheduled.at("A") == 6);
  CHECK(plan.scheduled.count("B") == 0);
  CHECK(plan.deferred == std::vector<std::string>{"B"});

  SUBCASE("an unsatisfiable head schedules nothing") {
    JobState big = job(spec("big", 1, 10, 10, 5.0));
    JobState late = job(spec("B", 1, 2, 6, 20.0, 5));  // arrives after big
    AllocationPlan none = allocate_fifo(ptrs({&big, &late}), 8);
    CHECK(none.scheduled.empty());
    CHECK(none.deferred == std::vector<std::string>{"big", "B"});
  }

  SUBCASE("ample capacity schedules everyone") {
    AllocationPlan all = allocate_fifo(ptrs({&a, &b}), 12);
    CHECK(all.scheduled.at("A") == 6);
    CHECK(all.scheduled.at("B") == 6);
  }
}

TEST_CASE("allocate_afs grants spare GPUs by marginal gain per GPU") {
  JobState a = table5_a();
  JobState b = table5_b();
  AllocationPlan plan = allocate_afs(ptrs({&a, &b}), {}, 8);
  // Bases take 6 GPUs; B's gain 1/1 beats A's 1/2 for both spare GPUs.
  CHECK(plan.scheduled.at("A") == 2);
  CHECK(plan.scheduled.at("B") == 4);
  CHECK(plan.flexible_grant.at("B") == 2);
}

TEST_CASE("allocate_gandiva is opportunistic round-robin") {
  JobState a = job(spec("a", 2, 1, 4, 100.0));
  JobState b = job(spec("b", 2, 1, 4, 100.0));
  a.phase = b.phase = JobPhase::Running;

  CHECK(allocate_gandiva({&a, &b}, 6, false).empty());

  auto grants = allocate_gandiva({&a, &b}, 6, true);
  CHECK(grants.at("a") == 2);
  CHECK(grants.at("b") == 1);

  SUBCASE("grants stop at max_workers") {
    JobState solo = job(spec("solo", 1, 2, 4, 10.0));
    solo.phase = JobPhase::Running;
    solo.workers[0] = {};
    solo.workers[1] = {};
    auto g = allocate_gandiva({&solo}, 4, true);
    CHECK(g.at("solo") == 2);  // headroom max - current = 2 despite 4 idle GPUs
  }
}
