#include <doctest.h>

#include <cmath>
#include <sstream>

#include "lyra/trace.hpp"

using namespace lyra;

namespace {

JobTrace parse_jobs(const std::string& text) {
  std::istringstream in(text);
  return parse_job_trace(in, "<test>");
}

UtilTrace parse_util(const std::string& text) {
  std::istringstream in(text);
  return parse_util_trace(in, "<test>");
}

}  // namespace

TEST_CASE("job trace parsing") {
  JobTrace t = parse_jobs(
      R"({"id":"a","submit_s":0,"gpus_per_worker":2,"min_workers":1,"max_workers":4,"runtime_at_max_s":60.5,"gpu_flexible":true}
{"id":"b","submit_s":30,"gpus_per_worker":1,"min_workers":2,"runtime_at_max_s":10}
)");
  REQUIRE(t.jobs.size() == 2);
  CHECK(t.jobs[0].id == "a");
  CHECK(t.jobs[0].gpu_flexible);
  CHECK_FALSE(t.jobs[0].checkpointing);
  CHECK(t.jobs[1].max_workers == 2);  // defaults to min_workers
  CHECK_FALSE(t.jobs[1].elastic());

  SUBCASE("unknown keys are rejected") {
    CHECK_THROWS_AS(
        parse_jobs(R"({"id":"a","submit_s":0,"gpus_per_worker":1,"min_workers":1,"runtime_at_max_s":1,"color":"red"})"),
        TraceError);
  }
  SUBCASE("errors carry the offending line") {
    try {
      parse_jobs("{\"id\":\"a\",\"submit_s\":0,\"gpus_per_worker\":1,\"min_workers\":1,\"runtime_at_max_s\":1}\nnot json\n");
      FAIL("expected TraceError");
    } catch (const TraceError& e) {
      CHECK(e.line == 2);
      CHECK(std::string(e.what()).find("<test>:2:") != std::string::npos);
    }
  }
  SUBCASE("duplicate ids are rejected") {
    CHECK_THROWS_AS(parse_jobs(
        R"({"id":"a","submit_s":0,"gpus_per_worker":1,"min_workers":1,"runtime_at_max_s":1}
{"id":"a","submit_s":1,"gpus_per_worker":1,"min_workers":1,"runtime_at_max_s":1}
)"), TraceError);
  }
  SUBCASE("submissions must not go back in time") {
    CHECK_THROWS_AS(parse_jobs(
        R"({"id":"a","submit_s":10,"gpus_per_worker":1,"min_workers":1,"runtime_at_max_s":1}
{"id":"b","submit_s":5,"gpus_per_worker":1,"min_workers":1,"runtime_at_max_s":1}
)"), TraceError);
  }
  SUBCASE("spec validation applies per line") {
    CHECK_THROWS_AS(
        parse_jobs(R"({"id":"a","submit_s":0,"gpus_per_worker":0,"min_workers":1,"runtime_at_max_s":1})"),
        TraceError);
  }
}

TEST_CASE("job trace round-trips exactly") {
  GenConfig cfg;
  cfg.n_jobs = 150;
  cfg.days = 1;
  cfg.seed = 11;
  auto [jobs, util] = gen_traces(cfg);

  std::ostringstream out;
  write_job_trace(jobs, out);
  JobTrace back = parse_jobs(out.str());
  REQUIRE(back.jobs.size() == jobs.jobs.size());
  for (std::size_t i = 0; i < jobs.jobs.size(); ++i) {
    const JobSpec& x = jobs.jobs[i];
    const JobSpec& y = back.jobs[i];
    CHECK(x.id == y.id);
    CHECK(x.submit_s == y.submit_s);
    CHECK(x.gpus_per_worker == y.gpus_per_worker);
    CHECK(x.min_workers == y.min_workers);
    CHECK(x.max_workers == y.max_workers);
    CHECK(x.runtime_at_max_s == y.runtime_at_max_s);  // bit-exact
    CHECK(x.gpu_flexible == y.gpu_flexible);
    CHECK(x.checkpointing == y.checkpointing);
    CHECK(x.hetero_capable == y.hetero_capable);
  }

  std::ostringstream uout;
  write_util_trace(util, uout);
  UtilTrace uback = parse_util(uout.str());
  REQUIRE(uback.samples.size() == util.samples.size());
  for (std::size_t i = 0; i < util.samples.size(); ++i) {
    CHECK(uback.samples[i].t_s == util.samples[i].t_s);
    CHECK(uback.samples[i].utilization == util.samples[i].utilization);
  }
}

TEST_CASE("utilization trace parsing") {
  UtilTrace t = parse_util("t_s,utilization\n0,0.5\n300,0.25\n600,0.75\n");
  REQUIRE(t.samples.size() == 3);
  CHECK(t.at(-1.0) == 0.5);    // before the first sample
  CHECK(t.at(0.0) == 0.5);
  CHECK(t.at(299.0) == 0.5);
  CHECK(t.at(300.0) == 0.25);
  CHECK(t.at(1e9) == 0.75);

  CHECK_THROWS_AS(parse_util("time,util\n0,0.5\n"), TraceError);
  CHECK_THROWS_AS(parse_util("t_s,utilization\n0,1.5\n"), TraceError);
  CHECK_THROWS_AS(parse_util("t_s,utilization\n0,0.5\n0,0.6\n"), TraceError);
  CHECK_THROWS_AS(parse_util("t_s,utilization\n0,0.5\nabc,0.6\n"), TraceError);
  CHECK_THROWS_AS(parse_util("t_s,utilization\n0,0.5\n300,0.6\n900,0.7\n"), TraceError);
}

TEST_CASE("loan plan parsing") {
  std::istringstream in(
      R"({"at_s":300,"action":"loan","n":12}
{"at_s":600,"action":"hold","n":0}
{"at_s":600,"action":"reclaim","n":4}
)");
  auto plan = parse_loan_plan(in, "<test>");
  REQUIRE(plan.size() == 3);
  CHECK(plan[0].action == LoanAction::Loan);
  CHECK(plan[0].n == 12);
  CHECK(plan[1].action == LoanAction::Hold);
  CHECK(plan[2].action == LoanAction::Reclaim);

  std::istringstream bad1(R"({"at_s":300,"action":"borrow","n":1})");
  CHECK_THROWS_AS(parse_loan_plan(bad1, "<t>"), TraceError);
  std::istringstream bad2("{\"at_s\":300,\"action\":\"loan\",\"n\":1}\n{\"at_s\":100,\"action\":\"hold\",\"n\":0}\n");
  CHECK_THROWS_AS(parse_loan_plan(bad2, "<t>"), TraceError);
  std::istringstream bad3(R"({"at_s":300,"action":"loan","n":-2})");
  CHECK_THROWS_AS(parse_loan_plan(bad3, "<t>"), TraceError);
}

TEST_CASE("cluster layout parsing") {
  const std::string layout = R"({
    "gpus_per_server": 8,
    "servers": [
      {"id": "s1", "kind": "inference", "on_loan": true},
      {"id": "s2", "kind": "inference", "on_loan": true},
      {"id": "t1", "kind": "training"}
    ],
    "jobs": [
      {"id": "a", "gpus_per_worker": 4,
       "workers": [{"server": "s1"}, {"server": "s2"}]},
      {"id": "b", "gpus_per_worker": 2,
       "workers": [{"server": "t1"}, {"server": "s1", "role": "flexible"}]}
    ]
  })";
  // b mixes roles across servers; flexible share may not sit with a's base
  // workers on one loan server, so this layout is invalid.
  std::istringstream bad(layout);
  CHECK_THROWS(parse_cluster_layout(bad, "<t>"));

  const std::string ok = R"({
    "servers": [
      {"id": "s1", "kind": "inference", "on_loan": true},
      {"id": "s2", "kind": "inference", "on_loan": true},
      {"id": "t1"}
    ],
    "jobs": [
      {"id": "a", "gpus_per_worker": 4, "workers": [{"server": "s1"}]},
      {"id": "b", "gpus_per_worker": 2, "min_workers": 1, "gpu_flexible": true,
       "workers": [{"server": "t1"}, {"server": "s2", "role": "flexible"}]}
    ]
  })";
  std::istringstream in(ok);
  ClusterState c = parse_cluster_layout(in, "<t>");
  CHECK(c.servers.size() == 3);
  CHECK(c.server("s1").on_loan);
  CHECK(c.server("s1").free_gpus == 4);
  CHECK(c.server("s2").free_gpus == 6);
  CHECK(c.whitelist_training == std::set<std::string>{"s1", "s2", "t1"});
  REQUIRE(c.find_job("a") != nullptr);
  CHECK(c.find_job("a")->phase == JobPhase::Running);
  CHECK(c.find_job("a")->spec.min_workers == 1);  // defaults to placed count
  CHECK(c.find_job("b")->worker_count(WorkerRole::Flexible) == 1);

  SUBCASE("oversubscription is caught") {
    std::istringstream over(R"({
      "gpus_per_server": 4,
      "servers": [{"id": "s1"}],
      "jobs": [{"id": "a", "gpus_per_worker": 3,
                "workers": [{"server": "s1"}, {"server": "s1"}]}]
    })");
    CHECK_THROWS(parse_cluster_layout(over, "<t>"));
  }
}

TEST_CASE("generated traces are deterministic and calibrated") {
  GenConfig cfg;
  cfg.n_jobs = 400;
  cfg.days = 2;
  cfg.seed = 20240601;
  auto [jobs1, util1] = gen_traces(cfg);
  auto [jobs2, util2] = gen_traces(cfg);

  std::ostringstream a1, a2;
  write_job_trace(jobs1, a1);
  write_job_trace(jobs2, a2);
  CHECK(a1.str() == a2.str());

  REQUIRE(jobs1.jobs.size() == 400);
  double gpu_time = 0.0;
  int elastic = 0;
  std::int64_t last_submit = -1;
  for (const auto& j : jobs1.jobs) {
    CHECK(j.submit_s >= last_submit);
    last_submit = j.submit_s;
    gpu_time += j.runtime_at_max_s * j.max_workers * j.gpus_per_worker;
    if (j.elastic()) ++elastic;
  }
  CHECK(jobs1.jobs.front().submit_s >= 0);
  const double capacity =
      static_cast<double>(cfg.training_servers) * cfg.gpus_per_server * cfg.days * 86400.0;
  CHECK(gpu_time / capacity == doctest::Approx(cfg.load_factor).epsilon(1e-6));
  CHECK(elastic == static_cast<int>(std::lround(cfg.n_jobs * cfg.elastic_fraction)));

  REQUIRE(util1.samples.size() == static_cast<std::size_t>(cfg.days * 86400 / 300 + 1));
  double lo = 1.0, hi = 0.0, mean = 0.0;
  for (const auto& s : util1.samples) {
    CHECK(s.utilization >= 0.01);
    CHECK(s.utilization <= 0.99);
    lo = std::min(lo, s.utilization);
    hi = std::max(hi, s.utilization);
    mean += s.utilization;
  }
  mean /= static_cast<double>(util1.samples.size());
  CHECK(mean == doctest::Approx(cfg.util_mean).epsilon(0.02));
  CHECK(hi / lo > 1.5);  // day/night swing approximates the peak:trough ratio

  SUBCASE("different seeds differ") {
    GenConfig other = cfg;
    other.seed = 999;
    auto [jobs3, util3] = gen_traces(other);
    std::ostringstream b;
    write_job_trace(jobs3, b);
    CHECK(a1.str() != b.str());
  }
}
