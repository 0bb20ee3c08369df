"""Elastic GPU cluster scheduling simulator."""

from ._lyra import (
    exhaustive_reclaim,
    gen_traces,
    mckp_brute_force,
    mckp_dp,
    plan_loaning,
    preemption_costs,
    select_servers,
    simulate,
    two_job_optimal,
)

__all__ = [
    "exhaustive_reclaim",
    "gen_traces",
    "mckp_brute_force",
    "mckp_dp",
    "plan_loaning",
    "preemption_costs",
    "select_servers",
    "simulate",
    "two_job_optimal",
]
