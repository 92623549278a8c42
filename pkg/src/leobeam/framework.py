"""Outer loop tying the three stages together, plus the two baselines.

One pass is pointing, then subchannels, then power; passes repeat until
the planning objective stalls.  Stage outputs are feasibility-checked at
every boundary.  If a pass somehow lands below the previous one, the
previous allocation is kept and the run counts the event instead of
propagating the regression.

Baseline "baseline1" pins every beam to a user cluster center for the
whole period and only iterates subchannels and power; "baseline2" keeps
the even power split and never runs the power stage.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import beam_matching, subchannel_matching
from .errors import ConfigurationError, InfeasibleAllocationError
from .netmodel import Allocation, MetricsReport, Network, check_feasibility, evaluate_allocation, metrics
from .power_control import ScaRunRecord, SolverConfig, run_sca
from .scenario import BuiltScenario, Scenario, build_network

ALGORITHMS = ("proposal", "baseline1", "baseline2")


@dataclass(frozen=True)
class FrameworkConfig:
    algorithm: str = "proposal"
    max_outer_iterations: int = 10
    outer_tolerance: float = 1e-3          # relative objective change
    allow_vacancy_swaps: bool = False
    swap_cap: int = 2
    interference_threshold: float | None = None  # None: use the noise power
    negotiation_cap: int = 2
    solver: SolverConfig = field(default_factory=SolverConfig)
    record_timing: bool = True
    certify_stability: bool = True

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(f"unknown algorithm {self.algorithm!r}")
        if self.max_outer_iterations < 1 or self.outer_tolerance <= 0:
            raise ConfigurationError("outer loop settings must be positive")
        if self.swap_cap < 1 or self.negotiation_cap < 1:
            raise ConfigurationError("exchange budgets must be >= 1")


def config_from_scenario(sc: Scenario, algorithm: str = "proposal") -> FrameworkConfig:
    return FrameworkConfig(
        algorithm=algorithm,
        max_outer_iterations=sc.max_outer_iterations,
        outer_tolerance=sc.outer_tolerance,
        allow_vacancy_swaps=sc.allow_vacancy_swaps,
        swap_cap=sc.swap_cap,
        interference_threshold=sc.interference_threshold_w,
        negotiation_cap=sc.negotiation_cap,
        solver=SolverConfig(convergence_threshold=sc.sca_tolerance,
                            max_sca_iterations=sc.sca_max_iterations),
        record_timing=sc.record_timing,
    )


@dataclass
class OuterRecord:
    index: int
    objective: float
    swap_count: int = 0
    removal_count: int = 0
    sca_iterations: int = 0
    sca_rejections: int = 0
    sca_reverted: bool = False
    blocking_pairs: int = 0
    counter_excluded: int = 0
    swap_log: list = field(default_factory=list)
    removal_log: list = field(default_factory=list)
    sca_objective_series: list[float] = field(default_factory=list)
    phase_seconds: dict[str, float] = field(default_factory=dict)


@dataclass
class RunRecord:
    algorithm: str
    seed: int
    initial_objective: float = 0.0
    objective_series: list[float] = field(default_factory=list)
    outer: list[OuterRecord] = field(default_factory=list)
    converged: bool = False
    converged_after: int = 0
    regressions_kept: int = 0       # passes discarded for lowering the objective
    feasibility_checks: int = 0
    metrics: MetricsReport | None = None
    wall_time_s: float = 0.0


@dataclass(frozen=True)
class MetricsRow:
    algorithm: str
    L: int
    K: int
    K_thr: int
    distribution: str
    seed: int
    sum_rate_bps: float
    served_users: int
    sum_alpha_utility: float
    jfi_rate: float
    jfi_utility: float
    outer_iterations: int
    wall_time_s: float
    scenario_hash: str
    build: str


def initialize_allocation(net: Network) -> Allocation:
    """Even power split, no pointing yet, and a starter subchannel spread:
    subchannels go round-robin to users ranked by their best achievable
    gain, one holder per subchannel globally, so the result is feasible
    under any later association."""
    alloc = Allocation.empty(net.slot_count, net.beam_count, net.radio.subchannel_count,
                             net.user_count)
    even = min(net.radio.beam_power_cap,
               net.radio.satellite_power_cap / net.beams_per_satellite)
    alloc.power[:] = even
    for t in range(net.slot_count):
        usable = net.tensor.usable[:, t, :]                    # [M, N]
        best = np.where(usable, net.tensor.gain[:, t, :, :].max(axis=1), 0.0).max(axis=0)
        ranked = np.lexsort((np.arange(net.user_count), -best))
        ranked = [int(n) for n in ranked if best[n] > 0.0]
        if not ranked:
            continue
        counts = np.zeros(net.user_count, dtype=np.int64)
        pointer = 0
        for k in range(net.radio.subchannel_count):
            for offset in range(len(ranked)):
                n = ranked[(pointer + offset) % len(ranked)]
                if counts[n] < net.radio.per_user_cap:
                    alloc.subs[t, k, n] = True
                    counts[n] += 1
                    pointer = (pointer + offset + 1) % len(ranked)
                    break
            else:
                break  # every reachable user is at its cap
    return alloc


def cluster_beam_centers(built: BuiltScenario, beam_count: int) -> np.ndarray:
    """Fixed pointing for baseline1: spherical k-means over user positions
    (farthest-point seeded, then averaging rounds), each centroid snapped
    to the nearest still-free candidate, biggest cluster first."""
    users = built.user_xyz
    cands = built.candidate_xyz
    cand_unit = cands / np.linalg.norm(cands, axis=1, keepdims=True)
    if users.shape[0] == 0:
        return np.arange(beam_count, dtype=np.int64) % cands.shape[0]
    unit = users / np.linalg.norm(users, axis=1, keepdims=True)
    rng = np.random.default_rng(np.random.SeedSequence([built.seed, 0xC1]))
    seeds = [int(rng.integers(unit.shape[0]))]
    while len(seeds) < min(beam_count, unit.shape[0]):
        dots = np.max(unit @ unit[seeds].T, axis=1)
        dots[seeds] = np.inf
        seeds.append(int(np.argmin(dots)))
    centers = unit[seeds].copy()
    for _ in range(20):
        labels = np.argmax(unit @ centers.T, axis=1)
        moved = False
        for j in range(centers.shape[0]):
            members = unit[labels == j]
            if members.shape[0] == 0:
                continue
            mean = members.sum(axis=0)
            norm = np.linalg.norm(mean)
            if norm > 0.0:
                fresh = mean / norm
                if not np.allclose(fresh, centers[j]):
                    moved = True
                centers[j] = fresh
        if not moved:
            break
    labels = np.argmax(unit @ centers.T, axis=1)
    sizes = np.bincount(labels, minlength=centers.shape[0])
    while centers.shape[0] < beam_count:  # fewer users than beams: reuse the densest
        centers = np.vstack([centers, centers[int(np.argmax(sizes))]])
        sizes = np.append(sizes, 0)
    order = np.lexsort((np.arange(centers.shape[0]), -sizes))
    chosen = np.full(beam_count, -1, dtype=np.int64)
    taken: set[int] = set()
    for rank, j in enumerate(order[:beam_count]):
        prefs = np.argsort(-(cand_unit @ centers[j]), kind="stable")
        for c in prefs:
            if int(c) not in taken:
                chosen[rank] = int(c)
                taken.add(int(c))
                break
    return chosen


def _assert_feasible(net: Network, alloc: Allocation, record: RunRecord, where: str) -> None:
    record.feasibility_checks += 1
    problems = check_feasibility(net, alloc)
    if problems:
        raise InfeasibleAllocationError([f"after {where}: {p}" for p in problems])


def run_framework(built: BuiltScenario, config: FrameworkConfig | None = None
                  ) -> tuple[Allocation, RunRecord]:
    config = config or config_from_scenario(built.scenario)
    net = built.network
    record = RunRecord(algorithm=config.algorithm, seed=built.seed)
    clock = time.perf_counter if config.record_timing else (lambda: 0.0)
    started = clock()

    alloc = initialize_allocation(net)
    if config.algorithm == "baseline1":
        fixed = cluster_beam_centers(built, net.beam_count)
        alloc.center[:] = fixed[None, :]
        for t in range(net.slot_count):
            alloc.assoc[t] = net.associate_slot(t, alloc.center[t])
    _assert_feasible(net, alloc, record, "initialization")
    record.initial_objective = evaluate_allocation(net, alloc).objective

    prev_obj: float | None = None
    prev_alloc = alloc.copy()
    converged_at: int | None = None
    for index in range(1, config.max_outer_iterations + 1):
        outer = OuterRecord(index=index, objective=0.0)

        if config.algorithm != "baseline1":
            tick = clock()
            alloc, bdc = beam_matching.run(
                net, alloc, built.disc,
                allow_vacancy=config.allow_vacancy_swaps,
                swap_cap=config.swap_cap,
                certify=config.certify_stability,
            )
            outer.phase_seconds["pointing"] = clock() - tick
            outer.swap_count = bdc.swap_count
            outer.swap_log = bdc.swap_log
            outer.blocking_pairs = len(bdc.blocking_pairs)
            outer.counter_excluded = len(bdc.counter_excluded)
            _assert_feasible(net, alloc, record, "pointing")

        tick = clock()
        alloc, sa = subchannel_matching.run_all_beams(
            net, alloc, config.interference_threshold, config.negotiation_cap
        )
        outer.phase_seconds["subchannels"] = clock() - tick
        outer.removal_count = sa.removal_count
        outer.removal_log = sa.removal_log
        _assert_feasible(net, alloc, record, "subchannels")

        if config.algorithm != "baseline2":
            tick = clock()
            alloc, sca = run_sca(net, alloc, config.solver)
            outer.phase_seconds["power"] = clock() - tick
            outer.sca_iterations = sca.iterations
            outer.sca_rejections = sca.rejected_steps
            outer.sca_reverted = sca.reverted
            outer.sca_objective_series = sca.objective_series
            _assert_feasible(net, alloc, record, "power")

        obj = evaluate_allocation(net, alloc).objective
        outer.objective = obj
        record.outer.append(outer)
        record.objective_series.append(obj)

        if prev_obj is not None:
            scale = max(1.0, abs(prev_obj))
            if obj < prev_obj - config.outer_tolerance * scale:
                # keep the better allocation and stop; the pass regressed
                record.regressions_kept += 1
                alloc = prev_alloc
                record.converged = True
                converged_at = index - 1
                break
            if abs(obj - prev_obj) <= config.outer_tolerance * scale:
                record.converged = True
                converged_at = index - 1
                break
        prev_obj = obj
        prev_alloc = alloc.copy()

    record.converged_after = converged_at if converged_at is not None else config.max_outer_iterations
    record.metrics = metrics(net, alloc)
    record.wall_time_s = clock() - started
    return alloc, record


def metrics_row(point: Scenario, record: RunRecord, scenario_digest: str) -> MetricsRow:
    from . import __version__
    m = record.metrics
    return MetricsRow(
        algorithm=record.algorithm,
        L=point.beams_per_satellite,
        K=point.subchannel_count,
        K_thr=point.per_user_cap,
        distribution=point.distribution,
        seed=record.seed,
        sum_rate_bps=m.sum_rate_bps,
        served_users=m.served_users,
        sum_alpha_utility=m.sum_alpha_utility,
        jfi_rate=m.jfi_rate,
        jfi_utility=m.jfi_utility,
        outer_iterations=record.converged_after,
        wall_time_s=record.wall_time_s,
        scenario_hash=scenario_digest,
        build=f"leobeam-{__version__}",
    )


def run_sweep(template: Scenario, config: FrameworkConfig | None = None
              ) -> tuple[list[MetricsRow], list[RunRecord]]:
    """One row per (algorithm, sweep point, seed).  Sweep axes change one
    knob at a time off the template; an empty sweep runs the template."""
    config = config or config_from_scenario(template)
    points: list[Scenario] = []
    points += [replace(template, beams_per_satellite=v) for v in template.sweep_beams]
    points += [replace(template, subchannel_count=v) for v in template.sweep_subchannels]
    points += [replace(template, per_user_cap=v) for v in template.sweep_user_caps]
    points += [replace(template, distribution=v) for v in template.sweep_distributions]
    if not points:
        points = [template]
    rows: list[MetricsRow] = []
    records: list[RunRecord] = []
    for point in points:
        for seed in point.seeds:
            built = build_network(point, seed)
            for algorithm in ALGORITHMS:
                _, record = run_framework(built, replace(config, algorithm=algorithm))
                rows.append(metrics_row(point, record, built.scenario_hash))
                records.append(record)
    return rows, records
