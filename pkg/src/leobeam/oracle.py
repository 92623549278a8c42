"""Brute-force references for tiny instances.

Deliberately slow and simple: enumerate every admissible decision, score
each one with the same evaluator the optimizers use, keep the best.  The
only shared code path with the heuristics is that evaluator, so these
results are trustworthy yardsticks for gap reporting.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

import numpy as np

from . import beam_matching, subchannel_matching
from .errors import OracleBoundsError
from .netmodel import Allocation, Network, evaluate_allocation
from .power_control import SolverConfig, run_sca
from .scenario import BuiltScenario, Scenario

MAX_STATES = 10_000_000

# enumeration stays tractable only for genuinely tiny instances
MAX_BEAMS = 3
MAX_CANDIDATES = 4
MAX_SLOTS = 2
MAX_SUBCHANNELS = 4
MAX_USERS = 4


def _check_bounds(net: Network) -> None:
    problems = []
    for label, have, cap in (
        ("beams", net.beam_count, MAX_BEAMS),
        ("candidates", net.candidate_count, MAX_CANDIDATES),
        ("slots", net.slot_count, MAX_SLOTS),
        ("subchannels", net.radio.subchannel_count, MAX_SUBCHANNELS),
        ("users", net.user_count, MAX_USERS),
    ):
        if have > cap:
            problems.append(f"{label}: {have} > {cap}")
    if problems:
        raise OracleBoundsError("instance too large for enumeration: " + "; ".join(problems))


def _guard_states(states: int) -> None:
    if states > MAX_STATES:
        raise OracleBoundsError(f"enumeration would visit {states} states (cap {MAX_STATES})")


def _center_rows(beam_count: int, candidate_count: int) -> list[np.ndarray]:
    """Every pointing row: each beam idle (-1) or on a candidate, no
    candidate shared."""
    rows = []
    for combo in itertools.product(range(-1, candidate_count), repeat=beam_count):
        active = [c for c in combo if c >= 0]
        if len(active) == len(set(active)):
            rows.append(np.array(combo, dtype=np.int64))
    return rows


def exact_bdc(net: Network, alloc: Allocation) -> tuple[Allocation, float, int]:
    """Best pointing for the given subchannel and power decisions, by
    trying every admissible center row in every slot."""
    _check_bounds(net)
    rows = _center_rows(net.beam_count, net.candidate_count)
    states = len(rows) ** net.slot_count
    _guard_states(states)
    work = alloc.copy()
    best: Allocation | None = None
    best_obj = -np.inf
    for combo in itertools.product(rows, repeat=net.slot_count):
        for t, row in enumerate(combo):
            work.center[t] = row
            work.assoc[t] = net.associate_slot(t, row)
        obj = evaluate_allocation(net, work).objective
        if obj > best_obj:
            best_obj = obj
            best = work.copy()
    assert best is not None
    return best, best_obj, states


def _claim_tuples(users: list[int], subchannel_count: int, per_user_cap: int
                  ) -> list[tuple[int, ...]]:
    """All ways one beam can hand its subchannels to its users: entry per
    subchannel, -1 for unused, respecting the per-user budget."""
    out = []
    for combo in itertools.product([-1] + users, repeat=subchannel_count):
        counts: dict[int, int] = {}
        ok = True
        for u in combo:
            if u < 0:
                continue
            counts[u] = counts.get(u, 0) + 1
            if counts[u] > per_user_cap:
                ok = False
                break
        if ok:
            out.append(combo)
    return out


def exact_sa(net: Network, alloc: Allocation) -> tuple[Allocation, float, int]:
    """Best subchannel assignment for the given pointing and power, by
    trying every admissible claim table beam by beam, slot by slot."""
    _check_bounds(net)
    K = net.radio.subchannel_count
    cells: list[tuple[int, list[tuple[int, ...]]]] = []   # (slot, claims per beam)
    states = 1
    for t in range(net.slot_count):
        for q in range(net.beam_count):
            if alloc.center[t, q] < 0:
                continue
            users = [int(n) for n in np.flatnonzero(alloc.assoc[t] == q)]
            claims = _claim_tuples(users, K, net.radio.per_user_cap)
            states *= len(claims)
            _guard_states(states)
            cells.append((t, claims))
    work = alloc.copy()
    best: Allocation | None = None
    best_obj = -np.inf
    for picks in itertools.product(*(claims for _, claims in cells)):
        work.subs[:] = False
        for (t, _), claim in zip(cells, picks):
            for k, u in enumerate(claim):
                if u >= 0:
                    work.subs[t, k, u] = True
        obj = evaluate_allocation(net, work).objective
        if obj > best_obj:
            best_obj = obj
            best = work.copy()
    assert best is not None
    return best, best_obj, max(states, 1)


def grid_power(net: Network, alloc: Allocation, resolution: int = 41
               ) -> tuple[Allocation, float, int]:
    """Best power over a dense grid of the feasible box, for the given
    pointing and subchannel decisions."""
    _check_bounds(net)
    if resolution < 2:
        raise OracleBoundsError("grid resolution must be at least 2")
    dims = [(t, q) for t in range(net.slot_count) for q in range(net.beam_count)
            if alloc.center[t, q] >= 0]
    per_slot = np.bincount([t for t, _ in dims], minlength=net.slot_count)
    if per_slot.size and per_slot.max() > 3:
        raise OracleBoundsError("more than 3 powered beams in a slot")
    states = resolution ** len(dims)
    _guard_states(states)
    levels = np.linspace(0.0, net.radio.beam_power_cap, resolution)
    sat_cap = net.radio.satellite_power_cap
    work = alloc.copy()
    work.power[:] = 0.0
    best: Allocation | None = None
    best_obj = -np.inf
    for combo in itertools.product(levels, repeat=len(dims)):
        for (t, q), level in zip(dims, combo):
            work.power[t, q] = level
        ok = True
        for t in range(net.slot_count):
            loads = np.bincount(net.sat_of_beam, weights=work.power[t])
            if loads.max(initial=0.0) > sat_cap + 1e-9:
                ok = False
                break
        if not ok:
            continue
        obj = evaluate_allocation(net, work).objective
        if obj > best_obj:
            best_obj = obj
            best = work.copy()
    assert best is not None
    return best, best_obj, states


@dataclass(frozen=True)
class GapRow:
    comparison: str
    seed: int
    algorithm_value: float
    oracle_value: float
    gap_percent: float
    states: int


GAP_COLUMNS = ("comparison", "seed", "algorithm_value", "oracle_value",
               "gap_percent", "states")


def _gap(algorithm_value: float, oracle_value: float) -> float:
    span = max(abs(oracle_value), 1e-12)
    return 100.0 * (oracle_value - algorithm_value) / span


def tiny_scenario() -> Scenario:
    """Stock setup shrunk until exhaustive enumeration is affordable."""
    return replace(
        Scenario(),
        period_s=1.0,
        serving_count=1,
        candidate_count=4,
        user_count=4,
        beams_per_satellite=2,
        subchannel_count=3,
        per_user_cap=2,
        seeds=(1,),
    )


def gap_rows(built: BuiltScenario, grid_resolution: int = 41) -> list[GapRow]:
    """Run each optimization stage against its brute-force reference on
    one tiny instance; one row per stage."""
    from .framework import initialize_allocation

    net = built.network
    sc = built.scenario
    rows: list[GapRow] = []

    start = initialize_allocation(net)
    pointed, _ = beam_matching.run(net, start, built.disc, swap_cap=sc.swap_cap)
    _, best_obj, states = exact_bdc(net, start)
    rows.append(GapRow("pointing_vs_exact", built.seed,
                       evaluate_allocation(net, pointed).objective,
                       best_obj, _gap(evaluate_allocation(net, pointed).objective, best_obj),
                       states))

    assigned, _ = subchannel_matching.run_all_beams(
        net, pointed, sc.interference_threshold_w, sc.negotiation_cap)
    _, best_obj, states = exact_sa(net, pointed)
    rows.append(GapRow("subchannels_vs_exact", built.seed,
                       evaluate_allocation(net, assigned).objective,
                       best_obj, _gap(evaluate_allocation(net, assigned).objective, best_obj),
                       states))

    powered, _ = run_sca(net, assigned, SolverConfig(
        convergence_threshold=sc.sca_tolerance, max_sca_iterations=sc.sca_max_iterations))
    _, best_obj, states = grid_power(net, assigned, grid_resolution)
    rows.append(GapRow("power_vs_grid", built.seed,
                       evaluate_allocation(net, powered).objective,
                       best_obj, _gap(evaluate_allocation(net, powered).objective, best_obj),
                       states))
    return rows
