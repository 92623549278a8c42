"""Beam pointing as a two-phase matching game.

A pointing unit is one (candidate coordinate, slot) pair.  Phase 1 runs
deferred acceptance with interference-free scores to seed the assignment;
Phase 2 lets two same-slot units exchange beams whenever no involved
party (either unit, either beam) loses, somebody strictly gains, the
bystander beams do not suffer in aggregate, and the combined utility of
all beams strictly rises.  The last condition makes every executed swap
a strict step up a bounded potential, so the phase terminates even
before the per-pair swap counters bite.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import SolverError
from .kernels import slot_rates
from .netmodel import Allocation, Network, alpha_utility

Unit = tuple[int, int]  # (candidate index, slot index)

SWAP_CAP = 2


@dataclass
class BeamMatching:
    """Bidirectional unit/beam assignment plus per-pair swap counters."""

    beam_count: int
    slot_count: int
    unit_to_beam: dict[Unit, int] = field(default_factory=dict)
    beam_to_units: dict[int, set[Unit]] = field(default_factory=dict)
    swap_counters: dict[tuple[Unit, Unit], int] = field(default_factory=dict)
    swap_cap: int = SWAP_CAP

    def beam_of(self, unit: Unit) -> int:
        return self.unit_to_beam.get(unit, -1)

    def unit_at(self, beam: int, slot: int) -> Unit | None:
        for unit in self.beam_to_units.get(beam, ()):
            if unit[1] == slot:
                return unit
        return None

    def assign(self, unit: Unit, beam: int) -> None:
        held = self.unit_at(beam, unit[1])
        if held is not None and held != unit:
            raise SolverError(f"beam {beam} already holds a unit in slot {unit[1]}")
        self.release(unit)
        self.unit_to_beam[unit] = beam
        self.beam_to_units.setdefault(beam, set()).add(unit)

    def release(self, unit: Unit) -> None:
        beam = self.unit_to_beam.pop(unit, None)
        if beam is not None:
            self.beam_to_units[beam].discard(unit)

    def exchange(self, i: Unit, j: Unit) -> None:
        """Swap the beams of two same-slot units (either may be unmatched)."""
        qi, qj = self.beam_of(i), self.beam_of(j)
        self.release(i)
        self.release(j)
        if qj >= 0:
            self.assign(i, qj)
        if qi >= 0:
            self.assign(j, qi)

    def swap_allowed(self, i: Unit, j: Unit) -> bool:
        return self.swap_counters.get((i, j), 0) + self.swap_counters.get((j, i), 0) < self.swap_cap

    def record_swap(self, i: Unit, j: Unit) -> None:
        self.swap_counters[(i, j)] = self.swap_counters.get((i, j), 0) + 1

    def center_rows(self) -> np.ndarray:
        """centers[t, q], -1 where the beam holds nothing in that slot."""
        rows = np.full((self.slot_count, self.beam_count), -1, dtype=np.int64)
        for (c, t), q in self.unit_to_beam.items():
            rows[t, q] = c
        return rows

    def is_consistent(self) -> bool:
        for unit, beam in self.unit_to_beam.items():
            if unit not in self.beam_to_units.get(beam, ()):
                return False
        slots_seen: set[tuple[int, int]] = set()
        for beam, units in self.beam_to_units.items():
            for unit in units:
                if self.unit_to_beam.get(unit) != beam:
                    return False
                if (beam, unit[1]) in slots_seen:
                    return False
                slots_seen.add((beam, unit[1]))
        return True


@dataclass(frozen=True)
class SwapRecord:
    slot: int
    unit_i: Unit
    unit_j: Unit
    beam_i: int
    beam_j: int
    total_before: float
    total_after: float


@dataclass
class BdcResult:
    matching: BeamMatching
    swap_log: list[SwapRecord]
    proposals: int
    blocking_pairs: list[tuple[Unit, Unit]]
    counter_excluded: list[tuple[Unit, Unit]]

    @property
    def swap_count(self) -> int:
        return len(self.swap_log)


def service_discs(candidate_xyz: np.ndarray, user_xyz: np.ndarray, service_radius: float,
                  earth_radius: float) -> np.ndarray:
    """disc[c, n]: user n lies within the service radius (great-circle)
    of candidate c."""
    cu = candidate_xyz / np.linalg.norm(candidate_xyz, axis=1, keepdims=True)
    uu = user_xyz / np.linalg.norm(user_xyz, axis=1, keepdims=True)
    cosang = np.clip(cu @ uu.T, -1.0, 1.0)
    return earth_radius * np.arccos(cosang) <= service_radius


class _Evaluator:
    """Per-slot association and rate tables for the matching under test.

    Holds b and p fixed.  `peek` re-derives one slot under a hypothetical
    center row without touching state; `apply` commits a row and keeps the
    allocation's center/association views in sync.
    """

    def __init__(self, net: Network, alloc: Allocation):
        self.net = net
        self.alloc = alloc
        T, Q, N = net.slot_count, net.beam_count, net.user_count
        self.assoc = np.full((T, N), -1, dtype=np.int64)
        self.contrib = np.zeros((Q, T, N))
        self._power = np.ascontiguousarray(alloc.power, dtype=float)
        for t in range(T):
            self.apply(t, alloc.center[t])

    def peek(self, t: int, center_row: np.ndarray):
        net = self.net
        gain = net.gain_matrix(t, center_row)
        assoc = net.associate_slot(t, center_row, gain)
        owner = net.build_owner(assoc, self.alloc.subs[t], gain)
        rates, _ = slot_rates(gain, owner, self._power[t], net.noise,
                              net.radio.subchannel_bandwidth)
        contrib = np.zeros((net.beam_count, net.user_count))
        for q in range(net.beam_count):
            for k in range(net.radio.subchannel_count):
                n = owner[q, k]
                if n >= 0:
                    contrib[q, n] += rates[q, k]
        return assoc, contrib

    def apply(self, t: int, center_row: np.ndarray) -> None:
        assoc, contrib = self.peek(t, center_row)
        self.assoc[t] = assoc
        self.contrib[:, t, :] = contrib
        self.alloc.center[t] = center_row
        self.alloc.assoc[t] = assoc

    def beam_utilities(self, override: tuple[int, np.ndarray] | None = None) -> np.ndarray:
        """Per-beam utility of per-user delivered totals, optionally with
        one slot's contribution table swapped out."""
        contrib = self.contrib
        if override is not None:
            t, contrib_t = override
            contrib = contrib.copy()
            contrib[:, t, :] = contrib_t
        totals = contrib.sum(axis=1)  # [Q, N]
        radio = self.net.radio
        return np.asarray(
            alpha_utility(totals, radio.fairness_alpha, radio.utility_floor)
        ).sum(axis=1)

    def unit_utility(self, c: int, t: int, beam: int, disc: np.ndarray,
                     assoc_t: np.ndarray | None = None,
                     contrib_t: np.ndarray | None = None) -> float:
        if assoc_t is None:
            assoc_t = self.assoc[t]
        if contrib_t is None:
            contrib_t = self.contrib[:, t, :]
        mask = disc[c] & (assoc_t == beam)
        if not mask.any():
            return 0.0
        radio = self.net.radio
        vals = alpha_utility(contrib_t[beam, mask], radio.fairness_alpha, radio.utility_floor)
        return float(np.sum(vals))


def standalone_fill_widths(snr: np.ndarray, members: np.ndarray,
                           subchannel_count: int, per_user_cap: int,
                           min_sinr: float) -> np.ndarray:
    """Subchannel counts a lone beam would hand out: the strongest member
    fills up to the per-user cap, then the next, until the subchannels run
    out.  Works on row batches; snr and members share a trailing user axis.
    """
    eligible = members.copy()
    if min_sinr > 0.0:
        eligible &= snr >= min_sinr
    key = np.where(eligible, -snr, np.inf)
    order = np.argsort(key, axis=-1, kind="stable")
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.broadcast_to(
        np.arange(snr.shape[-1]), snr.shape).copy(), axis=-1)
    widths = np.clip(subchannel_count - ranks * per_user_cap, 0, per_user_cap)
    return np.where(eligible, widths, 0).astype(float)


def interference_free_scores(net: Network, alloc: Allocation, disc: np.ndarray) -> list[np.ndarray]:
    """score[t][c, q]: utility a beam would earn alone at that center,
    filling its subchannels strongest-first among the members it would
    cover.  Before any association exists every disc member counts; once
    users are associated (every pass after the first), each beam is scored
    on its own users plus anyone not holding a subchannel, so served users
    stay with their beam while uncovered ones stay up for grabs."""
    radio = net.radio
    K = radio.subchannel_count
    bw = radio.subchannel_bandwidth
    refreshed = bool((alloc.assoc >= 0).any())
    scores = []
    for t in range(net.slot_count):
        unserved = ~alloc.subs[t].any(axis=0)                    # [N]
        score = np.zeros((net.candidate_count, net.beam_count))
        for q in range(net.beam_count):
            m = net.sat_of_beam[q]
            members = disc & net.tensor.usable[m, t][None, :]    # [C, N]
            if refreshed:
                members &= ((alloc.assoc[t] == q) | unserved)[None, :]
            snr = net.tensor.gain[m, t] * (alloc.power[t, q] / K) / net.noise  # [C, N]
            width = standalone_fill_widths(snr, members, K, radio.per_user_cap,
                                           radio.min_sinr)
            rate = width * bw * np.log2(1.0 + snr)
            util = np.asarray(alpha_utility(rate, radio.fairness_alpha, radio.utility_floor))
            score[:, q] = np.where(members, util, 0.0).sum(axis=1)
        scores.append(score)
    return scores


def phase1_deferred_acceptance(scores: list[np.ndarray], beam_count: int) -> tuple[BeamMatching, int]:
    """Units propose down their score-ordered beam lists; each beam keeps
    the best proposal per slot.  Ties prefer the lower beam index on the
    proposing side and the lower candidate index on the holding side, so
    the outcome is deterministic.  Worthless pairings (zero score) are
    never proposed, so a coordinate nobody benefits from stays unmatched.
    """
    slot_count = len(scores)
    matching = BeamMatching(beam_count, slot_count)
    proposals = 0
    for t, score in enumerate(scores):
        C = score.shape[0]
        prefs = [np.lexsort((np.arange(beam_count), -score[c]))
                 for c in range(C)]
        cursor = [0] * C
        held: dict[int, int] = {}
        free = deque(range(C))
        while free:
            c = free.popleft()
            while cursor[c] < beam_count:
                q = int(prefs[c][cursor[c]])
                if score[c, q] <= 0.0:  # list is score-sorted: nothing left worth holding
                    cursor[c] = beam_count
                    break
                cursor[c] += 1
                proposals += 1
                cur = held.get(q)
                if cur is None:
                    held[q] = c
                    break
                if (score[c, q], -c) > (score[cur, q], -cur):
                    held[q] = c
                    free.append(cur)
                    break
        for q, c in held.items():
            matching.assign((c, t), q)
    return matching, proposals


def _screen_swap(ev: _Evaluator, matching: BeamMatching, disc: np.ndarray,
                 i: Unit, j: Unit, allow_vacancy: bool):
    """Evaluate the exchange of i's and j's beams.  Returns (admissible,
    committed-row, totals) with admissible=False and no row when any of
    the exchange conditions fails."""
    reject = (False, None, 0.0, 0.0)
    if i == j or i[1] != j[1]:
        return reject
    t = i[1]
    q1, q2 = matching.beam_of(i), matching.beam_of(j)
    if q1 == q2:  # both unmatched, or same beam (impossible when matched)
        return reject
    if (q1 < 0 or q2 < 0) and not allow_vacancy:
        return reject

    util_before = ev.beam_utilities()
    total_before = float(util_before.sum())
    phi_i = ev.unit_utility(i[0], t, q1, disc) if q1 >= 0 else 0.0
    phi_j = ev.unit_utility(j[0], t, q2, disc) if q2 >= 0 else 0.0

    row = ev.alloc.center[t].copy()
    if q1 >= 0:
        row[q1] = j[0]
    if q2 >= 0:
        row[q2] = i[0]
    assoc_t, contrib_t = ev.peek(t, row)
    util_after = ev.beam_utilities(override=(t, contrib_t))
    total_after = float(util_after.sum())
    phi_i_new = ev.unit_utility(i[0], t, q2, disc, assoc_t, contrib_t) if q2 >= 0 else 0.0
    phi_j_new = ev.unit_utility(j[0], t, q1, disc, assoc_t, contrib_t) if q1 >= 0 else 0.0

    involved_old = [phi_i, phi_j] + [util_before[q] for q in (q1, q2) if q >= 0]
    involved_new = [phi_i_new, phi_j_new] + [util_after[q] for q in (q1, q2) if q >= 0]
    if any(new < old for new, old in zip(involved_new, involved_old)):
        return reject
    if not any(new > old for new, old in zip(involved_new, involved_old)):
        return reject
    others = np.ones(len(util_before), dtype=bool)
    for q in (q1, q2):
        if q >= 0:
            others[q] = False
    if util_after[others].sum() < util_before[others].sum():
        return reject
    if not total_after > total_before:
        return reject
    return True, row, total_before, total_after


def is_swap_blocking(net: Network, alloc: Allocation, matching: BeamMatching,
                     disc: np.ndarray, i: Unit, j: Unit,
                     allow_vacancy: bool = False) -> bool:
    """Would exchanging i's and j's beams go through under the admission
    rule?  Counters are ignored here; callers handle saturation."""
    ev = _Evaluator(net, alloc.copy())
    admissible, _, _, _ = _screen_swap(ev, matching, disc, i, j, allow_vacancy)
    return admissible


def _scan_pairs(matching: BeamMatching, t: int, candidate_count: int, allow_vacancy: bool):
    matched = sorted(unit[0] for unit in matching.unit_to_beam if unit[1] == t)
    for a_idx, c1 in enumerate(matched):
        for c2 in matched[a_idx + 1:]:
            yield (c1, t), (c2, t)
        if allow_vacancy:
            taken = set(matched)
            for c2 in range(candidate_count):
                if c2 not in taken:
                    yield (c1, t), (c2, t)


def phase2_swap(net: Network, alloc: Allocation, matching: BeamMatching,
                disc: np.ndarray, allow_vacancy: bool = False) -> list[SwapRecord]:
    """Execute admissible exchanges, first hit in (slot, unit, unit) order,
    until none remains among counter-eligible pairs.  Mutates the
    allocation's center and association rows in place."""
    ev = _Evaluator(net, alloc)
    log: list[SwapRecord] = []
    while True:
        executed = False
        for t in range(net.slot_count):
            for i, j in _scan_pairs(matching, t, net.candidate_count, allow_vacancy):
                if not matching.swap_allowed(i, j):
                    continue
                admissible, row, before, after = _screen_swap(ev, matching, disc, i, j, allow_vacancy)
                if not admissible:
                    continue
                if not after > before:  # the admission rule guarantees this
                    raise SolverError("executed exchange failed to raise total beam utility")
                record = SwapRecord(t, i, j, matching.beam_of(i), matching.beam_of(j), before, after)
                matching.exchange(i, j)
                matching.record_swap(i, j)
                ev.apply(t, row)
                log.append(record)
                executed = True
                break
            if executed:
                break
        if not executed:
            return log


def certify_stability(net: Network, alloc: Allocation, matching: BeamMatching,
                      disc: np.ndarray, allow_vacancy: bool = False):
    """Exhaustive post-run scan.  Returns (blocking, counter_excluded):
    pairs that would still swap, split by whether only counter saturation
    stops them.  A stable outcome has an empty first list."""
    ev = _Evaluator(net, alloc.copy())
    blocking: list[tuple[Unit, Unit]] = []
    excluded: list[tuple[Unit, Unit]] = []
    for t in range(net.slot_count):
        for i, j in _scan_pairs(matching, t, net.candidate_count, allow_vacancy):
            admissible, _, _, _ = _screen_swap(ev, matching, disc, i, j, allow_vacancy)
            if admissible:
                (excluded if not matching.swap_allowed(i, j) else blocking).append((i, j))
    return blocking, excluded


def run(net: Network, alloc: Allocation, disc: np.ndarray,
        allow_vacancy: bool = False, swap_cap: int = SWAP_CAP,
        certify: bool = True) -> tuple[Allocation, BdcResult]:
    """Full pointing pass over a fixed (b, p): deferred acceptance, then
    exchange search, then the stability scan.  Returns a new allocation
    with updated centers and refreshed association."""
    out = alloc.copy()
    scores = interference_free_scores(net, out, disc)
    matching, proposals = phase1_deferred_acceptance(scores, net.beam_count)
    matching.swap_cap = swap_cap
    out.center = matching.center_rows()
    for t in range(net.slot_count):
        out.assoc[t] = net.associate_slot(t, out.center[t])
    log = phase2_swap(net, out, matching, disc, allow_vacancy)
    for rec in log:
        if not rec.total_after > rec.total_before:
            raise SolverError("exchange log is not strictly increasing")
    blocking: list[tuple[Unit, Unit]] = []
    excluded: list[tuple[Unit, Unit]] = []
    if certify:
        blocking, excluded = certify_stability(net, out, matching, disc, allow_vacancy)
    _normalize_claims(net, out)
    return out, BdcResult(matching, log, proposals, blocking, excluded)


def _normalize_claims(net: Network, alloc: Allocation) -> None:
    """Re-pointing can put two holders of one subchannel into the same
    beam; the evaluator already grants it to the stronger channel, so
    rewrite the stored claims to match what is actually granted."""
    for t in range(net.slot_count):
        gain = net.gain_matrix(t, alloc.center[t])
        owner = net.build_owner(alloc.assoc[t], alloc.subs[t], gain)
        slot = np.zeros_like(alloc.subs[t])
        for q in range(net.beam_count):
            for k in range(net.radio.subchannel_count):
                n = owner[q, k]
                if n >= 0:
                    slot[k, n] = True
        alloc.subs[t] = slot
