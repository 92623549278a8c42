"""Subchannel assignment: per-beam matching, then cross-beam negotiation.

Phase 1 treats each beam alone and runs deferred acceptance between
(subchannel, slot) units and the beam's associated users, capped at the
per-user holding limit.  Phase 2 works slot by slot: wherever two beams
reuse a subchannel and the interference hitting the victim's holder is
above a threshold, one side gives the subchannel up, chosen so the total
utility over assigned units does not drop.  Removed subchannels are not
re-offered within the pass.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import SolverError
from .kernels import slot_rates
from .netmodel import Allocation, Network, alpha_utility

NEGOTIATION_CAP = 2


@dataclass(frozen=True)
class RemovalRecord:
    slot: int
    beam: int
    subchannel: int
    user: int
    total_before: float
    total_after: float


@dataclass
class SaResult:
    removal_log: list[RemovalRecord]

    @property
    def removal_count(self) -> int:
        return len(self.removal_log)


def _rate_table(net: Network, gain: np.ndarray, owner_t: np.ndarray, power_row: np.ndarray):
    return slot_rates(gain, owner_t, np.ascontiguousarray(power_row, dtype=float),
                      net.noise, net.radio.subchannel_bandwidth)


def total_unit_utility(net: Network, gain: np.ndarray, owner_t: np.ndarray,
                       power_row: np.ndarray) -> float:
    """Sum of the fairness utility over every assigned (beam, subchannel)
    pair in the slot, interference included."""
    rates, _ = _rate_table(net, gain, owner_t, power_row)
    assigned = owner_t >= 0
    if not assigned.any():
        return 0.0
    radio = net.radio
    vals = alpha_utility(rates[assigned], radio.fairness_alpha, radio.utility_floor)
    return float(np.sum(vals))


def unit_utility(net: Network, alloc: Allocation, subchannel: int, t: int, user: int,
                 interference_free: bool = True) -> float:
    """Utility the (subchannel, slot) unit earns with `user` under the
    user's serving beam; zero when the user is unserved."""
    q = alloc.assoc[t, user]
    if q < 0:
        return 0.0
    gain = net.gain_matrix(t, alloc.center[t])
    per_sub = alloc.power[t, q] / net.radio.subchannel_count
    if interference_free:
        denom = net.noise
    else:
        owner_t = net.build_owner(alloc.assoc[t], alloc.subs[t], gain)
        inter = 0.0
        for q2 in range(net.beam_count):
            if q2 != q and owner_t[q2, subchannel] >= 0:
                inter += gain[q2, user] * alloc.power[t, q2] / net.radio.subchannel_count
        denom = inter + net.noise
    rate = net.radio.subchannel_bandwidth * float(np.log2(1.0 + gain[q, user] * per_sub / denom))
    return alpha_utility(rate, net.radio.fairness_alpha, net.radio.utility_floor)


def user_utility(net: Network, alloc: Allocation, user: int, units: list[tuple[int, int]],
                 interference_free: bool = True) -> float:
    """Utility of the user's combined rate over the given (subchannel,
    slot) units."""
    total = 0.0
    for k, t in units:
        q = alloc.assoc[t, user]
        if q < 0:
            continue
        gain = net.gain_matrix(t, alloc.center[t])
        per_sub = alloc.power[t, q] / net.radio.subchannel_count
        if interference_free:
            denom = net.noise
        else:
            owner_t = net.build_owner(alloc.assoc[t], alloc.subs[t], gain)
            inter = sum(
                gain[q2, user] * alloc.power[t, q2] / net.radio.subchannel_count
                for q2 in range(net.beam_count)
                if q2 != q and owner_t[q2, k] >= 0
            )
            denom = inter + net.noise
        total += net.radio.subchannel_bandwidth * float(np.log2(1.0 + gain[q, user] * per_sub / denom))
    return alpha_utility(total, net.radio.fairness_alpha, net.radio.utility_floor)


def single_beam_matching(net: Network, alloc: Allocation, beam: int, t: int,
                         gain: np.ndarray | None = None) -> np.ndarray:
    """Owner row for one beam and slot: deferred acceptance between the
    beam's subchannels and its associated users, no interference.

    All subchannels of a beam carry the same link quality here, so units
    share one preference list (stronger user first) and a user ranks units
    by index; each user keeps at most the per-slot cap.
    """
    radio = net.radio
    K = radio.subchannel_count
    row = np.full(K, -1, dtype=np.int64)
    users = np.flatnonzero(alloc.assoc[t] == beam)
    if users.size == 0:
        return row
    if gain is None:
        gain = net.gain_matrix(t, alloc.center[t])
    snr = gain[beam, users] * (alloc.power[t, beam] / K) / net.noise
    if radio.min_sinr > 0.0:
        users = users[snr >= radio.min_sinr]
        snr = snr[snr >= radio.min_sinr]
        if users.size == 0:
            return row
    order = np.lexsort((users, -snr))  # strongest first, index breaks ties
    ranked = users[order]
    held: dict[int, list[int]] = {int(n): [] for n in ranked}
    cursor = np.zeros(K, dtype=np.int64)
    free = deque(range(K))
    while free:
        k = free.popleft()
        while cursor[k] < ranked.size:
            n = int(ranked[cursor[k]])
            cursor[k] += 1
            units = held[n]
            if len(units) < radio.per_user_cap:
                units.append(k)
                break
            worst = max(units)
            if k < worst:  # user prefers the lower-indexed unit
                units.remove(worst)
                units.append(k)
                free.append(worst)
                break
    for n, units in held.items():
        for k in units:
            row[k] = n
    return row


def build_slot_owner(net: Network, alloc: Allocation, t: int,
                     gain: np.ndarray | None = None) -> np.ndarray:
    if gain is None:
        gain = net.gain_matrix(t, alloc.center[t])
    owner_t = np.full((net.beam_count, net.radio.subchannel_count), -1, dtype=np.int64)
    for q in range(net.beam_count):
        owner_t[q] = single_beam_matching(net, alloc, q, t, gain)
    return owner_t


def _removal_deltas(net: Network, gain, owner_t, power_row, k: int, q_first: int, q_second: int):
    """Total-utility change from dropping subchannel k on either side of
    the ordered pair; first entry removes it from the second beam."""
    base = total_unit_utility(net, gain, owner_t, power_row)
    deltas = []
    for q in (q_second, q_first):
        trial = owner_t.copy()
        trial[q, k] = -1
        deltas.append(total_unit_utility(net, gain, trial, power_row) - base)
    return base, deltas[0], deltas[1]


def find_interfering_pairs(net: Network, alloc: Allocation, t: int,
                           interference_threshold: float | None = None,
                           owner_t: np.ndarray | None = None,
                           gain: np.ndarray | None = None,
                           counters: np.ndarray | None = None,
                           negotiation_cap: int = NEGOTIATION_CAP) -> list[tuple[int, int, int]]:
    """Ordered triples (victim beam, interfering beam, subchannel) where
    the victim's holder is in the interferer's footprint, the received
    interference clears the threshold, and dropping the subchannel on one
    side strictly raises the slot's total unit utility."""
    thr = net.noise if interference_threshold is None else interference_threshold
    if gain is None:
        gain = net.gain_matrix(t, alloc.center[t])
    if owner_t is None:
        owner_t = net.build_owner(alloc.assoc[t], alloc.subs[t], gain)
    power_row = alloc.power[t]
    K = net.radio.subchannel_count
    triples = []
    for q1 in range(net.beam_count):
        for q2 in range(net.beam_count):
            if q1 == q2:
                continue
            for k in range(K):
                if owner_t[q1, k] < 0 or owner_t[q2, k] < 0:
                    continue
                if counters is not None and counters[q1, k] + counters[q2, k] >= negotiation_cap:
                    continue
                victim = owner_t[q1, k]
                if not net.tensor.usable[net.sat_of_beam[q2], t, victim]:
                    continue
                if gain[q2, victim] * power_row[q2] / K < thr:
                    continue
                _, d_second, d_first = _removal_deltas(net, gain, owner_t, power_row, k, q1, q2)
                if d_second > 0.0 or d_first > 0.0:
                    triples.append((q1, q2, k))
    return triples


def _best_holder_utility(net: Network, gain, owner_t, power_row, alloc, t, beam, k):
    """Strongest candidate user of the beam for unit (k, t) and its
    utility, interference from current co-channel beams included."""
    users = np.flatnonzero(alloc.assoc[t] == beam)
    if users.size == 0:
        return -1, 0.0
    K = net.radio.subchannel_count
    inter = np.zeros(users.size)
    for q2 in range(net.beam_count):
        if q2 != beam and owner_t[q2, k] >= 0:
            inter += gain[q2, users] * power_row[q2] / K
    sinr = gain[beam, users] * (power_row[beam] / K) / (inter + net.noise)
    rates = net.radio.subchannel_bandwidth * np.log2(1.0 + sinr)
    utils = np.asarray(alpha_utility(rates, net.radio.fairness_alpha, net.radio.utility_floor))
    best = int(np.argmax(utils))  # argmax takes the lowest index on ties
    return int(users[best]), float(utils[best])


def negotiate(net: Network, alloc: Allocation, t: int,
              owner_t: np.ndarray | None = None,
              interference_threshold: float | None = None,
              negotiation_cap: int = NEGOTIATION_CAP,
              log: list[RemovalRecord] | None = None) -> np.ndarray:
    """Resolve subchannel reuse conflicts for one slot by removals.

    The side that gives up the subchannel is the one whose best candidate
    values it least, unless that direction would lower the slot total, in
    which case the other (strictly improving) direction executes.
    """
    gain = net.gain_matrix(t, alloc.center[t])
    if owner_t is None:
        owner_t = net.build_owner(alloc.assoc[t], alloc.subs[t], gain)
    counters = np.zeros((net.beam_count, net.radio.subchannel_count), dtype=np.int64)
    power_row = alloc.power[t]
    while True:
        triples = find_interfering_pairs(
            net, alloc, t, interference_threshold, owner_t, gain, counters, negotiation_cap
        )
        if not triples:
            return owner_t
        q1, q2, k = triples[0]
        base, d_second, d_first = _removal_deltas(net, gain, owner_t, power_row, k, q1, q2)
        _, phi1 = _best_holder_utility(net, gain, owner_t, power_row, alloc, t, q1, k)
        _, phi2 = _best_holder_utility(net, gain, owner_t, power_row, alloc, t, q2, k)
        loser = q1 if phi1 <= phi2 else q2
        delta = d_first if loser == q1 else d_second
        if delta < 0.0:
            loser = q2 if loser == q1 else q1
            delta = d_second if loser == q2 else d_first
        if delta < 0.0:
            raise SolverError("negotiation found no non-worsening removal direction")
        removed_user = int(owner_t[loser, k])
        owner_t[loser, k] = -1
        counters[loser, k] += 1
        if log is not None:
            log.append(RemovalRecord(t, loser, k, removed_user, base, base + delta))


def run_all_beams(net: Network, alloc: Allocation,
                  interference_threshold: float | None = None,
                  negotiation_cap: int = NEGOTIATION_CAP) -> tuple[Allocation, SaResult]:
    """Rebuild the subchannel assignment for every beam and slot from the
    current association, then run the per-slot negotiations.  Returns a
    new allocation; centers, association, and power are untouched."""
    out = alloc.copy()
    log: list[RemovalRecord] = []
    for t in range(net.slot_count):
        gain = net.gain_matrix(t, out.center[t])
        owner_t = build_slot_owner(net, out, t, gain)
        owner_t = negotiate(net, out, t, owner_t, interference_threshold, negotiation_cap, log)
        out.subs[t][:] = False
        for q in range(net.beam_count):
            for k in range(net.radio.subchannel_count):
                n = owner_t[q, k]
                if n >= 0:
                    out.subs[t, k, n] = True
    for rec in log:
        if rec.total_after < rec.total_before:
            raise SolverError("negotiation log shows a worsening removal")
    return out, SaResult(log)
