"""Pointing pass: service discs, interference-free scoring, deferred
acceptance, exchange admission and search, stability certification."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_network, random_gain
from leobeam import framework
from leobeam import beam_matching as bdc
from leobeam.beam_matching import BeamMatching
from leobeam.errors import SolverError
from leobeam.netmodel import Allocation, alpha_utility, check_feasibility, objective

EARTH = 6371e3


# ------------------------------------------------------------ oracles


def slot_contributions(net, center_rows, subs, power):
    """Per-beam delivered rate table contrib[q, t, n] with the association
    re-derived per slot, built from the evaluation primitives only."""
    T = net.slot_count
    assoc = np.full((T, net.user_count), -1, dtype=np.int64)
    contrib = np.zeros((net.beam_count, T, net.user_count))
    for t in range(T):
        assoc[t] = net.associate_slot(t, center_rows[t])
        _, owner, rates, _ = net.slot_tables(t, center_rows[t], assoc[t], subs[t], power[t])
        for q in range(net.beam_count):
            for k in range(net.radio.subchannel_count):
                n = owner[q, k]
                if n >= 0:
                    contrib[q, t, n] += rates[q, k]
    return assoc, contrib


def beam_totals(net, contrib):
    """Per-beam utility of each user's period total."""
    totals = contrib.sum(axis=1)
    vals = alpha_utility(totals, net.radio.fairness_alpha, net.radio.utility_floor)
    return np.asarray(vals).sum(axis=1)


def coord_utility(net, disc, assoc_t, contrib_t, c, beam):
    """Utility a coordinate earns for one beam in one slot: covered users
    the beam actually serves, each at its delivered-rate utility."""
    acc = 0.0
    for n in range(net.user_count):
        if disc[c, n] and assoc_t[n] == beam:
            acc += float(alpha_utility(contrib_t[beam, n], net.radio.fairness_alpha,
                                       net.radio.utility_floor))
    return acc


def crossed_instance(slots=1):
    """Two one-beam satellites, two users, one shared subchannel.

    Pointing beam 0 at coordinate 0 and beam 1 at coordinate 1 keeps both
    serving gains at 10 but leaks 4.0 of each signal onto the other beam's
    user; exchanging the coordinates keeps the serving gains and drops the
    leak to 1e-3, so the exchange helps every involved player at once.
    """
    g = np.zeros((2, slots, 2, 2))
    g[:, :] = 0.0
    for t in range(slots):
        g[0, t] = [[10.0, 4.0], [10.0, 1e-3]]
        g[1, t] = [[1e-3, 10.0], [4.0, 10.0]]
    net = make_network(g, subchannel_count=1, per_user_cap=1)
    alloc = Allocation.empty(slots, 2, 1, 2)
    alloc.subs[:, 0, :] = True
    alloc.power[:] = net.radio.beam_power_cap
    disc = np.ones((2, 2), dtype=bool)
    return net, alloc, disc


def set_centers(net, alloc, matching):
    alloc.center = matching.center_rows()
    for t in range(net.slot_count):
        alloc.assoc[t] = net.associate_slot(t, alloc.center[t])


# ------------------------------------------------------------ service discs


def test_service_disc_by_arc_distance():
    cand = np.array([[EARTH, 0.0, 0.0]])
    arcs_km = [50.0, 99.0, 101.0, 500.0]
    users = np.array([
        [EARTH * math.cos(a * 1e3 / EARTH), EARTH * math.sin(a * 1e3 / EARTH), 0.0]
        for a in arcs_km
    ])
    disc = bdc.service_discs(cand, users, 100e3, EARTH)
    assert disc.shape == (1, 4)
    assert disc.tolist() == [[True, True, False, False]]


def test_service_disc_matches_scalar_arccos():
    rng = np.random.default_rng(7)
    cand = rng.normal(size=(5, 3))
    users = rng.normal(size=(9, 3))
    disc = bdc.service_discs(cand, users, 0.8 * EARTH, EARTH)
    for i in range(5):
        cu = cand[i] / np.linalg.norm(cand[i])
        for j in range(9):
            uu = users[j] / np.linalg.norm(users[j])
            arc = EARTH * math.acos(max(-1.0, min(1.0, float(cu @ uu))))
            assert disc[i, j] == (arc <= 0.8 * EARTH)


# ------------------------------------------------------------ scoring


def greedy_widths_by_hand(snrs: dict[int, float], K: int, cap: int) -> dict[int, int]:
    """Strongest member first, up to its cap, until the K subchannels run out."""
    widths = {n: 0 for n in snrs}
    left = K
    for n in sorted(snrs, key=lambda n: (-snrs[n], n)):
        take = min(cap, left)
        widths[n] = take
        left -= take
        if left == 0:
            break
    return widths


def test_standalone_fill_widths_matches_hand_greedy():
    rng = np.random.default_rng(11)
    for _ in range(20):
        n = int(rng.integers(1, 6))
        snr = rng.uniform(0.0, 9.0, size=n)
        members = rng.random(n) < 0.7
        K = int(rng.integers(1, 7))
        cap = int(rng.integers(1, K + 1))
        got = bdc.standalone_fill_widths(snr, members, K, cap, 0.0)
        want = greedy_widths_by_hand(
            {i: float(snr[i]) for i in range(n) if members[i]}, K, cap)
        for i in range(n):
            assert got[i] == want.get(i, 0)


def test_standalone_fill_respects_min_sinr():
    snr = np.array([4.0, 0.5, 2.0])
    members = np.ones(3, dtype=bool)
    widths = bdc.standalone_fill_widths(snr, members, 4, 2, 1.0)
    assert widths.tolist() == [2.0, 0.0, 2.0]


def test_interference_free_scores_direct_summation():
    rng = np.random.default_rng(3)
    M, T, C, N = 2, 2, 3, 4
    g = random_gain(rng, M, T, C, N)
    usable = rng.random((M, T, N)) < 0.9
    net = make_network(g, usable, subchannel_count=3, per_user_cap=2)
    alloc = framework.initialize_allocation(net)
    alloc.power = rng.uniform(1.0, net.radio.beam_power_cap, size=(T, net.beam_count))
    disc = rng.random((C, N)) < 0.6
    radio = net.radio

    scores = bdc.interference_free_scores(net, alloc, disc)
    assert len(scores) == T
    for t in range(T):
        for c in range(C):
            for q in range(net.beam_count):
                m = net.sat_of_beam[q]
                snrs = {n: g[m, t, c, n] * (alloc.power[t, q] / radio.subchannel_count) / net.noise
                        for n in range(N) if disc[c, n] and usable[m, t, n]}
                widths = greedy_widths_by_hand(snrs, radio.subchannel_count,
                                               radio.per_user_cap)
                acc = 0.0
                for n, snr in snrs.items():
                    rate = widths[n] * radio.subchannel_bandwidth * math.log2(1.0 + snr)
                    acc += float(alpha_utility(rate, radio.fairness_alpha, radio.utility_floor))
                assert scores[t][c, q] == pytest.approx(acc, rel=1e-12, abs=1e-12)


def scores_by_hand(net, alloc, disc, t, c, q, members):
    radio = net.radio
    snrs = {n: float(net.tensor.gain[net.sat_of_beam[q], t, c, n]
                     * (alloc.power[t, q] / radio.subchannel_count) / net.noise)
            for n in members}
    widths = greedy_widths_by_hand(snrs, radio.subchannel_count, radio.per_user_cap)
    return sum(float(alpha_utility(widths[n] * radio.subchannel_bandwidth
                                   * math.log2(1.0 + snrs[n]),
                                   radio.fairness_alpha, radio.utility_floor))
               for n in snrs)


def test_scores_refresh_keeps_own_users_and_unserved_pool():
    # once an association exists, a beam is scored on its own users plus
    # anyone not holding a subchannel; users served by another beam drop out
    rng = np.random.default_rng(9)
    net = make_network(random_gain(rng, 2, 1, 2, 3), subchannel_count=3,
                       beams_per_satellite=1)
    alloc = framework.initialize_allocation(net)
    disc = np.ones((2, 3), dtype=bool)
    alloc.assoc[0] = [0, 0, 1]
    alloc.subs[0] = False
    alloc.subs[0, 0, 2] = True          # user 2 served by beam 1
    warm = bdc.interference_free_scores(net, alloc, disc)
    for c in range(2):
        assert warm[0][c, 0] == pytest.approx(
            scores_by_hand(net, alloc, disc, 0, c, 0, (0, 1)), rel=1e-12)

    alloc.subs[0, 0, 2] = False         # user 2 now unserved: both beams may court it
    pooled = bdc.interference_free_scores(net, alloc, disc)
    for c in range(2):
        assert pooled[0][c, 0] == pytest.approx(
            scores_by_hand(net, alloc, disc, 0, c, 0, (0, 1, 2)), rel=1e-12)
        assert pooled[0][c, 1] == pytest.approx(
            scores_by_hand(net, alloc, disc, 0, c, 1, (0, 1, 2)), rel=1e-12)


def test_scores_zero_without_power():
    rng = np.random.default_rng(4)
    net = make_network(random_gain(rng, 1, 1, 2, 2))
    alloc = framework.initialize_allocation(net)
    alloc.power[:] = 0.0
    scores = bdc.interference_free_scores(net, alloc, np.ones((2, 2), dtype=bool))
    assert np.all(scores[0] == 0.0)


# ------------------------------------------------------------ phase 1


def test_phase1_single_unit_matches():
    matching, proposals = bdc.phase1_deferred_acceptance([np.array([[5.0]])], 1)
    assert matching.beam_of((0, 0)) == 0
    assert proposals == 1
    assert matching.is_consistent()


def test_phase1_zero_score_stays_unmatched():
    matching, proposals = bdc.phase1_deferred_acceptance([np.array([[0.0]])], 1)
    assert matching.unit_to_beam == {}
    assert proposals == 0


def test_phase1_beam_keeps_best_per_slot():
    scores = [np.array([[3.0], [7.0]])]
    matching, proposals = bdc.phase1_deferred_acceptance(scores, 1)
    assert matching.beam_of((1, 0)) == 0
    assert matching.beam_of((0, 0)) == -1
    assert proposals == 2


def test_phase1_ties_break_low_index():
    # proposing side prefers the lower beam, holding side the lower unit
    matching, _ = bdc.phase1_deferred_acceptance([np.array([[1.0, 1.0]])], 2)
    assert matching.beam_of((0, 0)) == 0
    matching, _ = bdc.phase1_deferred_acceptance([np.array([[2.0], [2.0]])], 1)
    assert matching.beam_of((0, 0)) == 0
    assert matching.beam_of((1, 0)) == -1


def _prefers(score_row, a, b):
    return (-score_row[a], a) < (-score_row[b], b)


@given(st.integers(0, 10**9))
def test_phase1_matching_properties(seed):
    rng = np.random.default_rng(seed)
    C, Q, T = 3, 2, 2
    scores = []
    for _ in range(T):
        score = rng.uniform(0.0, 10.0, size=(C, Q))
        score[rng.random((C, Q)) < 0.25] = 0.0
        scores.append(score)
    matching, _ = bdc.phase1_deferred_acceptance(scores, Q)

    assert matching.is_consistent()
    for (c, t), q in matching.unit_to_beam.items():
        assert scores[t][c, q] > 0.0
    for q in range(Q):
        for t in range(T):
            holders = [u for u in matching.beam_to_units.get(q, ()) if u[1] == t]
            assert len(holders) <= 1

    # no unit can point to a beam it prefers whose holder it also beats
    for t in range(T):
        score = scores[t]
        for c in range(C):
            qc = matching.beam_of((c, t))
            for q in range(Q):
                if score[c, q] <= 0.0 or q == qc:
                    continue
                if qc >= 0 and not _prefers(score[c], q, qc):
                    continue
                held = matching.unit_at(q, t)
                assert held is not None
                hc = held[0]
                assert (score[hc, q], -hc) > (score[c, q], -c)


# ------------------------------------------------------------ exchange admission


def test_swap_rejects_cross_slot_and_self():
    net, alloc, disc = crossed_instance(slots=2)
    matching = BeamMatching(2, 2)
    matching.assign((0, 0), 0)
    matching.assign((1, 0), 1)
    matching.assign((0, 1), 0)
    matching.assign((1, 1), 1)
    set_centers(net, alloc, matching)
    assert not bdc.is_swap_blocking(net, alloc, matching, disc, (0, 0), (1, 1))
    assert not bdc.is_swap_blocking(net, alloc, matching, disc, (0, 0), (0, 0))


def test_swap_admission_matches_property_brute_force():
    net, alloc, disc = crossed_instance()
    matching = BeamMatching(2, 1)
    matching.assign((0, 0), 0)
    matching.assign((1, 0), 1)
    set_centers(net, alloc, matching)

    before_assoc, before = slot_contributions(net, alloc.center, alloc.subs, alloc.power)
    after_centers = np.array([[1, 0]])
    after_assoc, after = slot_contributions(net, after_centers, alloc.subs, alloc.power)
    util_before, util_after = beam_totals(net, before), beam_totals(net, after)

    # involved players: both coordinates and both beams, old pairing vs new
    old = [coord_utility(net, disc, before_assoc[0], before[:, 0, :], 0, 0),
           coord_utility(net, disc, before_assoc[0], before[:, 0, :], 1, 1),
           util_before[0], util_before[1]]
    new = [coord_utility(net, disc, after_assoc[0], after[:, 0, :], 0, 1),
           coord_utility(net, disc, after_assoc[0], after[:, 0, :], 1, 0),
           util_after[0], util_after[1]]
    none_worse = all(b >= a for a, b in zip(old, new))
    some_better = any(b > a for a, b in zip(old, new))
    rest_ok = True  # no uninvolved beams in a two-beam instance
    expected = none_worse and some_better and rest_ok

    assert expected  # the construction really is mutually beneficial
    assert bdc.is_swap_blocking(net, alloc, matching, disc, (0, 0), (1, 0)) == expected

    # from the exchanged state the reverse swap hurts everyone involved
    matching2 = BeamMatching(2, 1)
    matching2.assign((1, 0), 0)
    matching2.assign((0, 0), 1)
    alloc2 = alloc.copy()
    set_centers(net, alloc2, matching2)
    assert not bdc.is_swap_blocking(net, alloc2, matching2, disc, (0, 0), (1, 0))


# ------------------------------------------------------------ exchange search


def test_phase2_two_swaps_reach_brute_force_best():
    net, alloc, disc = crossed_instance(slots=2)
    matching = BeamMatching(2, 2)
    for t in range(2):
        matching.assign((0, t), 0)
        matching.assign((1, t), 1)
    set_centers(net, alloc, matching)
    _, start = slot_contributions(net, alloc.center, alloc.subs, alloc.power)
    start_total = beam_totals(net, start).sum()

    log = bdc.phase2_swap(net, alloc, matching, disc)

    assert len(log) == 2
    assert sorted(rec.slot for rec in log) == [0, 1]
    for rec in log:
        assert rec.total_after > rec.total_before
    assert log[1].total_before == pytest.approx(log[0].total_after, rel=1e-12)
    assert matching.is_consistent()
    assert np.array_equal(alloc.center, matching.center_rows())

    # brute force over the four reachable pointings, slot by slot
    totals = []
    for rows in ([[0, 1], [0, 1]], [[0, 1], [1, 0]], [[1, 0], [0, 1]], [[1, 0], [1, 0]]):
        _, contrib = slot_contributions(net, np.array(rows), alloc.subs, alloc.power)
        totals.append(beam_totals(net, contrib).sum())
    _, final = slot_contributions(net, alloc.center, alloc.subs, alloc.power)
    final_total = beam_totals(net, final).sum()
    assert final_total > start_total
    assert final_total == pytest.approx(max(totals), rel=1e-12)

    # fixpoint: nothing further to exchange, and the scan agrees
    assert bdc.phase2_swap(net, alloc, matching, disc) == []
    blocking, excluded = bdc.certify_stability(net, alloc, matching, disc)
    assert blocking == [] and excluded == []


def test_counter_saturation_cuts_off_pair():
    m = BeamMatching(2, 1)
    i, j = (0, 0), (1, 0)
    assert m.swap_allowed(i, j)
    m.record_swap(i, j)
    assert m.swap_allowed(i, j)  # one exchange spent of two
    m.record_swap(j, i)
    assert not m.swap_allowed(i, j)
    assert not m.swap_allowed(j, i)

    tight = BeamMatching(2, 1, swap_cap=1)
    tight.record_swap(i, j)
    assert not tight.swap_allowed(i, j)


# ------------------------------------------------------------ matching mechanics


def test_matching_assign_release_exchange():
    m = BeamMatching(2, 2)
    m.assign((0, 0), 0)
    m.assign((1, 1), 0)  # same beam, other slot
    m.assign((2, 0), 1)
    assert m.unit_at(0, 0) == (0, 0) and m.unit_at(0, 1) == (1, 1)
    with pytest.raises(SolverError):
        m.assign((3, 0), 0)  # beam 0 already holds a slot-0 unit
    m.exchange((0, 0), (2, 0))
    assert m.beam_of((0, 0)) == 1 and m.beam_of((2, 0)) == 0
    assert m.is_consistent()
    m.release((0, 0))
    assert m.beam_of((0, 0)) == -1
    rows = m.center_rows()
    assert rows.shape == (2, 2)
    assert rows[0, 0] == 2 and rows[0, 1] == -1
    assert rows[1, 0] == 1 and rows[1, 1] == -1


def test_exchange_with_vacancy_moves_unit():
    m = BeamMatching(2, 1)
    m.assign((0, 0), 0)
    m.exchange((0, 0), (1, 0))  # (1, 0) is unmatched
    assert m.beam_of((0, 0)) == -1
    assert m.beam_of((1, 0)) == 0
    assert m.is_consistent()


# ------------------------------------------------------------ full pass


def test_run_single_pair_matched_iff_worthwhile():
    dead = make_network(np.zeros((1, 1, 1, 1)), subchannel_count=1, per_user_cap=1)
    alloc = framework.initialize_allocation(dead)
    alloc.subs[0, 0, 0] = True
    out, res = bdc.run(dead, alloc, np.ones((1, 1), dtype=bool))
    assert out.center[0, 0] == -1 and res.swap_count == 0

    live = make_network(np.full((1, 1, 1, 1), 5.0), subchannel_count=1, per_user_cap=1)
    out, res = bdc.run(live, framework.initialize_allocation(live), np.ones((1, 1), dtype=bool))
    assert out.center[0, 0] == 0
    assert res.blocking_pairs == [] and res.counter_excluded == []


def test_run_desk_feasible_and_stable(desk_built):
    net, disc = desk_built.network, desk_built.disc
    alloc = framework.initialize_allocation(net)
    out, res = bdc.run(net, alloc, disc)

    assert check_feasibility(net, out) == []
    assert res.blocking_pairs == []
    assert res.counter_excluded == []
    assert res.matching.is_consistent()
    assert res.proposals >= len(res.matching.unit_to_beam)
    cap = res.matching.swap_cap
    assert res.swap_count <= cap * (net.candidate_count * net.slot_count) ** 2
    for prev, rec in zip(res.swap_log, res.swap_log[1:]):
        assert rec.total_before == pytest.approx(prev.total_after, rel=1e-12)
    for rec in res.swap_log:
        assert rec.total_after > rec.total_before
    assert objective(net, out) > 0.0


def test_run_is_pure_and_deterministic(desk_built):
    net, disc = desk_built.network, desk_built.disc
    alloc = framework.initialize_allocation(net)
    pristine = alloc.copy()
    out1, res1 = bdc.run(net, alloc, disc)
    assert alloc.same_decisions(pristine)
    assert np.array_equal(alloc.assoc, pristine.assoc)
    out2, res2 = bdc.run(net, alloc, disc)
    assert out1.same_decisions(out2)
    assert [r.total_after for r in res1.swap_log] == [r.total_after for r in res2.swap_log]


def test_rerun_on_own_output_stays_feasible(desk_built):
    net, disc = desk_built.network, desk_built.disc
    out1, _ = bdc.run(net, framework.initialize_allocation(net), disc)
    out2, res2 = bdc.run(net, out1, disc)
    assert check_feasibility(net, out2) == []
    assert res2.blocking_pairs == []


# ------------------------------------------------------------ claim cleanup


def test_normalization_grants_shared_subchannel_to_stronger():
    g = np.zeros((1, 1, 1, 2))
    g[0, 0, 0] = [5.0, 3.0]
    net = make_network(g, subchannel_count=1, per_user_cap=1)
    alloc = Allocation.empty(1, 1, 1, 2)
    alloc.center[0, 0] = 0
    alloc.subs[0, 0, :] = True  # both users claim the only subchannel
    alloc.power[0, 0] = net.radio.beam_power_cap
    alloc.assoc[0] = net.associate_slot(0, alloc.center[0])

    assert check_feasibility(net, alloc) != []
    before = objective(net, alloc, check=False)
    bdc._normalize_claims(net, alloc)
    assert check_feasibility(net, alloc) == []
    assert alloc.subs[0, 0].tolist() == [True, False]
    assert objective(net, alloc) == pytest.approx(before, rel=1e-12)
