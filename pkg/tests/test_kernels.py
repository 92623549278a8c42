"""Rate-kernel semantics and numpy/compiled parity."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from leobeam import _kernels_py, kernels


def rand_instance(seed: int, q: int = 3, k: int = 4, n: int = 6):
    rng = np.random.default_rng(seed)
    gain = rng.lognormal(sigma=1.5, size=(q, n))
    owner = rng.integers(-1, n, size=(q, k)).astype(np.int64)
    power = rng.uniform(0.5, 10.0, size=q)
    return gain, owner, power


def test_two_beam_interference_hand_case():
    """Two beams sharing the single subchannel: every term is written out
    by hand."""
    g = np.array([[2.0, 0.5],
                  [0.3, 4.0]])
    owner = np.array([[0], [1]], dtype=np.int64)
    power = np.array([6.0, 8.0])
    noise = 0.01
    bandwidth = 5.0
    rates, sinr = kernels.slot_rates(g, owner, power, noise, bandwidth)
    # beam 0 serves user 0: signal 2.0*6, interference from beam 1 at user 0
    expected00 = (2.0 * 6.0) / (0.3 * 8.0 + noise)
    expected11 = (4.0 * 8.0) / (0.5 * 6.0 + noise)
    assert sinr[0, 0] == pytest.approx(expected00, rel=1e-12)
    assert sinr[1, 0] == pytest.approx(expected11, rel=1e-12)
    assert rates[0, 0] == pytest.approx(bandwidth * math.log2(1 + expected00), rel=1e-12)
    assert rates[1, 0] == pytest.approx(bandwidth * math.log2(1 + expected11), rel=1e-12)


def test_power_split_across_subchannels():
    g = np.array([[1.0]])
    owner = np.array([[0, 0, -1, -1]], dtype=np.int64)
    power = np.array([8.0])
    rates, sinr = kernels.slot_rates(g, owner, power, 1.0, 2.0)
    # 8 W over 4 subchannels -> 2 W per subchannel
    assert sinr[0, 0] == pytest.approx(2.0, rel=1e-12)
    assert sinr[0, 1] == pytest.approx(2.0, rel=1e-12)
    assert np.all(sinr[0, 2:] == 0.0)
    assert np.all(rates[0, 2:] == 0.0)


def test_unassigned_subchannels_are_silent():
    gain, owner, power = rand_instance(0)
    owner[:] = -1
    rates, sinr = kernels.slot_rates(gain, owner, power, 1e-3, 1.0)
    assert not rates.any()
    assert not sinr.any()


def test_interference_toggle():
    gain, owner, power = rand_instance(1)
    with_i, sinr_i = kernels.slot_rates(gain, owner, power, 1e-3, 1.0, True)
    without, sinr_f = kernels.slot_rates(gain, owner, power, 1e-3, 1.0, False)
    assert np.all(sinr_f >= sinr_i)
    served = owner >= 0
    # interference-free sinr has the closed form signal/noise
    per_sub = power[:, None] / owner.shape[1]
    idx = np.where(served, owner, 0)
    rows = np.arange(owner.shape[0])[:, None]
    expected = np.where(served, gain[rows, idx] * per_sub / 1e-3, 0.0)
    np.testing.assert_allclose(sinr_f, expected, rtol=1e-12)
    assert np.all(without[served] >= with_i[served])


def test_self_interference_excluded():
    # one beam, two subchannels, two users: no cross-beam terms exist, so
    # interference must be exactly zero even though the beam is active
    g = np.array([[1.0, 2.0]])
    owner = np.array([[0, 1]], dtype=np.int64)
    _, sinr = kernels.slot_rates(g, owner, np.array([4.0]), 0.5, 1.0)
    np.testing.assert_allclose(sinr[0], [1.0 * 2.0 / 0.5, 2.0 * 2.0 / 0.5], rtol=1e-12)


@pytest.mark.skipif(kernels.IMPLEMENTATION != "cython",
                    reason="compiled kernel not built")
@pytest.mark.parametrize("seed", range(10))
def test_compiled_matches_numpy(seed):
    gain, owner, power = rand_instance(seed, q=4, k=5, n=7)
    for flag in (True, False):
        r_c, s_c = kernels.slot_rates(gain, owner, np.ascontiguousarray(power),
                                      1e-4, 3.0, flag)
        r_p, s_p = _kernels_py.slot_rates(gain, owner, power, 1e-4, 3.0, flag)
        np.testing.assert_allclose(r_c, r_p, rtol=1e-12, atol=1e-300)
        np.testing.assert_allclose(s_c, s_p, rtol=1e-12, atol=1e-300)


@given(st.integers(0, 10_000))
def test_rates_finite_nonnegative(seed):
    gain, owner, power = rand_instance(seed)
    rates, sinr = kernels.slot_rates(gain, owner, power, 1e-3, 1.0)
    assert np.all(np.isfinite(rates))
    assert np.all(rates >= 0.0)
    assert np.all(sinr >= 0.0)
    assert np.array_equal(rates > 0, owner >= 0)   # lognormal gains never vanish


@given(st.integers(0, 10_000))
def test_more_interferer_power_never_helps(seed):
    gain, owner, power = rand_instance(seed)
    owner[0, 0] = 1   # make sure beam 0 serves someone
    _, sinr_lo = kernels.slot_rates(gain, owner, power, 1e-3, 1.0)
    boosted = power.copy()
    boosted[1] *= 2.0
    _, sinr_hi = kernels.slot_rates(gain, owner, boosted, 1e-3, 1.0)
    assert sinr_hi[0, 0] <= sinr_lo[0, 0] + 1e-15
