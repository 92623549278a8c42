"""Numpy implementation of the per-slot rate kernel.

Reference implementation for the compiled extension; selected at import
time by leobeam.kernels when the extension is unavailable or disabled.
"""

import numpy as np


def slot_rates(gain, owner, power, noise, bandwidth, include_interference=True):
    """Rates and SINRs per (beam, subchannel) for one slot.

    gain[q, n]: channel gain from beam q (at its current pointing) to every
    user; owner[q, k]: user index holding subchannel k in beam q, -1 when
    unassigned; power[q]: beam power in watts, spread evenly over the
    subchannels.  Returns (rates[q, k] in bit/s, sinr[q, k] linear).
    """
    beam_count, sub_count = owner.shape
    per_sub = power / sub_count
    served = owner >= 0
    idx = np.where(served, owner, 0)
    rows = np.arange(beam_count)[:, None]
    signal = gain[rows, idx] * per_sub[:, None]

    interference = np.zeros_like(signal)
    if include_interference:
        active = served * per_sub[:, None]                       # [Q, K] power on k
        for q2 in range(beam_count):
            contrib = active[q2][None, :] * gain[q2][idx]        # at each owner
            contrib[q2, :] = 0.0
            interference += contrib

    sinr = np.where(served, signal / (interference + noise), 0.0)
    rates = np.where(served, bandwidth * np.log2(1.0 + sinr), 0.0)
    return rates, sinr
