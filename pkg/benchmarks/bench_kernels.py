#!/usr/bin/env python3
"""Timing comparison of the compiled and numpy rate kernels.

Runs both implementations on identical random slot instances and prints
per-call times plus the largest relative disagreement.  Package imports
pick the compiled kernel automatically when it is built; exporting
LEOBEAM_PURE_PYTHON=1 forces the numpy path.  This script loads both
modules directly so one invocation measures the pair.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from leobeam import _kernels_py
from leobeam.kernels import IMPLEMENTATION

try:
    from leobeam import _kernels
except ImportError:
    _kernels = None

# (beams, subchannels, users): desk scale up to a full constellation slot
SIZES = ((4, 4, 10), (8, 16, 50), (24, 32, 200), (64, 48, 500))
NOISE = 1e-12
BANDWIDTH = 2e8


def instances(rng: np.random.Generator, beams: int, subs: int, users: int,
              count: int) -> list:
    batch = []
    for _ in range(count):
        gain = rng.lognormal(sigma=1.5, size=(beams, users))
        owner = rng.integers(-1, users, size=(beams, subs)).astype(np.int64)
        power = rng.uniform(0.5, 10.0, size=beams)
        batch.append((gain, owner, power))
    return batch


def per_call_seconds(fn, batch: list, loops: int) -> float:
    fn(*batch[0], NOISE, BANDWIDTH, True)          # warm up
    best = np.inf
    for _ in range(3):
        start = time.perf_counter()
        for _ in range(loops):
            for gain, owner, power in batch:
                fn(gain, owner, power, NOISE, BANDWIDTH, True)
        best = min(best, (time.perf_counter() - start) / (loops * len(batch)))
    return best


def max_rel_diff(batch: list) -> float:
    worst = 0.0
    for gain, owner, power in batch:
        rates_c, sinr_c = _kernels.slot_rates(gain, owner, power, NOISE, BANDWIDTH, True)
        rates_p, sinr_p = _kernels_py.slot_rates(gain, owner, power, NOISE, BANDWIDTH, True)
        for a, b in ((rates_c, rates_p), (sinr_c, sinr_p)):
            scale = np.maximum(np.abs(b), 1.0)
            worst = max(worst, float(np.max(np.abs(a - b) / scale)))
    return worst


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--loops", type=int, default=30,
                        help="timing loops per batch (default: %(default)s)")
    parser.add_argument("--batch", type=int, default=20,
                        help="instances per size (default: %(default)s)")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    print(f"default kernel selection: {IMPLEMENTATION}")
    if _kernels is None:
        print("compiled extension not built; timing the numpy kernel only")

    rng = np.random.default_rng(args.seed)
    header = f"{'beams':>5} {'subs':>5} {'users':>5} {'numpy':>12} {'compiled':>12} {'speedup':>8} {'max rel diff':>13}"
    print(header)
    print("-" * len(header))
    for beams, subs, users in SIZES:
        batch = instances(rng, beams, subs, users, args.batch)
        numpy_s = per_call_seconds(_kernels_py.slot_rates, batch, args.loops)
        if _kernels is None:
            print(f"{beams:>5} {subs:>5} {users:>5} {numpy_s * 1e6:>10.1f} us {'-':>12} {'-':>8} {'-':>13}")
            continue
        compiled_s = per_call_seconds(_kernels.slot_rates, batch, args.loops)
        diff = max_rel_diff(batch)
        print(f"{beams:>5} {subs:>5} {users:>5} {numpy_s * 1e6:>10.1f} us "
              f"{compiled_s * 1e6:>9.1f} us {numpy_s / compiled_s:>7.1f}x {diff:>13.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
