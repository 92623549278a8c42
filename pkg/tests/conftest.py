"""Shared fixtures: synthetic networks with hand-set channels, and small
real scenario builds reused across test modules."""

from __future__ import annotations

from dataclasses import replace
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from leobeam.channel import ChannelTensor
from leobeam.netmodel import Network, RadioConfig
from leobeam.scenario import BuiltScenario, Scenario, build_network

settings.register_profile(
    "suite",
    derandomize=True,
    deadline=None,
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


def make_network(
    gain: np.ndarray,
    usable: np.ndarray | None = None,
    *,
    subchannel_count: int = 3,
    per_user_cap: int = 2,
    beam_power_cap: float = 10.0,
    satellite_power_cap: float | None = None,
    beams_per_satellite: int = 1,
    beam_bandwidth: float | None = None,
    noise: float = 1e-3,
    min_sinr: float = 0.0,
    fairness_alpha: float = 0.5,
) -> Network:
    """Network over a hand-set channel tensor gain[M, T, C, N]."""
    gain = np.asarray(gain, dtype=float)
    m, t, _, n = gain.shape
    if usable is None:
        usable = np.ones((m, t, n), dtype=bool)
    if satellite_power_cap is None:
        satellite_power_cap = beam_power_cap * beams_per_satellite
    if beam_bandwidth is None:
        beam_bandwidth = float(subchannel_count)   # unit bandwidth per subchannel
    tensor = ChannelTensor(gain=gain, usable=np.asarray(usable, dtype=bool),
                           noise_power=noise)
    radio = RadioConfig(
        beam_bandwidth=beam_bandwidth,
        subchannel_count=subchannel_count,
        per_user_cap=per_user_cap,
        beam_power_cap=beam_power_cap,
        satellite_power_cap=satellite_power_cap,
        min_elevation=0.0,
        min_sinr=min_sinr,
        fairness_alpha=fairness_alpha,
    )
    return Network(tensor, radio, beams_per_satellite)


def random_gain(rng: np.random.Generator, m: int, t: int, c: int, n: int,
                scale: float = 1.0) -> np.ndarray:
    """Positive, well-spread channel gains for synthetic instances."""
    return scale * rng.lognormal(mean=0.0, sigma=1.0, size=(m, t, c, n))


def desk_scenario(**overrides) -> Scenario:
    """Small real-geometry setup: 2 satellites x 2 beams, 12 candidates,
    3 slots, 10 users, 4 subchannels."""
    values = dict(
        period_s=3.0,
        serving_count=2,
        candidate_count=12,
        user_count=10,
        beams_per_satellite=2,
        subchannel_count=4,
        per_user_cap=2,
        record_timing=False,
        seeds=(1, 2, 3, 4, 5),
    )
    values.update(overrides)
    return replace(Scenario(), **values)


@lru_cache(maxsize=64)
def built_desk(seed: int = 1, **overrides) -> BuiltScenario:
    return build_network(desk_scenario(**overrides), seed)


@pytest.fixture(scope="session")
def desk_built() -> BuiltScenario:
    return built_desk(1)


@pytest.fixture(scope="session")
def tiny_built() -> BuiltScenario:
    from leobeam.oracle import tiny_scenario

    return build_network(tiny_scenario(), 1)


# One verdict line per acceptance criterion, shown after the test summary.
ACCEPTANCE_VERDICTS: list[tuple[int, str]] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_VERDICTS):
        terminalreporter.write_line(line)
