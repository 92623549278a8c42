"""Decision variables and every quantity derived from them.

Holds the allocation triple (beam centers, subchannel assignment, beam
power) plus the derived user association, and computes interference,
SINR, rates, the fairness utility, the planning objective, constraint
checks, and reported metrics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelTensor
from .errors import ConfigurationError, InfeasibleAllocationError
from .kernels import slot_rates

_FEAS_TOL = 1e-9


@dataclass(frozen=True)
class RadioConfig:
    beam_bandwidth: float           # total bandwidth per beam [Hz]
    subchannel_count: int
    per_user_cap: int               # max subchannels per user per slot
    beam_power_cap: float           # [W]
    satellite_power_cap: float      # [W]
    min_elevation: float            # [rad]
    min_sinr: float = 0.0           # linear ratio; 0 disables the floor
    fairness_alpha: float = 0.5
    utility_floor: float = 1.0      # [bit/s], only used at alpha = 1
    reference_power: float | None = None  # association probe power [W]

    def __post_init__(self):
        if self.subchannel_count < 1:
            raise ConfigurationError("subchannel_count must be >= 1")
        if not 1 <= self.per_user_cap <= self.subchannel_count:
            raise ConfigurationError("per_user_cap must lie in [1, subchannel_count]")
        if self.beam_power_cap <= 0 or self.satellite_power_cap <= 0:
            raise ConfigurationError("power caps must be positive")
        if not 0.0 <= self.fairness_alpha <= 1.0:
            raise ConfigurationError("fairness_alpha must lie in [0, 1]")

    @property
    def subchannel_bandwidth(self) -> float:
        return self.beam_bandwidth / self.subchannel_count

    @property
    def probe_power(self) -> float:
        if self.reference_power is not None:
            return self.reference_power
        return self.beam_power_cap / self.subchannel_count


@dataclass
class Allocation:
    """center[t, q]: candidate index or -1; subs[t, k, n]: user n holds
    subchannel k at slot t; power[t, q] watts; assoc[t, n]: serving beam
    or -1 (derived from center via the association rule)."""

    center: np.ndarray
    subs: np.ndarray
    power: np.ndarray
    assoc: np.ndarray

    @classmethod
    def empty(cls, slot_count: int, beam_count: int, subchannel_count: int, user_count: int) -> "Allocation":
        return cls(
            center=np.full((slot_count, beam_count), -1, dtype=np.int64),
            subs=np.zeros((slot_count, subchannel_count, user_count), dtype=bool),
            power=np.zeros((slot_count, beam_count)),
            assoc=np.full((slot_count, user_count), -1, dtype=np.int64),
        )

    def copy(self) -> "Allocation":
        return Allocation(self.center.copy(), self.subs.copy(), self.power.copy(), self.assoc.copy())

    def same_decisions(self, other: "Allocation") -> bool:
        return (
            np.array_equal(self.center, other.center)
            and np.array_equal(self.subs, other.subs)
            and np.array_equal(self.power, other.power)
        )


class Network:
    """Immutable per-scenario context: channel tensor, radio parameters,
    and the beam-to-satellite map (beams are numbered satellite-major)."""

    def __init__(self, tensor: ChannelTensor, radio: RadioConfig, beams_per_satellite: int):
        self.tensor = tensor
        self.radio = radio
        self.beams_per_satellite = beams_per_satellite
        self.satellite_count = tensor.gain.shape[0]
        self.beam_count = self.satellite_count * beams_per_satellite
        self.sat_of_beam = np.repeat(np.arange(self.satellite_count), beams_per_satellite)
        self.slot_count = tensor.slot_count
        self.user_count = tensor.user_count
        self.candidate_count = tensor.gain.shape[2]
        self.noise = tensor.noise_power

    def gain_matrix(self, t: int, center_row: np.ndarray) -> np.ndarray:
        """gain[q, n] from each beam at its configured center; zero rows for
        beams without a center."""
        g = np.zeros((self.beam_count, self.user_count))
        for q in range(self.beam_count):
            c = center_row[q]
            if c >= 0:
                g[q] = self.tensor.gain[self.sat_of_beam[q], t, c]
        return g

    def eligibility(self, t: int) -> np.ndarray:
        """usable[q, n]: beam q's satellite clears the elevation floor at n."""
        return self.tensor.usable[self.sat_of_beam, t, :]

    def associate_slot(self, t: int, center_row: np.ndarray, gain: np.ndarray | None = None) -> np.ndarray:
        """Each user picks the eligible beam with the strongest probe signal;
        ties go to the lowest beam index, no eligible beam means -1."""
        if gain is None:
            gain = self.gain_matrix(t, center_row)
        eligible = (center_row >= 0)[:, None] & self.eligibility(t)
        score = np.where(eligible, gain * self.radio.probe_power, -1.0)
        assoc = score.argmax(axis=0).astype(np.int64)
        assoc[score.max(axis=0) < 0.0] = -1
        return assoc

    def build_owner(self, assoc_row: np.ndarray, subs_slot: np.ndarray, gain: np.ndarray) -> np.ndarray:
        """owner[q, k] from association + subchannel holdings.

        When two users of one beam hold the same subchannel (possible while
        the association is in flux between phases) the stronger channel
        keeps it, ties to the lower user index; the loser's rate is zero.
        """
        owner = np.full((self.beam_count, self.radio.subchannel_count), -1, dtype=np.int64)
        for n in range(self.user_count):
            q = assoc_row[n]
            if q < 0:
                continue
            for k in np.flatnonzero(subs_slot[:, n]):
                cur = owner[q, k]
                if cur < 0 or gain[q, n] > gain[q, cur]:
                    owner[q, k] = n
        return owner

    def slot_tables(self, t: int, center_row, assoc_row, subs_slot, power_row,
                    include_interference: bool = True):
        """(gain, owner, rates, sinr) for one slot under the given decisions."""
        gain = self.gain_matrix(t, center_row)
        owner = self.build_owner(assoc_row, subs_slot, gain)
        rates, sinr = slot_rates(
            gain, owner, np.ascontiguousarray(power_row, dtype=float),
            self.noise, self.radio.subchannel_bandwidth, include_interference,
        )
        return gain, owner, rates, sinr


@dataclass
class Evaluation:
    """Everything derived from one allocation in one pass."""

    owner: np.ndarray               # [T, Q, K]
    rates: np.ndarray               # [T, Q, K] bit/s
    sinr: np.ndarray                # [T, Q, K]
    contrib: np.ndarray             # [Q, T, N] per-beam per-user slot rate
    user_totals: np.ndarray         # [N] period-total rate
    objective: float


def alpha_utility(x, alpha: float, utility_floor: float = 1.0):
    """Fairness utility of a rate total; linear at alpha 0, concave power
    in between, logarithmic (with a floor to stay finite) at alpha 1."""
    if not 0.0 <= alpha <= 1.0:
        raise ConfigurationError("alpha must lie in [0, 1]")
    arr = np.asarray(x, dtype=float)
    if alpha == 1.0:
        out = np.log(np.maximum(arr, utility_floor))
    elif alpha == 0.0:
        out = arr.copy() if arr.ndim else arr
    else:
        out = arr ** (1.0 - alpha) / (1.0 - alpha)
    return float(out) if np.ndim(out) == 0 else out


def evaluate_allocation(net: Network, alloc: Allocation) -> Evaluation:
    T, Q, K, N = net.slot_count, net.beam_count, net.radio.subchannel_count, net.user_count
    owner = np.full((T, Q, K), -1, dtype=np.int64)
    rates = np.zeros((T, Q, K))
    sinr = np.zeros((T, Q, K))
    contrib = np.zeros((Q, T, N))
    for t in range(T):
        _, owner[t], rates[t], sinr[t] = net.slot_tables(
            t, alloc.center[t], alloc.assoc[t], alloc.subs[t], alloc.power[t]
        )
        for q in range(Q):
            for k in range(K):
                n = owner[t, q, k]
                if n >= 0:
                    contrib[q, t, n] += rates[t, q, k]
    user_totals = contrib.sum(axis=(0, 1))
    objective = float(
        np.sum(alpha_utility(user_totals, net.radio.fairness_alpha, net.radio.utility_floor))
    )
    return Evaluation(owner, rates, sinr, contrib, user_totals, objective)


def interference(net: Network, alloc: Allocation, user: int, subchannel: int, t: int) -> float:
    """Received co-subchannel power at `user` from every other active beam."""
    serving = alloc.assoc[t, user]
    gain = net.gain_matrix(t, alloc.center[t])
    owner = net.build_owner(alloc.assoc[t], alloc.subs[t], gain)
    total = 0.0
    for q in range(net.beam_count):
        if q == serving:
            continue
        n2 = owner[q, subchannel]
        if n2 >= 0 and n2 != user:
            total += gain[q, user] * alloc.power[t, q] / net.radio.subchannel_count
    return total


def sinr(net: Network, alloc: Allocation, user: int, subchannel: int, t: int) -> float:
    """SINR of `user` on `subchannel`; zero when the user is not served there."""
    q = alloc.assoc[t, user]
    if q < 0 or not alloc.subs[t, subchannel, user]:
        return 0.0
    gain = net.gain_matrix(t, alloc.center[t])
    owner = net.build_owner(alloc.assoc[t], alloc.subs[t], gain)
    if owner[q, subchannel] != user:
        return 0.0
    signal = gain[q, user] * alloc.power[t, q] / net.radio.subchannel_count
    return signal / (interference(net, alloc, user, subchannel, t) + net.noise)


def subchannel_rate(net: Network, alloc: Allocation, user: int, subchannel: int, t: int) -> float:
    return net.radio.subchannel_bandwidth * float(np.log2(1.0 + sinr(net, alloc, user, subchannel, t)))


def user_rate(net: Network, alloc: Allocation, user: int, t: int) -> float:
    return sum(
        subchannel_rate(net, alloc, user, k, t) for k in range(net.radio.subchannel_count)
    )


def check_feasibility(net: Network, alloc: Allocation) -> list[str]:
    """All constraint families; returns human-readable violations, empty if
    the allocation is feasible."""
    violations: list[str] = []
    T, Q, K = net.slot_count, net.beam_count, net.radio.subchannel_count
    radio = net.radio
    for t in range(T):
        active = alloc.center[t][alloc.center[t] >= 0]
        if len(set(active.tolist())) != active.size:
            violations.append(f"slot {t}: candidate pointed at by more than one beam")
        counts = alloc.subs[t].sum(axis=0)
        for n in np.flatnonzero(counts > radio.per_user_cap):
            violations.append(f"slot {t}: user {n} holds {counts[n]} subchannels, cap {radio.per_user_cap}")
        # subchannel reuse inside one beam, counted over associated users
        for q in range(Q):
            users_q = np.flatnonzero(alloc.assoc[t] == q)
            if users_q.size == 0:
                continue
            per_sub = alloc.subs[t][:, users_q].sum(axis=1)
            for k in np.flatnonzero(per_sub > 1):
                violations.append(f"slot {t}: beam {q} subchannel {k} assigned to {per_sub[k]} of its users")
        for q in np.flatnonzero(alloc.power[t] < -_FEAS_TOL):
            violations.append(f"slot {t}: beam {q} has negative power {alloc.power[t, q]:.3e}")
        for q in np.flatnonzero(alloc.power[t] > radio.beam_power_cap * (1.0 + _FEAS_TOL) + _FEAS_TOL):
            violations.append(f"slot {t}: beam {q} power {alloc.power[t, q]:.6g} W over beam cap")
        for m in range(net.satellite_count):
            total = alloc.power[t][net.sat_of_beam == m].sum()
            if total > radio.satellite_power_cap * (1.0 + _FEAS_TOL) + _FEAS_TOL:
                violations.append(f"slot {t}: satellite {m} power {total:.6g} W over satellite cap")
        usable = net.eligibility(t)
        for n in range(net.user_count):
            q = alloc.assoc[t, n]
            if q >= 0 and not usable[q, n]:
                violations.append(f"slot {t}: user {n} associated to beam {q} below the elevation floor")
    if radio.min_sinr > 0.0:
        ev = evaluate_allocation(net, alloc)
        bad = (ev.owner >= 0) & (ev.sinr < radio.min_sinr * (1.0 - _FEAS_TOL))
        for t, q, k in zip(*np.nonzero(bad)):
            violations.append(f"slot {t}: beam {q} subchannel {k} below the SINR floor")
    return violations


def objective(net: Network, alloc: Allocation, check: bool = True) -> float:
    """Sum over users of the fairness utility of period-total rate."""
    if check:
        violations = check_feasibility(net, alloc)
        if violations:
            raise InfeasibleAllocationError(violations)
    return evaluate_allocation(net, alloc).objective


def jain_index(values) -> float:
    """Jain fairness of a non-negative vector; the all-zero vector counts
    as perfectly uniform (index 1)."""
    arr = np.asarray(values, dtype=float)
    square_sum = float(np.sum(arr * arr))
    if square_sum == 0.0:
        return 1.0
    s = float(arr.sum())
    return s * s / (arr.size * square_sum)


@dataclass(frozen=True)
class MetricsReport:
    sum_rate_bps: float             # mean over slots of the network sum rate
    served_users: int               # users with positive period-total rate
    sum_alpha_utility: float
    jfi_rate: float
    jfi_utility: float


def metrics(net: Network, alloc: Allocation, evaluation: Evaluation | None = None) -> MetricsReport:
    ev = evaluation if evaluation is not None else evaluate_allocation(net, alloc)
    totals = ev.user_totals
    utilities = alpha_utility(totals, net.radio.fairness_alpha, net.radio.utility_floor)
    return MetricsReport(
        sum_rate_bps=float(totals.sum() / net.slot_count),
        served_users=int(np.count_nonzero(totals > 0.0)),
        sum_alpha_utility=ev.objective,
        jfi_rate=jain_index(totals),
        jfi_utility=jain_index(np.asarray(utilities)),
    )
