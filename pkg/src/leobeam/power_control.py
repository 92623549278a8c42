"""Beam power allocation by successive concave approximation.

With pointing and subchannels fixed, each round linearizes the rate of
every active link around the current power vector: log2(1+g) is bounded
below by a line in log2(g) that touches at the current SINR, and powers
move to log space so the bounded rate is concave.  The surrogate splits
the fairness utility per (user, slot, beam) contribution, which makes the
rounds separable by slot; each slot then solves a small concave program
over its live beams with a log-barrier Newton method.  A new power vector
is only accepted when the true planning objective does not drop, so the
reported objective series is non-decreasing by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SolverError
from .netmodel import Allocation, Network, alpha_utility, evaluate_allocation

LN2 = math.log(2.0)

# caps are approached, never touched, inside the log-domain solver
_INTERIOR = 0.999


@dataclass(frozen=True)
class SolverConfig:
    convergence_threshold: float = 1e-3   # absolute change of the true objective
    max_sca_iterations: int = 50
    newton_tolerance: float = 1e-9        # Newton decrement squared over two
    max_newton_iterations: int = 80
    barrier_start: float = 1.0
    barrier_multiplier: float = 20.0
    barrier_gap: float = 1e-6             # residual constraint gap in utility units

    def __post_init__(self):
        if self.convergence_threshold <= 0 or self.max_sca_iterations < 1:
            raise ValueError("convergence settings must be positive")
        if min(self.newton_tolerance, self.barrier_start,
               self.barrier_multiplier, self.barrier_gap) <= 0:
            raise ValueError("solver tolerances must be positive")


@dataclass
class SlotLinks:
    """Compiled per-slot link structure for the surrogate problem.

    Variables are the slot's live beams (holding at least one assigned
    subchannel with positive gain).  Each link is one (beam, subchannel)
    assignment; `cross_gain[l, v]` is the per-subchannel gain from
    variable beam v into link l's user, zeroed on the serving beam and on
    beams silent on that subchannel.
    """

    slot: int
    var_beams: np.ndarray        # [V] beam indices
    sat_of_var: np.ndarray       # [V]
    link_var: np.ndarray         # [L] serving variable index per link
    own_gain: np.ndarray         # [L] per-subchannel serving gain (h / K)
    cross_gain: np.ndarray       # [L, V] per-subchannel interfering gain
    group_of_link: np.ndarray    # [L] (beam, user) bucket per link
    group_count: int

    @property
    def var_count(self) -> int:
        return len(self.var_beams)

    @property
    def link_count(self) -> int:
        return len(self.link_var)


@dataclass
class ScaCoefficients:
    gamma_tilde: np.ndarray
    slope: np.ndarray            # multiplies log2 of the SINR
    offset: np.ndarray

    def __post_init__(self):
        if np.any(self.gamma_tilde <= 0.0):
            raise ValueError("expansion SINRs must be positive")


@dataclass
class ScaRunRecord:
    objective_series: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    rejected_steps: int = 0
    reverted: bool = False
    newton_iterations: int = 0
    f_input: float = 0.0
    f_output: float = 0.0


def compute_coefficients(gamma_tilde: np.ndarray) -> ScaCoefficients:
    """Tangent coefficients making slope*log2(g) + offset touch log2(1+g)
    at the expansion SINR and lie below it everywhere else."""
    g = np.asarray(gamma_tilde, dtype=float)
    slope = g / (1.0 + g)
    offset = np.log2(1.0 + g) - slope * np.log2(g)
    return ScaCoefficients(g, slope, offset)


def compile_slot(net: Network, alloc: Allocation, t: int) -> SlotLinks | None:
    """Collect the slot's active links; None when nothing transmits."""
    gain = net.gain_matrix(t, alloc.center[t])
    owner = net.build_owner(alloc.assoc[t], alloc.subs[t], gain)
    K = net.radio.subchannel_count
    has_link = np.array([
        any(owner[q, k] >= 0 and gain[q, owner[q, k]] > 0.0 for k in range(K))
        for q in range(net.beam_count)
    ])
    var_beams = np.flatnonzero(has_link)
    if var_beams.size == 0:
        return None
    var_index = {int(q): v for v, q in enumerate(var_beams)}
    link_var, own, owners, subch = [], [], [], []
    for q in var_beams:
        for k in range(K):
            n = owner[q, k]
            if n >= 0 and gain[q, n] > 0.0:
                link_var.append(var_index[int(q)])
                own.append(gain[q, n] / K)
                owners.append(int(n))
                subch.append(k)
    L, V = len(link_var), var_beams.size
    cross = np.zeros((L, V))
    for l in range(L):
        n, k = owners[l], subch[l]
        for v, q2 in enumerate(var_beams):
            if v != link_var[l] and owner[q2, k] >= 0:
                cross[l, v] = gain[q2, n] / K
    groups: dict[tuple[int, int], int] = {}
    group_of_link = np.empty(L, dtype=np.int64)
    for l in range(L):
        key = (link_var[l], owners[l])
        group_of_link[l] = groups.setdefault(key, len(groups))
    return SlotLinks(
        slot=t,
        var_beams=var_beams.astype(np.int64),
        sat_of_var=net.sat_of_beam[var_beams],
        link_var=np.asarray(link_var, dtype=np.int64),
        own_gain=np.asarray(own),
        cross_gain=cross,
        group_of_link=group_of_link,
        group_count=len(groups),
    )


def link_sinr(links: SlotLinks, power: np.ndarray, noise: float) -> np.ndarray:
    """True per-link SINR at the given live-beam powers."""
    p = np.asarray(power, dtype=float)
    interference = links.cross_gain @ p
    return links.own_gain * p[links.link_var] / (interference + noise)


def approx_rate(links: SlotLinks, coeff: ScaCoefficients, p_hat: np.ndarray,
                noise: float, bandwidth: float) -> np.ndarray:
    """Per-link surrogate rate at log-powers p_hat; concave, touches the
    true rate at the expansion point and never exceeds it."""
    u = np.exp(p_hat)
    s = links.cross_gain @ u + noise
    log_gamma = np.log(links.own_gain) + p_hat[links.link_var] - np.log(s)
    return bandwidth * (coeff.slope * log_gamma / LN2 + coeff.offset)


def _utility_derivatives(x: np.ndarray, alpha: float):
    if alpha == 0.0:
        return x.copy(), np.ones_like(x), np.zeros_like(x)
    if alpha == 1.0:
        return np.log(x), 1.0 / x, -1.0 / (x * x)
    val = x ** (1.0 - alpha) / (1.0 - alpha)
    d1 = x ** (-alpha)
    d2 = -alpha * x ** (-alpha - 1.0)
    return val, d1, d2


def _surrogate(links: SlotLinks, coeff: ScaCoefficients, p_hat: np.ndarray,
               noise: float, bandwidth: float, alpha: float, want_hessian: bool):
    """Surrogate slot utility with analytic derivatives in log-power.

    Returns (value, grad, hess); value is -inf outside the domain where
    every (beam, user) surrogate rate sum stays positive (needed for the
    fractional-power utility), which backtracking treats as a rejection.
    """
    V = links.var_count
    u = np.exp(p_hat)
    s = links.cross_gain @ u + noise
    log_gamma = np.log(links.own_gain) + p_hat[links.link_var] - np.log(s)
    rate = bandwidth * (coeff.slope * log_gamma / LN2 + coeff.offset)
    x = np.bincount(links.group_of_link, weights=rate, minlength=links.group_count)
    if alpha > 0.0 and np.any(x <= 0.0):
        return -np.inf, None, None
    val, d1, d2 = _utility_derivatives(x, alpha)

    a = bandwidth * coeff.slope / LN2                      # [L]
    w = links.cross_gain * u[None, :] / s[:, None]         # [L, V]
    # per-link rate gradient rows: a * (e_serving - w)
    grad_x = np.zeros((links.group_count, V))
    np.add.at(grad_x, (links.group_of_link, links.link_var), a)
    np.subtract.at(grad_x, links.group_of_link, a[:, None] * w)
    grad = grad_x.T @ d1

    if not want_hessian:
        return float(val.sum()), grad, None
    hess = (grad_x.T * d2) @ grad_x
    coef = d1[links.group_of_link] * a                     # [L]
    cw = coef[:, None] * w
    hess -= np.diag(cw.sum(axis=0))
    hess += w.T @ cw
    return float(val.sum()), grad, hess


def approx_objective(links: SlotLinks, coeff: ScaCoefficients, p_hat: np.ndarray,
                     noise: float, bandwidth: float, alpha: float):
    """Surrogate slot utility and gradient in log-power space."""
    val, grad, _ = _surrogate(links, coeff, p_hat, noise, bandwidth, alpha, False)
    return val, grad


def _barrier(links: SlotLinks, p_hat: np.ndarray, beam_cap: float, sat_cap: float,
             want_hessian: bool):
    """Sum of -log slacks for the per-beam and per-satellite power caps."""
    V = links.var_count
    u = np.exp(p_hat)
    val = 0.0
    grad = np.zeros(V)
    hess = np.zeros((V, V)) if want_hessian else None
    slack_beam = beam_cap - u
    if np.any(slack_beam <= 0.0):
        return np.inf, None, None
    val -= float(np.log(slack_beam).sum())
    grad += u / slack_beam
    if want_hessian:
        hess += np.diag(u / slack_beam + (u / slack_beam) ** 2)
    for m in np.unique(links.sat_of_var):
        members = links.sat_of_var == m
        slack = sat_cap - u[members].sum()
        if slack <= 0.0:
            return np.inf, None, None
        val -= math.log(slack)
        g = np.where(members, u, 0.0)
        grad += g / slack
        if want_hessian:
            hess += np.diag(g) / slack + np.outer(g, g) / (slack * slack)
    return val, grad, hess


def _constraint_count(links: SlotLinks) -> int:
    return links.var_count + len(np.unique(links.sat_of_var))


def solve_concave_subproblem(links: SlotLinks, coeff: ScaCoefficients,
                             p_start: np.ndarray, net: Network,
                             config: SolverConfig) -> tuple[np.ndarray, int]:
    """Maximize the slot surrogate over the power caps via a log-barrier
    path with damped Newton steps.  Returns (powers, newton iterations)."""
    radio = net.radio
    noise, bw, alpha = net.noise, radio.subchannel_bandwidth, radio.fairness_alpha
    p_hat = np.log(p_start)

    def merit(tau, ph, want_hessian):
        sval, sgrad, shess = _surrogate(links, coeff, ph, noise, bw, alpha, want_hessian)
        if not np.isfinite(sval):
            return np.inf, None, None
        bval, bgrad, bhess = _barrier(links, ph, radio.beam_power_cap,
                                      radio.satellite_power_cap, want_hessian)
        if not np.isfinite(bval):
            return np.inf, None, None
        f = -tau * sval + bval
        g = -tau * sgrad + bgrad
        h = None if not want_hessian else -tau * shess + bhess
        return f, g, h

    total_newton = 0
    m = _constraint_count(links)
    tau = config.barrier_start
    while True:
        for _ in range(config.max_newton_iterations):
            f, g, h = merit(tau, p_hat, True)
            if not np.isfinite(f):
                raise SolverError(f"slot {links.slot}: barrier start left the interior")
            try:
                step = np.linalg.solve(h, -g)
            except np.linalg.LinAlgError:
                h = h + np.eye(links.var_count) * (1e-10 * (1.0 + np.trace(h) / links.var_count))
                step = np.linalg.solve(h, -g)
            decrement = float(-g @ step)
            total_newton += 1
            if decrement / 2.0 <= config.newton_tolerance * (1.0 + abs(f)):
                break
            scale = 1.0
            slope = float(g @ step)
            while scale > 2.0 ** -45:
                trial, _, _ = merit(tau, p_hat + scale * step, False)
                if np.isfinite(trial) and trial <= f + 0.25 * scale * slope:
                    break
                scale *= 0.5
            else:
                break  # no admissible step left; stage is as solved as it gets
            p_hat = p_hat + scale * step
        if m / tau <= config.barrier_gap:
            return np.exp(p_hat), total_newton
        tau *= config.barrier_multiplier


def strictly_feasible_start(power_row: np.ndarray, links: SlotLinks, net: Network) -> np.ndarray:
    """Warm start for the slot's live beams: reuse the incoming powers,
    revive silent live beams at the even split, and pull everything
    strictly inside the caps."""
    radio = net.radio
    even = min(radio.beam_power_cap, radio.satellite_power_cap / net.beams_per_satellite)
    p = power_row[links.var_beams].astype(float).copy()
    p[p <= 0.0] = even
    p = np.minimum(p, _INTERIOR * radio.beam_power_cap)
    for m in np.unique(links.sat_of_var):
        members = links.sat_of_var == m
        total = p[members].sum()
        limit = _INTERIOR * radio.satellite_power_cap
        if total > limit:
            p[members] *= limit / total
    return p


def true_objective(net: Network, alloc: Allocation, power: np.ndarray) -> float:
    trial = alloc.copy()
    trial.power = power
    return evaluate_allocation(net, trial).objective


def run_sca(net: Network, alloc: Allocation, config: SolverConfig | None = None
            ) -> tuple[Allocation, ScaRunRecord]:
    """Iterate surrogate rounds until the true objective stalls.

    Every round re-expands at the accepted powers, solves each slot's
    subproblem, and keeps the result only if the true objective does not
    decrease.  If the whole pass somehow ends below the incoming
    objective, the incoming powers are returned untouched.
    """
    config = config or SolverConfig()
    record = ScaRunRecord()
    record.f_input = true_objective(net, alloc, alloc.power)

    slots = [compile_slot(net, alloc, t) for t in range(net.slot_count)]
    power = np.zeros_like(alloc.power)
    for links in slots:
        if links is not None:
            power[links.slot, links.var_beams] = strictly_feasible_start(
                alloc.power[links.slot], links, net)

    f_prev = true_objective(net, alloc, power)
    record.objective_series.append(f_prev)
    for _ in range(config.max_sca_iterations):
        record.iterations += 1
        trial = power.copy()
        for links in slots:
            if links is None:
                continue
            p_row = power[links.slot, links.var_beams]
            gamma = link_sinr(links, p_row, net.noise)
            keep = gamma > 0.0
            if not keep.any():
                continue
            sub = links if keep.all() else _mask_links(links, keep)
            coeff = compute_coefficients(link_sinr(sub, p_row, net.noise))
            solved, steps = solve_concave_subproblem(sub, coeff, p_row, net, config)
            record.newton_iterations += steps
            trial[links.slot, links.var_beams] = solved
        f_new = true_objective(net, alloc, trial)
        if f_new < f_prev:
            record.rejected_steps += 1
            record.converged = True
            break
        power = trial
        record.objective_series.append(f_new)
        if abs(f_new - f_prev) <= config.convergence_threshold:
            f_prev = f_new
            record.converged = True
            break
        f_prev = f_new

    out = alloc.copy()
    out.power = power
    record.f_output = f_prev
    if record.f_output < record.f_input:
        out.power = alloc.power.copy()
        record.f_output = record.f_input
        record.reverted = True
    return out, record


def _mask_links(links: SlotLinks, keep: np.ndarray) -> SlotLinks:
    """Drop zero-SINR links (they cannot carry a log-space expansion)."""
    groups: dict[int, int] = {}
    old_groups = links.group_of_link[keep]
    remap = np.array([groups.setdefault(int(g), len(groups)) for g in old_groups],
                     dtype=np.int64)
    return SlotLinks(
        slot=links.slot,
        var_beams=links.var_beams,
        sat_of_var=links.sat_of_var,
        link_var=links.link_var[keep],
        own_gain=links.own_gain[keep],
        cross_gain=links.cross_gain[keep],
        group_of_link=remap,
        group_count=len(groups),
    )
