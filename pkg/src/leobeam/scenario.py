"""Scenario files, scenario building, and results emission.

A scenario is a flat INI document; every key has a default, so an empty
file is the stock setup.  Loading validates everything it can and reports
all problems at once.  The canonical form of a scenario (fixed section
and key order, normalized value formatting) is what gets hashed for
provenance and re-emitted next to results, so load -> save -> load is a
fixpoint.
"""

from __future__ import annotations

import configparser
import hashlib
import math
import os
from dataclasses import dataclass, fields, replace

import numpy as np

from . import beam_matching
from .channel import (
    AntennaModel,
    AtmosphereModel,
    build_channel_tensor,
    default_half_power_angle,
    noise_power,
)
from .errors import ScenarioError
from .geometry import (
    EARTH_RADIUS,
    GeodeticCoord,
    TargetArea,
    WalkerConfig,
    generate_candidates,
    generate_users,
    propagate_walker,
    select_serving_satellites,
)
from .netmodel import Network, RadioConfig

_DISTRIBUTIONS = ("uniform", "single_cluster", "five_clusters")


@dataclass(frozen=True)
class Scenario:
    # [constellation]
    altitude_km: float = 780.0
    inclination_deg: float = 45.0
    plane_count: int = 16
    sats_per_plane: int = 30
    phasing_factor: int = 1
    period_s: float = 100.0
    slot_s: float = 1.0
    epoch_offset_s: float = 540.0
    serving_count: int = 2
    min_elevation_deg: float = 25.0
    # [area]
    center_lat_deg: float = 41.7642
    center_lon_deg: float = 86.6513
    radius_km: float = 250.0
    candidate_count: int = 200
    service_radius_km: float = 100.0
    # [users]
    user_count: int = 50
    distribution: str = "uniform"
    cluster_radius_km: float = 100.0
    # [radio]
    beams_per_satellite: int = 3
    subchannel_count: int = 20
    per_user_cap: int = 6
    beam_bandwidth_mhz: float = 400.0
    carrier_ghz: float = 20.0
    aperture_m: float = 0.5
    aperture_efficiency: float = 0.65
    rx_gain_dbi: float = 39.7
    noise_temperature_k: float = 150.0
    beam_power_w: float = 200.0
    satellite_power_w: float = 1200.0
    rician_factor: float = 0.95
    cloud_attenuation: float = 0.1
    rain_attenuation: float = 0.058
    min_sinr: float = 0.0
    fairness_alpha: float = 0.5
    utility_floor: float = 1.0
    fast_fading: bool = False
    # [algorithm]
    max_outer_iterations: int = 10
    outer_tolerance: float = 1e-3
    swap_cap: int = 2
    negotiation_cap: int = 2
    allow_vacancy_swaps: bool = False
    interference_threshold_w: float | None = None
    sca_tolerance: float = 1e-3
    sca_max_iterations: int = 50
    record_timing: bool = True
    # [sweep]
    sweep_beams: tuple[int, ...] = ()
    sweep_subchannels: tuple[int, ...] = ()
    sweep_user_caps: tuple[int, ...] = ()
    sweep_distributions: tuple[str, ...] = ()
    # [seeds]
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)

    @property
    def slot_count(self) -> int:
        return int(round(self.period_s / self.slot_s))


def _parse_int(raw: str) -> int:
    return int(raw.strip())


def _parse_float(raw: str) -> float:
    return float(raw.strip())


def _parse_bool(raw: str) -> bool:
    value = raw.strip().lower()
    if value in ("true", "yes", "on", "1"):
        return True
    if value in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_str(raw: str) -> str:
    return raw.strip()


def _parse_auto_float(raw: str) -> float | None:
    value = raw.strip().lower()
    if value in ("auto", "none", ""):
        return None
    return float(raw)


def _parse_int_list(raw: str) -> tuple[int, ...]:
    raw = raw.strip()
    if not raw:
        return ()
    return tuple(int(part.strip()) for part in raw.split(","))


def _parse_str_list(raw: str) -> tuple[str, ...]:
    raw = raw.strip()
    if not raw:
        return ()
    return tuple(part.strip() for part in raw.split(","))


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "auto"
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


# field -> (section, parser, unit/remark for the emitted file)
_SCHEMA: dict[str, tuple[str, object, str]] = {
    "altitude_km": ("constellation", _parse_float, "orbital altitude [km]"),
    "inclination_deg": ("constellation", _parse_float, "[deg]"),
    "plane_count": ("constellation", _parse_int, "orbital planes"),
    "sats_per_plane": ("constellation", _parse_int, ""),
    "phasing_factor": ("constellation", _parse_int, "inter-plane phase step"),
    "period_s": ("constellation", _parse_float, "configuration period [s]"),
    "slot_s": ("constellation", _parse_float, "slot length [s]"),
    "epoch_offset_s": ("constellation", _parse_float, "propagation start time [s]"),
    "serving_count": ("constellation", _parse_int, "satellites serving the area"),
    "min_elevation_deg": ("constellation", _parse_float, "visibility floor [deg]"),
    "center_lat_deg": ("area", _parse_float, "[deg]"),
    "center_lon_deg": ("area", _parse_float, "[deg]"),
    "radius_km": ("area", _parse_float, "target area radius [km]"),
    "candidate_count": ("area", _parse_int, "beam center candidates"),
    "service_radius_km": ("area", _parse_float, "beam service disc radius [km]"),
    "user_count": ("users", _parse_int, ""),
    "distribution": ("users", _parse_str, "uniform | single_cluster | five_clusters"),
    "cluster_radius_km": ("users", _parse_float, "[km]"),
    "beams_per_satellite": ("radio", _parse_int, ""),
    "subchannel_count": ("radio", _parse_int, "per beam"),
    "per_user_cap": ("radio", _parse_int, "max subchannels per user per slot"),
    "beam_bandwidth_mhz": ("radio", _parse_float, "[MHz]"),
    "carrier_ghz": ("radio", _parse_float, "[GHz]"),
    "aperture_m": ("radio", _parse_float, "tx antenna diameter [m]"),
    "aperture_efficiency": ("radio", _parse_float, ""),
    "rx_gain_dbi": ("radio", _parse_float, "[dBi]"),
    "noise_temperature_k": ("radio", _parse_float, "[K]"),
    "beam_power_w": ("radio", _parse_float, "[W]"),
    "satellite_power_w": ("radio", _parse_float, "[W]"),
    "rician_factor": ("radio", _parse_float, "deterministic fading factor"),
    "cloud_attenuation": ("radio", _parse_float, "attenuation coefficient"),
    "rain_attenuation": ("radio", _parse_float, "attenuation coefficient"),
    "min_sinr": ("radio", _parse_float, "linear SINR floor, 0 disables"),
    "fairness_alpha": ("radio", _parse_float, "utility exponent in [0, 1]"),
    "utility_floor": ("radio", _parse_float, "[bit/s], used at alpha = 1"),
    "fast_fading": ("radio", _parse_bool, "random per-slot fading draws"),
    "max_outer_iterations": ("algorithm", _parse_int, ""),
    "outer_tolerance": ("algorithm", _parse_float, "relative objective change"),
    "swap_cap": ("algorithm", _parse_int, "exchange budget per unit pair"),
    "negotiation_cap": ("algorithm", _parse_int, "removal budget per beam pair"),
    "allow_vacancy_swaps": ("algorithm", _parse_bool, ""),
    "interference_threshold_w": ("algorithm", _parse_auto_float, "[W], auto = noise power"),
    "sca_tolerance": ("algorithm", _parse_float, "absolute utility change"),
    "sca_max_iterations": ("algorithm", _parse_int, ""),
    "record_timing": ("algorithm", _parse_bool, "false for byte-stable outputs"),
    "sweep_beams": ("sweep", _parse_int_list, "beams_per_satellite values"),
    "sweep_subchannels": ("sweep", _parse_int_list, "subchannel_count values"),
    "sweep_user_caps": ("sweep", _parse_int_list, "per_user_cap values"),
    "sweep_distributions": ("sweep", _parse_str_list, ""),
    "seeds": ("seeds", _parse_int_list, ""),
}

_SECTIONS = ("constellation", "area", "users", "radio", "algorithm", "sweep", "seeds")


def validate_scenario(sc: Scenario) -> list[str]:
    """Every problem found, empty when the scenario is usable."""
    p: list[str] = []
    if sc.altitude_km <= 0:
        p.append("constellation.altitude_km must be positive")
    if sc.plane_count < 1 or sc.sats_per_plane < 1:
        p.append("constellation.plane_count and sats_per_plane must be >= 1")
    if not 0 <= sc.phasing_factor < max(sc.plane_count, 1):
        p.append("constellation.phasing_factor must lie in [0, plane_count)")
    if sc.period_s <= 0 or sc.slot_s <= 0:
        p.append("constellation.period_s and slot_s must be positive")
    elif abs(sc.period_s / sc.slot_s - round(sc.period_s / sc.slot_s)) > 1e-9 or sc.slot_count < 1:
        p.append("constellation.period_s must be a positive whole number of slot_s")
    if sc.serving_count < 1:
        p.append("constellation.serving_count must be >= 1")
    elif sc.serving_count > sc.plane_count * sc.sats_per_plane:
        p.append("constellation.serving_count exceeds the constellation size")
    if not 0 <= sc.min_elevation_deg < 90:
        p.append("constellation.min_elevation_deg must lie in [0, 90)")
    if abs(sc.center_lat_deg) > 90:
        p.append("area.center_lat_deg must lie in [-90, 90]")
    if not -180 <= sc.center_lon_deg < 360:
        p.append("area.center_lon_deg must lie in [-180, 360)")
    if sc.radius_km <= 0:
        p.append("area.radius_km must be positive")
    if sc.candidate_count < 1:
        p.append("area.candidate_count must be >= 1")
    if sc.service_radius_km <= 0:
        p.append("area.service_radius_km must be positive")
    if sc.user_count < 0:
        p.append("users.user_count must be >= 0")
    if sc.distribution not in _DISTRIBUTIONS:
        p.append(f"users.distribution must be one of {', '.join(_DISTRIBUTIONS)}")
    if sc.cluster_radius_km <= 0:
        p.append("users.cluster_radius_km must be positive")
    if sc.beams_per_satellite < 1:
        p.append("radio.beams_per_satellite must be >= 1")
    if sc.subchannel_count < 1:
        p.append("radio.subchannel_count must be >= 1")
    if not 1 <= sc.per_user_cap <= sc.subchannel_count:
        p.append(
            f"radio.per_user_cap (= {sc.per_user_cap}) must lie in "
            f"[1, radio.subchannel_count (= {sc.subchannel_count})]"
        )
    if sc.beam_bandwidth_mhz <= 0 or sc.carrier_ghz <= 0:
        p.append("radio.beam_bandwidth_mhz and carrier_ghz must be positive")
    if sc.aperture_m <= 0:
        p.append("radio.aperture_m must be positive")
    if not 0 < sc.aperture_efficiency <= 1:
        p.append("radio.aperture_efficiency must lie in (0, 1]")
    if sc.noise_temperature_k <= 0:
        p.append("radio.noise_temperature_k must be positive")
    if sc.beam_power_w <= 0 or sc.satellite_power_w <= 0:
        p.append("radio.beam_power_w and satellite_power_w must be positive")
    if not 0 < sc.rician_factor <= 1:
        p.append("radio.rician_factor must lie in (0, 1]")
    if sc.cloud_attenuation < 0 or sc.rain_attenuation < 0:
        p.append("radio.cloud_attenuation and rain_attenuation must be >= 0")
    if sc.min_sinr < 0:
        p.append("radio.min_sinr must be >= 0")
    if not 0 <= sc.fairness_alpha <= 1:
        p.append("radio.fairness_alpha must lie in [0, 1]")
    if sc.utility_floor <= 0:
        p.append("radio.utility_floor must be positive")
    if sc.max_outer_iterations < 1:
        p.append("algorithm.max_outer_iterations must be >= 1")
    if sc.outer_tolerance <= 0:
        p.append("algorithm.outer_tolerance must be positive")
    if sc.swap_cap < 1 or sc.negotiation_cap < 1:
        p.append("algorithm.swap_cap and negotiation_cap must be >= 1")
    if sc.interference_threshold_w is not None and sc.interference_threshold_w <= 0:
        p.append("algorithm.interference_threshold_w must be positive or auto")
    if sc.sca_tolerance <= 0 or sc.sca_max_iterations < 1:
        p.append("algorithm.sca_tolerance and sca_max_iterations must be positive")
    for name, values in (
        ("sweep.sweep_beams", sc.sweep_beams),
        ("sweep.sweep_subchannels", sc.sweep_subchannels),
        ("sweep.sweep_user_caps", sc.sweep_user_caps),
    ):
        if any(v < 1 for v in values):
            p.append(f"{name} entries must be >= 1")
    if any(v > sc.subchannel_count for v in sc.sweep_user_caps):
        p.append("sweep.sweep_user_caps entries must not exceed radio.subchannel_count")
    if any(d not in _DISTRIBUTIONS for d in sc.sweep_distributions):
        p.append(f"sweep.sweep_distributions entries must be one of {', '.join(_DISTRIBUTIONS)}")
    if not sc.seeds:
        p.append("seeds.seeds must not be empty")
    if any(s < 0 for s in sc.seeds):
        p.append("seeds.seeds must be non-negative")
    return p


def parse_scenario(text: str) -> Scenario:
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",),
                                   inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ScenarioError([f"parse error: {exc}"]) from exc
    by_key = {(section, field): field for field, (section, _, _) in _SCHEMA.items()}
    problems: list[str] = []
    values: dict[str, object] = {}
    for section in cp.sections():
        if section not in _SECTIONS:
            problems.append(f"unknown section [{section}]")
            continue
        for key, raw in cp.items(section):
            field = by_key.get((section, key))
            if field is None:
                problems.append(f"unknown key {section}.{key}")
                continue
            parser = _SCHEMA[field][1]
            try:
                values[field] = parser(raw)
            except ValueError:
                problems.append(f"{section}.{key}: cannot parse value {raw!r}")
    if problems:
        raise ScenarioError(problems)
    sc = replace(Scenario(), **values)
    problems = validate_scenario(sc)
    if problems:
        raise ScenarioError(problems)
    return sc


def load_scenario(path: str) -> Scenario:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ScenarioError([f"cannot read scenario file {path}: {exc}"]) from exc
    return parse_scenario(text)


def canonical_text(sc: Scenario) -> str:
    lines: list[str] = []
    for section in _SECTIONS:
        lines.append(f"[{section}]")
        for f in fields(Scenario):
            sec, _, remark = _SCHEMA[f.name]
            if sec != section:
                continue
            key = f"{f.name} = {_fmt(getattr(sc, f.name))}"
            lines.append(f"{key:<44}# {remark}" if remark else key)
        lines.append("")
    return "\n".join(lines)


def scenario_hash(sc: Scenario) -> str:
    return hashlib.sha256(canonical_text(sc).encode("utf-8")).hexdigest()[:16]


def save_scenario(sc: Scenario, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_text(sc))


@dataclass
class BuiltScenario:
    scenario: Scenario
    seed: int
    network: Network
    disc: np.ndarray                # [C, N] service-disc membership
    user_xyz: np.ndarray
    candidate_xyz: np.ndarray
    satellite_positions: np.ndarray  # serving satellites only, [M, T, 3]
    serving: list[int]
    scenario_hash: str


def build_network(sc: Scenario, seed: int) -> BuiltScenario:
    problems = validate_scenario(sc)
    if problems:
        raise ScenarioError(problems)
    area = TargetArea(
        GeodeticCoord(math.radians(sc.center_lat_deg),
                      math.radians((sc.center_lon_deg + 180.0) % 360.0 - 180.0)),
        sc.radius_km * 1e3,
    )
    walker = WalkerConfig(
        altitude=sc.altitude_km * 1e3,
        inclination=math.radians(sc.inclination_deg),
        plane_count=sc.plane_count,
        sats_per_plane=sc.sats_per_plane,
        phasing_factor=sc.phasing_factor,
        epoch=sc.epoch_offset_s,
    )
    positions = propagate_walker(walker, sc.slot_count, sc.slot_s)
    min_elev = math.radians(sc.min_elevation_deg)
    serving = select_serving_satellites(
        positions, area, min_elev, sc.serving_count, walker.altitude
    )
    candidate_xyz = generate_candidates(area, sc.candidate_count)
    if sc.user_count > 0:
        user_xyz = generate_users(area, sc.user_count, sc.distribution, seed,
                                  sc.cluster_radius_km * 1e3)
    else:
        user_xyz = np.zeros((0, 3))
    antenna = AntennaModel(
        aperture_efficiency=sc.aperture_efficiency,
        aperture_diameter=sc.aperture_m,
        carrier_frequency=sc.carrier_ghz * 1e9,
        half_power_angle=default_half_power_angle(sc.aperture_m, sc.carrier_ghz * 1e9),
        rx_gain=10.0 ** (sc.rx_gain_dbi / 10.0),
    )
    atmos = AtmosphereModel(sc.rician_factor, sc.cloud_attenuation, sc.rain_attenuation)
    subchannel_bw = sc.beam_bandwidth_mhz * 1e6 / sc.subchannel_count
    fading_rng = (np.random.default_rng(np.random.SeedSequence([seed, 0xFAD]))
                  if sc.fast_fading else None)
    tensor = build_channel_tensor(
        positions[serving], candidate_xyz, user_xyz, antenna, atmos,
        min_elevation=min_elev,
        sat_height=walker.altitude,
        earth_radius=EARTH_RADIUS,
        noise=noise_power(sc.noise_temperature_k, subchannel_bw),
        fading_rng=fading_rng,
    )
    radio = RadioConfig(
        beam_bandwidth=sc.beam_bandwidth_mhz * 1e6,
        subchannel_count=sc.subchannel_count,
        per_user_cap=sc.per_user_cap,
        beam_power_cap=sc.beam_power_w,
        satellite_power_cap=sc.satellite_power_w,
        min_elevation=min_elev,
        min_sinr=sc.min_sinr,
        fairness_alpha=sc.fairness_alpha,
        utility_floor=sc.utility_floor,
    )
    net = Network(tensor, radio, sc.beams_per_satellite)
    disc = beam_matching.service_discs(candidate_xyz, user_xyz,
                                       sc.service_radius_km * 1e3, EARTH_RADIUS)
    return BuiltScenario(
        scenario=sc,
        seed=seed,
        network=net,
        disc=disc,
        user_xyz=user_xyz,
        candidate_xyz=candidate_xyz,
        satellite_positions=positions[serving],
        serving=serving,
        scenario_hash=scenario_hash(sc),
    )


METRIC_COLUMNS = (
    "algorithm", "L", "K", "K_thr", "distribution", "seed",
    "sum_rate_bps", "served_users", "sum_alpha_utility",
    "jfi_rate", "jfi_utility", "outer_iterations", "wall_time_s",
    "scenario_hash", "build",
)


@dataclass
class ResultsBundle:
    rows: list                      # MetricsRow-shaped records
    run_log: str = ""
    scenario_text: str = ""


def _cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"non-finite value {value!r} in metrics table")
        return repr(value)
    return str(value)


def format_table(columns, rows) -> str:
    lines = ["\t".join(columns)]
    for row in rows:
        lines.append("\t".join(_cell(getattr(row, col)) for col in columns))
    return "\n".join(lines) + "\n"


def format_metrics_table(rows) -> str:
    return format_table(METRIC_COLUMNS, rows)


def emit_results(bundle: ResultsBundle, out_dir: str) -> list[str]:
    """Write metrics.tsv, run_log.txt, and scenario.ini; identical bundles
    produce identical bytes."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    table = format_metrics_table(bundle.rows)
    for name, payload in (
        ("metrics.tsv", table),
        ("run_log.txt", bundle.run_log),
        ("scenario.ini", bundle.scenario_text),
    ):
        path = os.path.join(out_dir, name)
        try:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(payload)
        except OSError as exc:
            raise ScenarioError([f"cannot write {path}: {exc}"]) from exc
        written.append(path)
    return written


def render_run_log(records, scenario_digest: str) -> str:
    """Human-readable, deterministic run trace for one or more runs."""
    out: list[str] = []
    for rec in records:
        out.append(f"run algorithm={rec.algorithm} seed={rec.seed} scenario={scenario_digest}")
        out.append(f"  initial_objective={rec.initial_objective!r}")
        for outer in rec.outer:
            out.append(
                f"  outer {outer.index}: objective={outer.objective!r}"
                f" swaps={outer.swap_count} removals={outer.removal_count}"
                f" sca_iterations={outer.sca_iterations}"
                f" sca_rejections={outer.sca_rejections}"
                f" blocking={outer.blocking_pairs} counter_excluded={outer.counter_excluded}"
            )
            for swap in outer.swap_log:
                out.append(
                    f"    exchange slot={swap.slot} i={swap.unit_i} j={swap.unit_j}"
                    f" beams=({swap.beam_i},{swap.beam_j})"
                    f" total {swap.total_before!r} -> {swap.total_after!r}"
                )
            for removal in outer.removal_log:
                out.append(
                    f"    removal slot={removal.slot} beam={removal.beam}"
                    f" subchannel={removal.subchannel} user={removal.user}"
                    f" total {removal.total_before!r} -> {removal.total_after!r}"
                )
            if outer.sca_objective_series:
                series = ", ".join(repr(v) for v in outer.sca_objective_series)
                out.append(f"    power objective series: [{series}]")
        out.append(
            f"  converged={rec.converged} converged_after={rec.converged_after}"
            f" regressions_kept={rec.regressions_kept}"
            f" feasibility_checks={rec.feasibility_checks}"
        )
        m = rec.metrics
        out.append(
            f"  metrics sum_rate_bps={m.sum_rate_bps!r} served_users={m.served_users}"
            f" sum_alpha_utility={m.sum_alpha_utility!r}"
            f" jfi_rate={m.jfi_rate!r} jfi_utility={m.jfi_utility!r}"
        )
        out.append(f"  wall_time_s={rec.wall_time_s!r}")
    return "\n".join(out) + "\n"
