"""Constellation and ground geometry on a spherical Earth.

Satellite positions come from circular Keplerian orbits arranged in a
Walker-delta pattern and rotated into the Earth-Centered Earth-Fixed
(ECEF) frame.  Ground points (area center, beam center candidates, user
terminals) live on the sphere surface.  Angles are radians, lengths
meters, times seconds throughout; ECEF points are numpy arrays of shape
(3,) or stacks thereof.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InvalidGeometryError, ScenarioError

EARTH_RADIUS = 6_371_000.0          # mean sphere [m]
EARTH_ROTATION_RATE = 7.2921159e-5  # [rad/s]
EARTH_GM = 3.986004418e14           # gravitational parameter [m^3 / s^2]
GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


@dataclass(frozen=True)
class GeodeticCoord:
    """Ground coordinate: latitude/longitude in radians, altitude in meters."""

    latitude: float
    longitude: float
    altitude: float = 0.0

    def __post_init__(self):
        if abs(self.latitude) > math.pi / 2:
            raise ConfigurationError(f"latitude {self.latitude} outside [-pi/2, pi/2]")
        if not -math.pi <= self.longitude < math.pi:
            raise ConfigurationError(f"longitude {self.longitude} outside [-pi, pi)")
        if self.altitude < 0:
            raise ConfigurationError("altitude must be non-negative")


@dataclass(frozen=True)
class WalkerConfig:
    altitude: float                 # orbital altitude above the sphere [m]
    inclination: float              # [rad]
    plane_count: int
    sats_per_plane: int
    phasing_factor: int = 1
    epoch: float = 0.0              # time offset applied to every slot [s]
    earth_radius: float = EARTH_RADIUS
    earth_rotation_rate: float = EARTH_ROTATION_RATE

    def __post_init__(self):
        if self.plane_count < 1 or self.sats_per_plane < 1:
            raise ConfigurationError("plane_count and sats_per_plane must be >= 1")
        if not 0 <= self.phasing_factor < self.plane_count:
            raise ConfigurationError("phasing_factor must lie in [0, plane_count)")

    @property
    def satellite_count(self) -> int:
        return self.plane_count * self.sats_per_plane


@dataclass(frozen=True)
class TargetArea:
    """Circular service area on the ground."""

    center: GeodeticCoord
    radius: float                   # [m]

    def __post_init__(self):
        if self.radius <= 0:
            raise ConfigurationError("area radius must be positive")


@dataclass
class ConstellationState:
    """Propagated ECEF positions, positions[s, t] for satellite s at slot t."""

    positions: np.ndarray           # [sat, slot, 3] meters
    serving_sats: list[int]


def geodetic_to_ecef(point: GeodeticCoord, earth_radius: float = EARTH_RADIUS) -> np.ndarray:
    r = earth_radius + point.altitude
    clat = math.cos(point.latitude)
    return np.array(
        [
            r * clat * math.cos(point.longitude),
            r * clat * math.sin(point.longitude),
            r * math.sin(point.latitude),
        ]
    )


def distance(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))


def off_boresight_angle(sat: np.ndarray, beam_center: np.ndarray, user: np.ndarray) -> float:
    """Angle at the satellite between the beam axis and the user direction.

    Computed from the three side lengths of the satellite / beam-center /
    user triangle; the quotient is clamped before acos so that rounding
    near collinearity cannot produce a domain error.
    """
    d_user = distance(sat, user)
    d_center = distance(sat, beam_center)
    if d_user <= 0.0 or d_center <= 0.0:
        raise InvalidGeometryError("satellite coincides with user or beam center")
    d_cross = distance(beam_center, user)
    quot = (d_user * d_user + d_center * d_center - d_cross * d_cross) / (2.0 * d_user * d_center)
    return math.acos(min(1.0, max(-1.0, quot)))


def elevation_angle(sat: np.ndarray, user: np.ndarray, earth_radius: float, sat_height: float) -> float:
    """Satellite elevation above the user's local horizon, user on the sphere."""
    d = distance(sat, user)
    if d <= 0.0:
        raise InvalidGeometryError("satellite coincides with user")
    orbit = sat_height + earth_radius
    quot = (d * d + earth_radius * earth_radius - orbit * orbit) / (2.0 * d * earth_radius)
    return math.acos(min(1.0, max(-1.0, quot))) - math.pi / 2.0


def elevation_angles(sat_positions: np.ndarray, ground: np.ndarray, earth_radius: float, sat_height: float) -> np.ndarray:
    """Vectorized elevation of satellite positions [..., 3] seen from one ground point."""
    diff = sat_positions - ground
    d = np.sqrt(np.sum(diff * diff, axis=-1))
    orbit = sat_height + earth_radius
    quot = (d * d + earth_radius * earth_radius - orbit * orbit) / (2.0 * d * earth_radius)
    return np.arccos(np.clip(quot, -1.0, 1.0)) - math.pi / 2.0


def propagate_walker(config: WalkerConfig, slot_count: int, slot_length: float) -> np.ndarray:
    """ECEF positions [sat, slot, 3] sampled at slot midpoints.

    Satellites are indexed plane-major: satellite s sits in plane
    s // sats_per_plane.  Adjacent planes are phase shifted by
    phasing_factor / (plane_count * sats_per_plane) of a revolution.
    """
    if slot_count < 1:
        raise ConfigurationError("slot_count must be >= 1")
    radius = config.earth_radius + config.altitude
    mean_motion = math.sqrt(EARTH_GM / radius**3)

    planes = np.arange(config.plane_count)[:, None, None]
    in_plane = np.arange(config.sats_per_plane)[None, :, None]
    t = config.epoch + (np.arange(slot_count)[None, None, :] + 0.5) * slot_length

    raan = 2.0 * math.pi * planes / config.plane_count
    phase = 2.0 * math.pi * (
        in_plane / config.sats_per_plane
        + config.phasing_factor * planes / (config.plane_count * config.sats_per_plane)
    )
    anomaly = phase + mean_motion * t

    x_orb = radius * np.cos(anomaly)
    y_orb = radius * np.sin(anomaly)
    cos_i, sin_i = math.cos(config.inclination), math.sin(config.inclination)
    x_eci = x_orb * np.cos(raan) - y_orb * cos_i * np.sin(raan)
    y_eci = x_orb * np.sin(raan) + y_orb * cos_i * np.cos(raan)
    z_eci = y_orb * sin_i

    gmst = config.earth_rotation_rate * t
    cos_g, sin_g = np.cos(gmst), np.sin(gmst)
    x = x_eci * cos_g + y_eci * sin_g
    y = -x_eci * sin_g + y_eci * cos_g
    z = np.broadcast_to(z_eci, x.shape)

    out = np.stack([x, y, z], axis=-1)
    return out.reshape(config.satellite_count, slot_count, 3)


def select_serving_satellites(
    positions: np.ndarray,
    area: TargetArea,
    min_elevation: float,
    count: int,
    sat_height: float,
    earth_radius: float = EARTH_RADIUS,
) -> list[int]:
    """Pick the satellites that keep the area center in view for the whole period.

    Qualification requires elevation >= min_elevation at every slot; among
    qualifiers the `count` with the largest minimum-over-slots elevation
    win, ties broken by satellite index.
    """
    center = geodetic_to_ecef(area.center, earth_radius)
    elev = elevation_angles(positions, center, earth_radius, sat_height)  # [sat, slot]
    worst = elev.min(axis=1)
    qualified = np.flatnonzero(worst >= min_elevation)
    if qualified.size < count:
        raise ScenarioError(
            f"only {qualified.size} satellites keep elevation >= "
            f"{math.degrees(min_elevation):.1f} deg over the period, need {count}"
        )
    order = sorted(qualified.tolist(), key=lambda s: (-worst[s], s))
    return order[:count]


def _destination(center: GeodeticCoord, arc: float, bearing: float, earth_radius: float) -> GeodeticCoord:
    """Point at great-circle distance `arc` meters along `bearing` from center."""
    delta = arc / earth_radius
    lat1, lon1 = center.latitude, center.longitude
    sin_lat = math.sin(lat1) * math.cos(delta) + math.cos(lat1) * math.sin(delta) * math.cos(bearing)
    lat2 = math.asin(min(1.0, max(-1.0, sin_lat)))
    lon2 = lon1 + math.atan2(
        math.sin(bearing) * math.sin(delta) * math.cos(lat1),
        math.cos(delta) - math.sin(lat1) * math.sin(lat2),
    )
    lon2 = (lon2 + math.pi) % (2.0 * math.pi) - math.pi
    return GeodeticCoord(lat2, lon2, 0.0)


def generate_candidates(area: TargetArea, count: int, seed: int = 0, earth_radius: float = EARTH_RADIUS) -> np.ndarray:
    """Beam center candidates [count, 3] on a sunflower lattice over the area.

    The lattice is deterministic; the seed argument is accepted for
    interface symmetry with generate_users and ignored.
    """
    if count < 1:
        raise ConfigurationError("candidate count must be >= 1")
    points = np.empty((count, 3))
    for i in range(count):
        arc = area.radius * math.sqrt(i / count)
        bearing = i * GOLDEN_ANGLE
        points[i] = geodetic_to_ecef(_destination(area.center, arc, bearing, earth_radius), earth_radius)
    return points


def _disc_samples(rng: np.random.Generator, center: GeodeticCoord, radius: float, n: int, earth_radius: float) -> list[GeodeticCoord]:
    arcs = radius * np.sqrt(rng.uniform(size=n))
    bearings = rng.uniform(0.0, 2.0 * math.pi, size=n)
    return [_destination(center, float(a), float(b), earth_radius) for a, b in zip(arcs, bearings)]


def generate_users(
    area: TargetArea,
    count: int,
    distribution: str,
    seed: int,
    cluster_radius: float = 50_000.0,
    earth_radius: float = EARTH_RADIUS,
) -> np.ndarray:
    """User terminal positions [count, 3].

    Distributions:
      - "uniform": uniform over the service disc.
      - "single_cluster": uniform over one cluster_radius disc at the center.
      - "five_clusters": users split as evenly as possible over five
        cluster_radius discs (area center plus four ring points), with the
        ring sized so the discs stay inside the area and apart from each
        other at the default geometry.
    """
    if count < 1:
        raise ConfigurationError("user count must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x75E5]))
    if distribution == "uniform":
        geos = _disc_samples(rng, area.center, area.radius, count, earth_radius)
    elif distribution == "single_cluster":
        radius = min(cluster_radius, area.radius)
        geos = _disc_samples(rng, area.center, radius, count, earth_radius)
    elif distribution == "five_clusters":
        radius = min(cluster_radius, 0.25 * area.radius)
        ring = min(0.64 * area.radius, area.radius - radius)
        centers = [area.center] + [
            _destination(area.center, ring, b, earth_radius)
            for b in (0.0, math.pi / 2, math.pi, 3 * math.pi / 2)
        ]
        geos = []
        for i, c in enumerate(centers):
            size = count // 5 + (1 if i < count % 5 else 0)
            geos.extend(_disc_samples(rng, c, radius, size, earth_radius))
    else:
        raise ConfigurationError(f"unknown user distribution '{distribution}'")
    return np.array([geodetic_to_ecef(g, earth_radius) for g in geos])


def arc_distance(a: np.ndarray, b: np.ndarray, earth_radius: float = EARTH_RADIUS) -> float:
    """Great-circle distance between two surface points, robust near zero."""
    ua = np.asarray(a, dtype=float) / np.linalg.norm(a)
    ub = np.asarray(b, dtype=float) / np.linalg.norm(b)
    angle = math.atan2(float(np.linalg.norm(np.cross(ua, ub))), float(np.dot(ua, ub)))
    return earth_radius * angle
