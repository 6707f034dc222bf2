"""Pure 3D geometry for bistatic propagation.

Positions are numpy arrays of shape (3,) in meters.  Directions are
(zenith, azimuth) pairs in radians with zenith measured from +z (so
zenith 0 points at the zenith and pi/2 at the horizon) and azimuth
measured from +x in [-pi, pi).  The iso-delay surface of a bistatic
pair is the prolate spheroid with the transmitter and receiver as foci.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateEllipseError, DegenerateGeometryError

SPEED_OF_LIGHT = 299_792_458.0  # m/s


def as_point(p) -> np.ndarray:
    """Coerce to a finite float64 vector of shape (3,)."""
    arr = np.asarray(p, dtype=float)
    if arr.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"point has non-finite components: {arr}")
    return arr


@dataclass(frozen=True)
class Direction:
    """Spherical direction: zenith in [0, pi], azimuth in [-pi, pi)."""

    zenith: float
    azimuth: float

    def __post_init__(self):
        if not (0.0 <= self.zenith <= math.pi):
            raise ValueError(f"zenith {self.zenith} outside [0, pi]")
        if not (-math.pi <= self.azimuth < math.pi):
            raise ValueError(f"azimuth {self.azimuth} outside [-pi, pi)")


@dataclass(frozen=True, eq=False)
class BistaticGeometry:
    """Transmitter/receiver pair; ``d3d`` is their 3D separation."""

    tx: np.ndarray
    rx: np.ndarray
    d3d: float = 0.0  # derived

    def __post_init__(self):
        object.__setattr__(self, "tx", as_point(self.tx))
        object.__setattr__(self, "rx", as_point(self.rx))
        d3d = float(np.linalg.norm(self.rx - self.tx))
        if d3d <= 0.0:
            raise DegenerateGeometryError("tx and rx positions coincide")
        object.__setattr__(self, "d3d", d3d)


def spherical_unit(d: Direction) -> np.ndarray:
    """Unit vector (sin z cos a, sin z sin a, cos z) for a direction."""
    sz = math.sin(d.zenith)
    return np.array(
        [sz * math.cos(d.azimuth), sz * math.sin(d.azimuth), math.cos(d.zenith)]
    )


def direction_between(origin, target) -> Direction:
    """Direction of the ray from ``origin`` through ``target``.

    Raises
    ------
    DegenerateGeometryError
        If the two points coincide.
    """
    diff = as_point(target) - as_point(origin)
    r = float(np.linalg.norm(diff))
    if r == 0.0:
        raise DegenerateGeometryError("cannot take a direction between coincident points")
    zenith = math.acos(max(-1.0, min(1.0, diff[2] / r)))
    azimuth = math.atan2(diff[1], diff[0])
    if azimuth >= math.pi:  # atan2 returns (-pi, pi]; fold +pi to -pi
        azimuth = -math.pi
    return Direction(zenith, azimuth)


def ellipsoid_intersect(g: BistaticGeometry, dep: Direction, total_path_m: float) -> np.ndarray:
    """Intersect a ray from the transmitter with a bistatic iso-delay spheroid.

    The spheroid is the locus of points P with |tx-P| + |P-rx| equal to
    ``total_path_m``.  Writing the ray as tx + t*u, the path condition
    t + |t*u - (rx-tx)| = L has the closed-form positive root

        t = (L^2 - d3d^2) / (2 * (L - u . (rx - tx)))

    whose denominator is >= 2*(L - d3d) > 0 whenever L > d3d.

    Parameters
    ----------
    g : BistaticGeometry
    dep : Direction
        Departure direction of the ray at the transmitter.
    total_path_m : float
        Total two-leg path length L; must exceed g.d3d.

    Returns
    -------
    np.ndarray
        The reflection point on the spheroid.
    """
    L = float(total_path_m)
    if L <= g.d3d:
        raise DegenerateEllipseError(
            f"total path {L} m does not exceed the focal separation {g.d3d} m"
        )
    u = spherical_unit(dep)
    baseline = g.rx - g.tx
    t = (L * L - g.d3d * g.d3d) / (2.0 * (L - float(np.dot(u, baseline))))
    return g.tx + t * u


def sample_ellipsoid_point(
    g: BistaticGeometry, total_path_m: float, rng: np.random.Generator
) -> np.ndarray:
    """Random point on the bistatic iso-delay spheroid.

    The departure direction is drawn uniformly on the sphere (uniform
    cos-zenith, uniform azimuth) and handed to :func:`ellipsoid_intersect`.
    Note the induced surface density is not uniform over the spheroid.
    """
    cos_z = rng.uniform(-1.0, 1.0)
    azimuth = rng.uniform(-math.pi, math.pi)
    dep = Direction(math.acos(cos_z), azimuth)
    return ellipsoid_intersect(g, dep, total_path_m)


def path_length(tx, via, rx) -> float:
    """Total length of the polyline tx -> via[0] -> ... -> rx; ``via`` may be empty."""
    points = [as_point(tx)] + [as_point(p) for p in via] + [as_point(rx)]
    total = 0.0
    for a, b in zip(points[:-1], points[1:]):
        total += float(np.linalg.norm(b - a))
    return total


def scatterer_range_rate(node_a, node_b, p, velocity) -> float:
    """Rate of change of |node_a - p| + |p - node_b| as p moves with ``velocity``.

    ``node_a`` and ``node_b`` are the static path nodes adjacent to the
    moving scatterer p.  Positive when the two-leg path is lengthening.
    """
    p = as_point(p)
    leg_a = p - as_point(node_a)
    leg_b = p - as_point(node_b)
    ra = float(np.linalg.norm(leg_a))
    rb = float(np.linalg.norm(leg_b))
    if ra == 0.0 or rb == 0.0:
        raise DegenerateGeometryError("scatterer coincides with a path node")
    u = leg_a / ra + leg_b / rb
    return float(np.dot(np.asarray(velocity, dtype=float), u))


def bistatic_range_rate(g: BistaticGeometry, p, velocity) -> float:
    """d/dt of the bistatic path |tx-p| + |p-rx| for a point moving at ``velocity``.

    The effective velocity used for Doppler synthesis is the negative of
    this rate, so that an approaching scatterer produces positive Doppler.
    """
    return scatterer_range_rate(g.tx, g.rx, p, velocity)
