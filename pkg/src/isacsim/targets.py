"""Sensing-target clusters: geometric ray construction and trace ingestion.

A target cluster is realized as one or more rays whose delays and angles
are derived from actual 3D reflection points, so that re-deriving the
parameters from the stored points reproduces them exactly (spatial
coherence).  Three reflection path shapes are supported:

    T1: tx - target - rx
    T2: tx - environment bounce - target - rx
    T3: tx - target - environment bounce - rx

Targets can also be supplied deterministically as a trace of per-frame
rays (e.g. exported from a ray tracer), which bypasses the geometric
construction entirely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Iterable, TextIO

import numpy as np

from .errors import DegenerateEllipseError, ParseError, ValidationError
from .geometry import (
    SPEED_OF_LIGHT,
    BistaticGeometry,
    Direction,
    as_point,
    direction_between,
    ellipsoid_intersect,
    path_length,
    sample_ellipsoid_point,
    scatterer_range_rate,
)

if TYPE_CHECKING:
    from .clusters import Cluster


class ReflectionType(str, Enum):
    T1 = "T1"  # tx - target - rx
    T2 = "T2"  # tx - env - target - rx
    T3 = "T3"  # tx - target - env - rx


class Placement(str, Enum):
    ANGLE_PRIORITY = "angle_priority"
    POSITION_PRIORITY = "position_priority"


@dataclass(frozen=True)
class PointTarget:
    """Single reflection point per cluster."""


@dataclass(frozen=True)
class ExtendedTarget:
    """k_rays reflection points scattered N(0, sigma^2 I3) around the center."""

    k_rays: int
    sigma_ext_m: float

    def __post_init__(self):
        if self.k_rays < 1:
            raise ValidationError("extended target needs k_rays >= 1")
        if self.sigma_ext_m < 0:
            raise ValidationError("extended target spread must be non-negative")


@dataclass(frozen=True)
class Stationary:
    def velocity_at(self, t_s: float) -> np.ndarray:
        return np.zeros(3)

    def displacement(self, t0_s: float, t1_s: float) -> np.ndarray:
        return np.zeros(3)


@dataclass(frozen=True, eq=False)
class ConstantVelocity:
    v_mps: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "v_mps", as_point(self.v_mps))

    def velocity_at(self, t_s: float) -> np.ndarray:
        return self.v_mps

    def displacement(self, t0_s: float, t1_s: float) -> np.ndarray:
        return self.v_mps * (t1_s - t0_s)


@dataclass(frozen=True, eq=False)
class PrescribedTrack:
    """Piecewise-linear position track; velocity is the segment slope."""

    times_s: np.ndarray
    positions_m: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times_s, dtype=float)
        p = np.asarray(self.positions_m, dtype=float)
        if t.ndim != 1 or t.size < 2 or np.any(np.diff(t) <= 0):
            raise ValidationError("track needs >= 2 strictly increasing timestamps")
        if p.shape != (t.size, 3):
            raise ValidationError("track positions must have shape (n_times, 3)")
        object.__setattr__(self, "times_s", t)
        object.__setattr__(self, "positions_m", p)

    def position_at(self, t_s: float) -> np.ndarray:
        return np.array(
            [np.interp(t_s, self.times_s, self.positions_m[:, k]) for k in range(3)]
        )

    def velocity_at(self, t_s: float) -> np.ndarray:
        idx = np.searchsorted(self.times_s, t_s, side="right") - 1
        idx = min(max(idx, 0), self.times_s.size - 2)
        dt = self.times_s[idx + 1] - self.times_s[idx]
        return (self.positions_m[idx + 1] - self.positions_m[idx]) / dt

    def displacement(self, t0_s: float, t1_s: float) -> np.ndarray:
        return self.position_at(t1_s) - self.position_at(t0_s)


Motion = Stationary | ConstantVelocity | PrescribedTrack


@dataclass(frozen=True)
class TargetSpec:
    target_model: PointTarget | ExtendedTarget = PointTarget()
    reflection_types: tuple[ReflectionType, ...] = (ReflectionType.T1,)
    sub_cluster_power_weights: tuple[float, ...] | None = None
    placement: Placement = Placement.ANGLE_PRIORITY
    motion: Motion = field(default_factory=Stationary)

    def __post_init__(self):
        if not self.reflection_types:
            raise ValidationError("at least one reflection type required")
        if len(set(self.reflection_types)) != len(self.reflection_types):
            raise ValidationError("duplicate reflection types")
        weights = self.weights()
        if len(weights) != len(self.reflection_types):
            raise ValidationError(
                "need one sub-cluster weight per reflection type "
                f"({len(weights)} weights, {len(self.reflection_types)} types)"
            )
        if abs(sum(weights) - 1.0) > 1e-12:
            raise ValidationError("sub-cluster power weights must sum to 1")

    def weights(self) -> tuple[float, ...]:
        if self.sub_cluster_power_weights is not None:
            return self.sub_cluster_power_weights
        n = len(self.reflection_types)
        return tuple(1.0 / n for _ in range(n))


@dataclass
class SensingRay:
    """One target-cluster ray with its full geometric state.

    ``departure``/``arrival`` hold the (zenith, azimuth) pairs; the scalar
    angle components are exposed as zod/aod/zoa/aoa properties.
    """

    cluster_index: int
    sub_cluster: int
    ray_index: int
    reflection_type: ReflectionType
    target_point: np.ndarray
    env_point: np.ndarray | None
    delay_s: float
    departure: Direction
    arrival: Direction
    power: float
    eff_velocity_mps: float = 0.0
    phases: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    xpr_linear: float = 1.0

    @property
    def zod(self) -> float:
        return self.departure.zenith

    @property
    def aod(self) -> float:
        return self.departure.azimuth

    @property
    def zoa(self) -> float:
        return self.arrival.zenith

    @property
    def aoa(self) -> float:
        return self.arrival.azimuth

    def path_points(self) -> list[np.ndarray]:
        """The via-point sequence between tx and rx for this ray."""
        if self.reflection_type is ReflectionType.T1:
            return [self.target_point]
        if self.reflection_type is ReflectionType.T2:
            return [self.env_point, self.target_point]
        return [self.target_point, self.env_point]


def _ray_delay(g: BistaticGeometry, via: list[np.ndarray], absolute_mode: bool) -> float:
    total = path_length(g.tx, via, g.rx)
    if absolute_mode:
        return total / SPEED_OF_LIGHT
    return (total - g.d3d) / SPEED_OF_LIGHT


def _ray_directions(
    g: BistaticGeometry,
    ray_type: ReflectionType,
    target: np.ndarray,
    env: np.ndarray | None,
) -> tuple[Direction, Direction]:
    """(departure, arrival) directions for one reflection path shape."""
    if ray_type is ReflectionType.T1:
        return direction_between(g.tx, target), direction_between(g.rx, target)
    if ray_type is ReflectionType.T2:
        return direction_between(g.tx, env), direction_between(g.rx, target)
    return direction_between(g.tx, target), direction_between(g.rx, env)


def default_env_point_box(g: BistaticGeometry) -> tuple[float, ...]:
    """Axis-aligned sampling box: baseline extent +/- 25 m, heights 0-10 m."""
    lo = np.minimum(g.tx, g.rx)
    hi = np.maximum(g.tx, g.rx)
    return (lo[0] - 25.0, hi[0] + 25.0, lo[1] - 25.0, hi[1] + 25.0, 0.0, 10.0)


def draw_env_point(
    g: BistaticGeometry,
    target: np.ndarray,
    rng: np.random.Generator,
    box: tuple[float, ...] | None = None,
    min_clearance_m: float = 0.5,
    max_tries: int = 1000,
) -> np.ndarray:
    """Uniform point in the box, at least ``min_clearance_m`` from tx/rx/target."""
    if box is None:
        box = default_env_point_box(g)
    x0, x1, y0, y1, z0, z1 = box
    for _ in range(max_tries):
        p = np.array([rng.uniform(x0, x1), rng.uniform(y0, y1), rng.uniform(z0, z1)])
        if (
            np.linalg.norm(p - g.tx) >= min_clearance_m
            and np.linalg.norm(p - g.rx) >= min_clearance_m
            and np.linalg.norm(p - target) >= min_clearance_m
        ):
            return p
    raise RuntimeError("could not draw an environment bounce point clear of the nodes")


def build_statistical_target(
    cluster: "Cluster",
    spec: TargetSpec,
    g: BistaticGeometry,
    lsp,
    rng: np.random.Generator,
    departure: Direction | None = None,
    absolute_delay_mode: bool = False,
    env_point_box: tuple[float, ...] | None = None,
    env_min_clearance_m: float = 0.5,
) -> list[SensingRay]:
    """Construct the rays of one statistically modeled target cluster.

    The cluster's equivalent reflection point is placed on the bistatic
    iso-delay spheroid for its delay, either along the supplied departure
    direction (angle priority) or at a random point (position priority).
    The cluster power is split across reflection-type sub-clusters by the
    spec weights and equally across the rays of each sub-cluster, so the
    ray powers sum back to the cluster power.
    """
    total_path = (
        cluster.delay_s * SPEED_OF_LIGHT
        if absolute_delay_mode
        else g.d3d + cluster.delay_s * SPEED_OF_LIGHT
    )
    if total_path <= g.d3d:
        raise DegenerateEllipseError(
            f"cluster delay {cluster.delay_s:g} s gives total path {total_path:g} m "
            f"<= focal separation {g.d3d:g} m"
        )

    if spec.placement is Placement.ANGLE_PRIORITY:
        if departure is None:
            raise ValidationError("angle-priority placement needs a departure direction")
        center = ellipsoid_intersect(g, departure, total_path)
    else:
        center = sample_ellipsoid_point(g, total_path, rng)

    if isinstance(spec.target_model, PointTarget):
        points = [center]
    else:
        k = spec.target_model.k_rays
        sigma = spec.target_model.sigma_ext_m
        points = [center + rng.normal(0.0, sigma, size=3) for _ in range(k)]

    weights = spec.weights()
    rays: list[SensingRay] = []
    for sub, (rtype, weight) in enumerate(zip(spec.reflection_types, weights)):
        ray_power = cluster.power * weight / len(points)
        for m, point in enumerate(points):
            env = None
            if rtype in (ReflectionType.T2, ReflectionType.T3):
                env = draw_env_point(
                    g, point, rng, box=env_point_box, min_clearance_m=env_min_clearance_m
                )
            dep, arr = _ray_directions(g, rtype, point, env)
            via = (
                [point]
                if rtype is ReflectionType.T1
                else ([env, point] if rtype is ReflectionType.T2 else [point, env])
            )
            rays.append(
                SensingRay(
                    cluster_index=cluster.index,
                    sub_cluster=sub,
                    ray_index=m,
                    reflection_type=rtype,
                    target_point=point,
                    env_point=env,
                    delay_s=_ray_delay(g, via, absolute_delay_mode),
                    departure=dep,
                    arrival=arr,
                    power=ray_power,
                )
            )
    return rays


def assign_doppler(
    rays: list[SensingRay], motion: Motion, g: BistaticGeometry, t_s: float
) -> list[SensingRay]:
    """Set each ray's effective velocity from the target motion at time t.

    The effective velocity is the negative rate of change of the ray's
    own path length, so an approaching target yields positive Doppler.
    Environment bounce points are static, so the rate is evaluated at the
    moving target point against its two adjacent path nodes.
    """
    v = motion.velocity_at(t_s)
    for ray in rays:
        if not np.any(v):
            ray.eff_velocity_mps = 0.0
            continue
        if ray.reflection_type is ReflectionType.T1:
            nodes = (g.tx, g.rx)
        elif ray.reflection_type is ReflectionType.T2:
            nodes = (ray.env_point, g.rx)
        else:
            nodes = (g.tx, ray.env_point)
        ray.eff_velocity_mps = -scatterer_range_rate(
            nodes[0], nodes[1], ray.target_point, v
        )
    return rays


def advance_targets(
    rays: list[SensingRay],
    motion: Motion,
    g: BistaticGeometry,
    dt_s: float,
    t_now_s: float = 0.0,
    absolute_delay_mode: bool = False,
) -> list[SensingRay]:
    """Move the target by one step and refresh geometry-derived fields.

    Positions shift by the motion displacement over [t_now, t_now+dt];
    delays and angles are recomputed from the updated points; powers are
    untouched; the effective velocity is re-evaluated at t_now+dt.
    """
    if dt_s <= 0:
        raise ValidationError("dt must be positive")
    shift = motion.displacement(t_now_s, t_now_s + dt_s)
    for ray in rays:
        ray.target_point = ray.target_point + shift
        dep, arr = _ray_directions(g, ray.reflection_type, ray.target_point, ray.env_point)
        ray.departure = dep
        ray.arrival = arr
        ray.delay_s = _ray_delay(g, ray.path_points(), absolute_delay_mode)
    return assign_doppler(rays, motion, g, t_now_s + dt_s)


# --- deterministic targets (ray-tracing / measurement traces) ---------------


@dataclass(frozen=True)
class DetRay:
    power: float
    delay_s: float
    departure: Direction
    arrival: Direction
    phase_rad: float


@dataclass(frozen=True)
class DeterministicTarget:
    frames: tuple[tuple[float, tuple[DetRay, ...]], ...]
    frame_rate_fps: float
    delay_convention: str = "excess"

    def frame_at(self, t_s: float) -> tuple[DetRay, ...]:
        """Sample-and-hold lookup: latest frame at or before t (first frame before)."""
        times = [f[0] for f in self.frames]
        idx = np.searchsorted(times, t_s, side="right") - 1
        return self.frames[max(idx, 0)][1]


TRACE_HEADER_PREFIX = "# isac-trace v1"


def ingest_deterministic_rays(source: TextIO | str | Iterable[str]) -> DeterministicTarget:
    """Parse a deterministic target trace.

    Format: a header line ``# isac-trace v1; power_unit=<dbm|linear>;
    frame_rate_fps=<f>`` (optionally ``; delay_convention=<excess|absolute>``),
    then CSV rows ``t_s, power, delay_s, zod_deg, aod_deg, zoa_deg,
    aoa_deg, phase_rad``.  Rows sharing a timestamp form one frame;
    frame timestamps must be strictly increasing.
    """
    if isinstance(source, str):
        lines = source.splitlines()
    else:
        lines = [line.rstrip("\n") for line in source]

    if not lines or not lines[0].strip():
        raise ParseError("empty trace", line=1)
    header = lines[0].strip()
    if not header.startswith(TRACE_HEADER_PREFIX):
        raise ParseError(f"expected header starting with {TRACE_HEADER_PREFIX!r}", line=1)
    fields = {}
    for item in header[len(TRACE_HEADER_PREFIX):].split(";"):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise ParseError(f"bad header field {item!r}", line=1)
        key, value = item.split("=", 1)
        fields[key.strip()] = value.strip()
    power_unit = fields.get("power_unit", "linear").lower()
    if power_unit not in ("dbm", "linear"):
        raise ParseError(f"unknown power_unit {power_unit!r}", line=1)
    delay_convention = fields.get("delay_convention", "excess").lower()
    if delay_convention not in ("excess", "absolute"):
        raise ParseError(f"unknown delay_convention {delay_convention!r}", line=1)
    try:
        frame_rate = float(fields["frame_rate_fps"])
    except KeyError:
        raise ParseError("header missing frame_rate_fps", line=1) from None
    except ValueError:
        raise ParseError(f"bad frame_rate_fps {fields['frame_rate_fps']!r}", line=1) from None

    from .env_rays import wrap_azimuth, wrap_zenith

    frames: list[tuple[float, list[DetRay]]] = []
    n_rows = 0
    for lineno, line in enumerate(lines[1:], start=2):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        parts = text.split(",")
        if len(parts) != 8:
            raise ParseError(f"expected 8 columns, got {len(parts)}", line=lineno)
        try:
            t, power, delay, zod, aod, zoa, aoa, phase = (float(p) for p in parts)
        except ValueError:
            raise ParseError(f"non-numeric value in row {text!r}", line=lineno) from None
        if power_unit == "dbm":
            power = 10.0 ** ((power - 30.0) / 10.0)
        if power < 0:
            raise ParseError("negative linear power", line=lineno)
        if delay < 0:
            raise ParseError("negative delay", line=lineno)
        ray = DetRay(
            power=power,
            delay_s=delay,
            departure=Direction(wrap_zenith(math.radians(zod)), wrap_azimuth(math.radians(aod))),
            arrival=Direction(wrap_zenith(math.radians(zoa)), wrap_azimuth(math.radians(aoa))),
            phase_rad=phase,
        )
        if frames and frames[-1][0] == t:
            frames[-1][1].append(ray)
        else:
            if frames and t <= frames[-1][0]:
                raise ValidationError(
                    f"line {lineno}: timestamps not strictly increasing "
                    f"({t} after {frames[-1][0]})"
                )
            frames.append((t, [ray]))
        n_rows += 1
    if n_rows == 0:
        raise ParseError("trace contains no data rows", line=len(lines))
    return DeterministicTarget(
        frames=tuple((t, tuple(rays)) for t, rays in frames),
        frame_rate_fps=frame_rate,
        delay_convention=delay_convention,
    )


def load_trace(path: str) -> DeterministicTarget:
    with open(path, "r", encoding="utf-8") as fh:
        return ingest_deterministic_rays(fh)


def scale_deterministic_power(target: DeterministicTarget, pl_db: float) -> DeterministicTarget:
    """Divide every ray power by the linear path loss 10^(pl_db/10)."""
    if not math.isfinite(pl_db):
        raise ValidationError("path loss must be finite")
    scale = 10.0 ** (-pl_db / 10.0)
    frames = tuple(
        (
            t,
            tuple(
                DetRay(
                    power=r.power * scale,
                    delay_s=r.delay_s,
                    departure=r.departure,
                    arrival=r.arrival,
                    phase_rad=r.phase_rad,
                )
                for r in rays
            ),
        )
        for t, rays in target.frames
    )
    return DeterministicTarget(frames, target.frame_rate_fps, target.delay_convention)
