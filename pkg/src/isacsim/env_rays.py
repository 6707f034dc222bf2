"""Per-cluster angles, ray expansion with random coupling, XPR, and phases.

Environment clusters follow the TR 38.901 section 7.5 recipe (steps 7-10,
NLoS flavor): cluster azimuths come from the inverse-Gaussian power
mapping, cluster zeniths from the inverse-Laplacian mapping, and the
per-ray structure adds the fixed unit-RMS offset table scaled by the
cluster-internal spread, with the four offset sequences independently
permuted per cluster (the "random coupling").
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ValidationError
from .geometry import Direction

# TR 38.901 table 7.5-3, ray offset angles for M=20 (unit RMS).
RAY_OFFSETS_20 = np.array(
    [
        0.0447, -0.0447, 0.1413, -0.1413, 0.2492, -0.2492, 0.3715, -0.3715,
        0.5129, -0.5129, 0.6797, -0.6797, 0.8844, -0.8844, 1.1481, -1.1481,
        1.5195, -1.5195, 2.1551, -2.1551,
    ]
)

# TR 38.901 tables 7.5-2 / 7.5-4: scaling constants vs. cluster count.
AZIMUTH_SCALING = {
    4: 0.779, 5: 0.860, 8: 1.018, 10: 1.090, 11: 1.123, 12: 1.146, 14: 1.190,
    15: 1.211, 16: 1.226, 19: 1.273, 20: 1.289, 25: 1.358,
}
ZENITH_SCALING = {
    8: 0.889, 10: 0.957, 11: 1.031, 12: 1.104, 15: 1.1088, 19: 1.184,
    20: 1.178, 25: 1.282,
}


@dataclass(frozen=True)
class ClusterAngles:
    """Central arrival/departure directions of one cluster (radians)."""

    zoa: float
    aoa: float
    zod: float
    aod: float


@dataclass(frozen=True)
class RayAngles:
    zoa: float
    aoa: float
    zod: float
    aod: float


@dataclass(frozen=True)
class EnvRay:
    cluster_index: int
    ray_index: int
    zoa: float
    aoa: float
    zod: float
    aod: float
    xpr_linear: float
    phases: tuple[float, float, float, float]  # (tt, tp, pt, pp)


def scaling_constant(table: dict[int, float], n_clusters: int) -> float:
    """Table value for the nearest tabulated cluster count (ties go low)."""
    if n_clusters in table:
        return table[n_clusters]
    nearest = min(table, key=lambda k: (abs(k - n_clusters), k))
    return table[nearest]


def wrap_azimuth(angle_rad: float) -> float:
    """Wrap to [-pi, pi)."""
    wrapped = math.remainder(angle_rad, 2.0 * math.pi)
    if wrapped >= math.pi:
        wrapped -= 2.0 * math.pi
    if wrapped < -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


def wrap_zenith(angle_rad: float) -> float:
    """Fold into [0, pi] by mirroring (TR 38.901 zenith convention)."""
    wrapped = angle_rad % (2.0 * math.pi)
    if wrapped > math.pi:
        wrapped = 2.0 * math.pi - wrapped
    return wrapped


def azimuth_offset_deg(p_rel: np.ndarray, spread_deg: float, c_phi: float) -> np.ndarray:
    """Inverse-Gaussian azimuth mapping 2*(AS/1.4)*sqrt(-ln p_rel)/C_phi (deg)."""
    return 2.0 * (spread_deg / 1.4) * np.sqrt(-np.log(p_rel)) / c_phi


def zenith_offset_deg(p_rel: np.ndarray, spread_deg: float, c_theta: float) -> np.ndarray:
    """Inverse-Laplacian zenith mapping -ZS*ln(p_rel)/C_theta (deg)."""
    return -spread_deg * np.log(p_rel) / c_theta


def generate_cluster_angles(
    powers: np.ndarray,
    lsp,
    los_departure: Direction,
    los_arrival: Direction,
    rng: np.random.Generator,
    perturb: bool = True,
) -> list[ClusterAngles]:
    """Central angles for every cluster, recentered on the LoS directions.

    The power-to-offset mapping gives larger offsets to weaker clusters;
    each offset gets a random sign and a Gaussian perturbation with
    standard deviation AS/7 (disabled when ``perturb`` is False, which is
    only meant for tests).  Draw order per angle type: signs, then
    perturbations, in the order AOA, AOD, ZOA, ZOD.
    """
    powers = np.asarray(powers, dtype=float)
    if powers.size == 0:
        return []
    p_rel = powers / powers.max()
    n = powers.size
    c_phi = scaling_constant(AZIMUTH_SCALING, n)
    c_theta = scaling_constant(ZENITH_SCALING, n)

    def draw(offsets_deg: np.ndarray, spread_deg: float, center_rad: float, kind: str):
        signs = rng.integers(0, 2, size=n) * 2 - 1
        perturb_deg = rng.normal(0.0, spread_deg / 7.0, size=n) if perturb else np.zeros(n)
        angles = np.radians(signs * offsets_deg + perturb_deg) + center_rad
        wrap = wrap_azimuth if kind == "azimuth" else wrap_zenith
        return [wrap(a) for a in angles]

    aoa = draw(azimuth_offset_deg(p_rel, lsp.asa_deg, c_phi), lsp.asa_deg,
               los_arrival.azimuth, "azimuth")
    aod = draw(azimuth_offset_deg(p_rel, lsp.asd_deg, c_phi), lsp.asd_deg,
               los_departure.azimuth, "azimuth")
    zoa = draw(zenith_offset_deg(p_rel, lsp.zsa_deg, c_theta), lsp.zsa_deg,
               los_arrival.zenith, "zenith")
    zod = draw(zenith_offset_deg(p_rel, lsp.zsd_deg, c_theta), lsp.zsd_deg,
               los_departure.zenith, "zenith")
    return [ClusterAngles(zoa=zoa[i], aoa=aoa[i], zod=zod[i], aod=aod[i]) for i in range(n)]


def ray_offset_table(m_rays: int, allow_equispaced: bool = True) -> np.ndarray:
    """Unit-RMS offset table: the fixed M=20 table, else equispaced offsets."""
    if m_rays == 20:
        return RAY_OFFSETS_20.copy()
    if not allow_equispaced:
        raise ConfigError(f"no offset table for M={m_rays} and equispaced fallback disabled")
    if m_rays == 1:
        return np.zeros(1)
    base = np.linspace(-1.0, 1.0, m_rays)
    return base / np.sqrt(np.mean(base**2))


def expand_rays(
    cluster: ClusterAngles,
    c_spreads_deg: tuple[float, float, float, float],
    m_rays: int,
    rng: np.random.Generator,
    allow_equispaced: bool = True,
) -> list[RayAngles]:
    """M per-ray angle tuples around one cluster's central angles.

    ``c_spreads_deg`` is (c_asa, c_asd, c_zsa, c_zsd).  Each of the four
    offset sequences is independently permuted (draw order AOA, AOD, ZOA,
    ZOD), which realizes the random coupling between angle types.
    """
    table = ray_offset_table(m_rays, allow_equispaced)
    c_asa, c_asd, c_zsa, c_zsd = c_spreads_deg
    perm_aoa = rng.permutation(m_rays)
    perm_aod = rng.permutation(m_rays)
    perm_zoa = rng.permutation(m_rays)
    perm_zod = rng.permutation(m_rays)
    rays = []
    for m in range(m_rays):
        rays.append(
            RayAngles(
                aoa=wrap_azimuth(cluster.aoa + math.radians(c_asa * table[perm_aoa[m]])),
                aod=wrap_azimuth(cluster.aod + math.radians(c_asd * table[perm_aod[m]])),
                zoa=wrap_zenith(cluster.zoa + math.radians(c_zsa * table[perm_zoa[m]])),
                zod=wrap_zenith(cluster.zod + math.radians(c_zsd * table[perm_zod[m]])),
            )
        )
    return rays


def draw_xpr(
    xpr_mu_db: float, xpr_sigma_db: float, rng: np.random.Generator, size=None
) -> np.ndarray | float:
    """Linear cross-polarization ratio draws, log-normal in dB."""
    if xpr_sigma_db < 0:
        raise ValidationError("xpr_sigma_db must be non-negative")
    db = (
        rng.normal(xpr_mu_db, xpr_sigma_db, size=size)
        if xpr_sigma_db > 0
        else (np.full(size, xpr_mu_db) if size is not None else xpr_mu_db)
    )
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0) if size is not None else 10.0 ** (db / 10.0)


def draw_initial_phases(rng: np.random.Generator, size=None) -> np.ndarray:
    """I.i.d. uniform phases on [-pi, pi); shape (..., 4)."""
    shape = (4,) if size is None else (tuple(np.atleast_1d(size)) + (4,))
    return rng.uniform(-math.pi, math.pi, size=shape)


def build_environment_rays(
    cluster_index: int,
    angles: ClusterAngles,
    lsp,
    m_rays: int,
    rng: np.random.Generator,
    allow_equispaced: bool = True,
) -> list[EnvRay]:
    """Fully populated rays for one environment cluster.

    Draw order per cluster: coupling permutations, then XPR per ray, then
    the four initial phases per ray.
    """
    ray_angles = expand_rays(
        angles,
        (lsp.c_asa_deg, lsp.c_asd_deg, lsp.c_zsa_deg, lsp.c_zsd_deg),
        m_rays,
        rng,
        allow_equispaced,
    )
    xpr = draw_xpr(lsp.xpr_mu_db, lsp.xpr_sigma_db, rng, size=m_rays)
    phases = draw_initial_phases(rng, size=m_rays)
    return [
        EnvRay(
            cluster_index=cluster_index,
            ray_index=m,
            zoa=ra.zoa,
            aoa=ra.aoa,
            zod=ra.zod,
            aod=ra.aod,
            xpr_linear=float(xpr[m]),
            phases=tuple(phases[m]),
        )
        for m, ra in enumerate(ray_angles)
    ]
