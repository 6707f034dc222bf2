"""Complex channel coefficient assembly and CIR/CFR emission.

Every ray contributes a complex tap built from the antenna field
patterns, a 2x2 polarization matrix, element-location phase factors, the
receiver-motion Doppler factor, and (for statistically modeled targets)
the cumulative Doppler phase integral exp(j 2 pi / lambda * int v dt).
The LoS path uses the fixed [[1, 0], [0, -1]] polarization matrix and the
deterministic phase exp(-j 2 pi d3D / lambda).  With a K-factor, the
assembled response is sqrt(1/(K+1)) * NLoS + sqrt(K/(K+1)) * LoS, and
path loss plus shadow fading scale all taps by 10^(-(PL+SF)/20).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .config import AntennaConfig, AntennaPattern
from .env_rays import EnvRay
from .errors import ConventionError, IncompleteHistoryError, ValidationError
from .geometry import Direction, BistaticGeometry, direction_between, spherical_unit
from .targets import DetRay, SensingRay


class TapOrigin(str, Enum):
    LOS = "los"
    ENV = "env"
    TARGET_STAT = "target_stat"
    TARGET_DET = "target_det"


@dataclass(frozen=True)
class Tap:
    delay_s: float
    coeff: complex
    origin: TapOrigin
    cluster: int
    ray: int


@dataclass(frozen=True)
class CirSnapshot:
    """Time-tagged tap set for one (rx element u, tx element s) pair."""

    t: float
    u: int
    s: int
    taps: tuple[Tap, ...]

    def total_power(self) -> float:
        return sum(abs(tap.coeff) ** 2 for tap in self.taps)


def field_pattern(
    antenna: AntennaConfig, zenith: float, azimuth: float
) -> tuple[float, float]:
    """(F_theta, F_phi) of one element for a given direction.

    Isotropic elements have unit amplitude; the TR 38.901 single patch
    element applies the 65-degree 3 dB beamwidth gain shape with 8 dBi
    peak gain.  The polarization slant splits the field between the theta
    and phi components.
    """
    slant = math.radians(antenna.polarization_slant_deg)
    if antenna.pattern is AntennaPattern.ISOTROPIC:
        amp = 1.0
    else:
        zen_deg = math.degrees(zenith)
        az_deg = math.degrees(azimuth)
        a_vertical = -min(12.0 * ((zen_deg - 90.0) / 65.0) ** 2, 30.0)
        a_horizontal = -min(12.0 * (az_deg / 65.0) ** 2, 30.0)
        a_db = -min(-(a_vertical + a_horizontal), 30.0) + 8.0
        amp = 10.0 ** (a_db / 20.0)
    return amp * math.cos(slant), amp * math.sin(slant)


def nlos_polarization(xpr_linear: float, phases) -> np.ndarray:
    """2x2 polarization matrix with unit-modulus diagonal, kappa^-1/2 off-diagonal."""
    if xpr_linear <= 0:
        raise ValidationError("XPR must be positive")
    tt, tp, pt, pp = phases
    inv = 1.0 / math.sqrt(xpr_linear)
    return np.array(
        [
            [cmath.exp(1j * tt), inv * cmath.exp(1j * tp)],
            [inv * cmath.exp(1j * pt), cmath.exp(1j * pp)],
        ]
    )


LOS_POLARIZATION = np.array([[1.0, 0.0], [0.0, -1.0]])


class VelocityHistory:
    """Piecewise-constant effective velocity of one target ray.

    Segments must tile [t0, ...] without gaps; the last segment may be
    open-ended.  The Doppler phase integral over piecewise-constant
    segments is an exact sum of v * dt products.
    """

    def __init__(self, t0_s: float = 0.0):
        self.t0_s = t0_s
        self._starts: list[float] = []
        self._ends: list[float] = []
        self._velocities: list[float] = []
        self._cum_disp: list[float] = []  # displacement integral up to each start

    def append(self, t_start_s: float, t_end_s: float | None, v_mps: float):
        expected = self.t0_s if not self._ends else self._ends[-1]
        if expected is None:
            raise IncompleteHistoryError("cannot append after an open-ended segment")
        if not math.isclose(t_start_s, expected, rel_tol=0.0, abs_tol=1e-12):
            raise IncompleteHistoryError(
                f"segment starts at {t_start_s}, expected {expected} (gap or overlap)"
            )
        if t_end_s is not None and t_end_s <= t_start_s:
            raise ValidationError("segment must have positive duration")
        if self._starts:
            prev = self._cum_disp[-1] + self._velocities[-1] * (
                self._ends[-1] - self._starts[-1]
            )
        else:
            prev = 0.0
        self._starts.append(t_start_s)
        self._ends.append(t_end_s)
        self._velocities.append(float(v_mps))
        self._cum_disp.append(prev)

    @property
    def end_s(self) -> float | None:
        """End of coverage; None when the last segment is open-ended."""
        if not self._ends:
            return self.t0_s
        return self._ends[-1]

    def covers(self, t_s: float) -> bool:
        if not self._starts or t_s < self.t0_s:
            return False
        end = self._ends[-1]
        return end is None or t_s <= end + 1e-15

    def displacement(self, t_s: float) -> float:
        """Integral of v from t0 to t (meters of closing path length)."""
        if not self.covers(t_s):
            raise IncompleteHistoryError(f"history does not cover t={t_s}")
        idx = int(np.searchsorted(self._starts, t_s, side="right")) - 1
        idx = max(idx, 0)
        return self._cum_disp[idx] + self._velocities[idx] * (t_s - self._starts[idx])

    def displacement_many(self, times_s: np.ndarray) -> np.ndarray:
        times_s = np.asarray(times_s, dtype=float)
        if times_s.size and not self.covers(float(times_s.max())):
            raise IncompleteHistoryError(
                f"history does not cover t={float(times_s.max())}"
            )
        if times_s.size and float(times_s.min()) < self.t0_s:
            raise IncompleteHistoryError(f"history starts after t={float(times_s.min())}")
        idx = np.clip(np.searchsorted(self._starts, times_s, side="right") - 1, 0, None)
        starts = np.asarray(self._starts)
        cum = np.asarray(self._cum_disp)
        vel = np.asarray(self._velocities)
        return cum[idx] + vel[idx] * (times_s - starts[idx])

    def phase(self, t_s: float, wavelength_m: float) -> float:
        """Cumulative Doppler phase 2 pi / lambda * int_0^t v dt."""
        return 2.0 * math.pi * self.displacement(t_s) / wavelength_m

    @classmethod
    def constant(cls, v_mps: float, t0_s: float = 0.0) -> "VelocityHistory":
        hist = cls(t0_s)
        hist.append(t0_s, None, v_mps)
        return hist


def _common_ray_factor(
    antenna: AntennaConfig,
    u: int,
    s: int,
    departure: Direction,
    arrival: Direction,
    polarization: np.ndarray,
    v_ut: np.ndarray,
    wavelength_m: float,
    t_s: float,
) -> complex:
    f_rx = np.array(field_pattern(antenna, arrival.zenith, arrival.azimuth))
    f_tx = np.array(field_pattern(antenna, departure.zenith, departure.azimuth))
    value = complex(f_rx @ polarization @ f_tx)
    r_rx = spherical_unit(arrival)
    r_tx = spherical_unit(departure)
    d_rx = antenna.element_positions_rx[u]
    d_tx = antenna.element_positions_tx[s]
    # element positions are stored in wavelengths, so lambda cancels here
    value *= cmath.exp(2j * math.pi * float(r_rx @ d_rx))
    value *= cmath.exp(2j * math.pi * float(r_tx @ d_tx))
    value *= cmath.exp(2j * math.pi * float(r_rx @ v_ut) / wavelength_m * t_s)
    return value


def env_ray_coefficient(
    ray: EnvRay,
    antenna: AntennaConfig,
    u: int,
    s: int,
    v_ut: np.ndarray,
    wavelength_m: float,
    cluster_power: float,
    m_rays: int,
    t_s: float,
) -> complex:
    """Environment-cluster ray coefficient, amplitude sqrt(P_n / M)."""
    pol = nlos_polarization(ray.xpr_linear, ray.phases)
    factor = _common_ray_factor(
        antenna, u, s,
        Direction(ray.zod, ray.aod), Direction(ray.zoa, ray.aoa),
        pol, v_ut, wavelength_m, t_s,
    )
    return math.sqrt(cluster_power / m_rays) * factor


def target_segment_coefficient(
    power: float,
    xpr_linear: float,
    phases,
    departure: Direction,
    arrival: Direction,
    antenna: AntennaConfig,
    u: int,
    s: int,
    v_ut: np.ndarray,
    wavelength_m: float,
    t_s: float,
    velocity_history: VelocityHistory,
) -> complex:
    """Target ray coefficient from explicit per-CPI geometry."""
    pol = nlos_polarization(xpr_linear, phases)
    factor = _common_ray_factor(
        antenna, u, s, departure, arrival, pol, v_ut, wavelength_m, t_s
    )
    doppler = cmath.exp(1j * velocity_history.phase(t_s, wavelength_m))
    return math.sqrt(power) * factor * doppler


def target_ray_coefficient(
    ray: SensingRay,
    antenna: AntennaConfig,
    u: int,
    s: int,
    v_ut: np.ndarray,
    wavelength_m: float,
    t_s: float,
    velocity_history: VelocityHistory,
) -> complex:
    """Statistical target ray coefficient with the cumulative Doppler term."""
    return target_segment_coefficient(
        ray.power, ray.xpr_linear, ray.phases, ray.departure, ray.arrival,
        antenna, u, s, v_ut, wavelength_m, t_s, velocity_history,
    )


def deterministic_ray_coefficient(ray: DetRay, pl_db: float) -> complex:
    """Trace-supplied ray: sqrt(P / PL) * exp(j phase); nothing else applied."""
    amp = math.sqrt(ray.power * 10.0 ** (-pl_db / 10.0))
    return amp * cmath.exp(1j * ray.phase_rad)


def los_coefficient(
    g: BistaticGeometry,
    antenna: AntennaConfig,
    u: int,
    s: int,
    v_ut: np.ndarray,
    wavelength_m: float,
    t_s: float,
) -> complex:
    """LoS path coefficient with the deterministic distance phase."""
    departure = direction_between(g.tx, g.rx)
    arrival = direction_between(g.rx, g.tx)
    factor = _common_ray_factor(
        antenna, u, s, departure, arrival, LOS_POLARIZATION, v_ut, wavelength_m, t_s
    )
    return factor * cmath.exp(-2j * math.pi * g.d3d / wavelength_m)


def assemble_cir(
    env_taps: list[Tap],
    target_stat_taps: list[Tap],
    target_det_taps: list[Tap],
    los: complex | None,
    k_factor_db: float | None,
    pl_db: float,
    sf_db: float,
    t_s: float,
    u: int = 0,
    s: int = 0,
    los_delay_s: float = 0.0,
    det_bypass_scaling: bool = False,
    delay_convention: str = "excess",
    det_delay_convention: str | None = None,
) -> CirSnapshot:
    """Combine per-origin taps into one scaled snapshot.

    With a LoS condition (``los`` not None), the NLoS taps are scaled by
    sqrt(1/(K+1)) and the LoS tap by sqrt(K/(K+1)) at ``los_delay_s``.
    Path loss and shadow fading then scale every tap's amplitude by
    10^(-(PL+SF)/20); deterministic target taps may bypass that scaling
    when the trace already embeds it.
    """
    if det_delay_convention is not None and det_delay_convention != delay_convention:
        raise ConventionError(
            f"deterministic taps use {det_delay_convention!r} delays but the channel "
            f"uses {delay_convention!r}"
        )
    amp_scale = 10.0 ** (-(pl_db + sf_db) / 20.0)
    if los is not None:
        if k_factor_db is None:
            raise ValidationError("LoS assembly needs a K-factor")
        k_lin = 10.0 ** (k_factor_db / 10.0)
        nlos_scale = math.sqrt(1.0 / (k_lin + 1.0))
        los_scale = math.sqrt(k_lin / (k_lin + 1.0))
    else:
        nlos_scale = 1.0
        los_scale = 0.0

    taps: list[Tap] = []
    for tap in env_taps + target_stat_taps:
        taps.append(
            Tap(tap.delay_s, tap.coeff * nlos_scale * amp_scale, tap.origin,
                tap.cluster, tap.ray)
        )
    det_scale = 1.0 if det_bypass_scaling else amp_scale
    for tap in target_det_taps:
        taps.append(
            Tap(tap.delay_s, tap.coeff * det_scale, tap.origin, tap.cluster, tap.ray)
        )
    if los is not None:
        taps.append(
            Tap(los_delay_s, los * los_scale * amp_scale, TapOrigin.LOS, -1, -1)
        )
    return CirSnapshot(t=t_s, u=u, s=s, taps=tuple(taps))


def cir_to_cfr(snapshot: CirSnapshot, n_subcarriers: int, delta_f_hz: float) -> np.ndarray:
    """Channel frequency response H[k] = sum_taps coeff * exp(-j 2 pi k df tau)."""
    if delta_f_hz <= 0:
        raise ValidationError("delta_f_hz must be positive")
    if not snapshot.taps:
        return np.zeros(n_subcarriers, dtype=complex)
    delays = np.array([tap.delay_s for tap in snapshot.taps])
    coeffs = np.array([tap.coeff for tap in snapshot.taps])
    k = np.arange(n_subcarriers)
    return np.exp(-2j * np.pi * np.outer(k, delta_f_hz * delays)) @ coeffs
