"""Scenario definition, large-scale parameters, antennas, and path loss.

The configuration document is a flat INI file with sections ``scenario``,
``lsp``, ``antenna``, ``generation``, and ``evaluation``.  Every physical
quantity carries its SI unit as a key suffix (``fc_hz``, ``ds_s``, ...).
Built-in large-scale parameter defaults are provided for the UMi street
canyon only; other communication scenarios must spell out the ``lsp``
section explicitly.
"""

from __future__ import annotations

import configparser
import io
import math
import os
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .clusters import (
    DelayWindow,
    ExplicitIndices,
    RandomK,
    SecondStrongest,
    SelectionPolicy,
)
from .errors import ConfigError, ValidationError
from .geometry import SPEED_OF_LIGHT, BistaticGeometry, as_point
from .targets import (
    ConstantVelocity,
    ExtendedTarget,
    Placement,
    PointTarget,
    ReflectionType,
    Stationary,
    TargetSpec,
)

SEED_ENV_VAR = "ISAC_SEED"


class CommScenario(str, Enum):
    UMI = "UMi"
    UMA = "UMa"
    INDOOR_OFFICE = "IndoorOffice"
    RMA = "RMa"
    INF = "InF"
    CUSTOM = "Custom"


class SensingScenario(str, Enum):
    TARGET_LOCALIZATION = "TargetLocalization"
    BEHAVIOR_RECOGNITION = "BehaviorRecognition"
    BREATH_DETECTION = "BreathDetection"
    INVASION_DETECTION = "InvasionDetection"
    ENVIRONMENT_IMAGING = "EnvironmentImaging"


class LosCondition(str, Enum):
    LOS = "LoS"
    NLOS = "NLoS"


class AntennaPattern(str, Enum):
    ISOTROPIC = "Isotropic"
    PATCH_38901 = "Patch38901"


@dataclass(frozen=True, eq=False)
class ScenarioSpec:
    """Communication scenario + sensing scenario + link geometry + waveform band."""

    comm_scenario: CommScenario = CommScenario.UMI
    sensing_scenario: SensingScenario = SensingScenario.TARGET_LOCALIZATION
    fc_hz: float = 28e9
    bandwidth_hz: float = 792 * 120e3
    tx_pos: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 10.0]))
    rx_pos: np.ndarray = field(default_factory=lambda: np.array([50.0, 0.0, 1.5]))
    los_condition: LosCondition = LosCondition.LOS
    v_ut: np.ndarray = field(default_factory=lambda: np.zeros(3))
    pathloss_override_db: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "tx_pos", as_point(self.tx_pos))
        object.__setattr__(self, "rx_pos", as_point(self.rx_pos))
        object.__setattr__(self, "v_ut", as_point(self.v_ut))
        if not (0.5e9 <= self.fc_hz <= 100e9):
            raise ValidationError(
                f"scenario.fc_hz {self.fc_hz:g} outside the supported 0.5-100 GHz range"
            )
        if self.bandwidth_hz <= 0:
            raise ValidationError("scenario.bandwidth_hz must be positive")
        if np.array_equal(self.tx_pos, self.rx_pos):
            raise ValidationError("scenario.tx_pos_m and scenario.rx_pos_m coincide")

    @property
    def d3d(self) -> float:
        return float(np.linalg.norm(self.rx_pos - self.tx_pos))

    @property
    def d2d(self) -> float:
        return float(np.linalg.norm(self.rx_pos[:2] - self.tx_pos[:2]))

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.fc_hz

    def geometry(self) -> BistaticGeometry:
        return BistaticGeometry(self.tx_pos, self.rx_pos)


@dataclass(frozen=True)
class LspSet:
    """Large-scale parameters driving the small-scale generation."""

    ds_s: float
    r_tau: float
    zeta_db: float
    k_factor_db: float
    asa_deg: float
    asd_deg: float
    zsa_deg: float
    zsd_deg: float
    xpr_mu_db: float
    xpr_sigma_db: float
    sf_sigma_db: float
    # per-cluster rms spreads applied to the ray offset table
    c_asa_deg: float = 17.0
    c_asd_deg: float = 3.0
    c_zsa_deg: float = 7.0
    c_zsd_deg: float = 3.0

    def __post_init__(self):
        if self.ds_s <= 0:
            raise ValidationError("lsp.ds_s must be positive")
        if self.r_tau <= 1:
            raise ValidationError("lsp.r_tau must exceed 1")
        if self.zeta_db < 0:
            raise ValidationError("lsp.zeta_db must be non-negative")
        for name in ("asa_deg", "asd_deg", "zsa_deg", "zsd_deg"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"lsp.{name} must be positive")
        if self.sf_sigma_db < 0:
            raise ValidationError("lsp.sf_sigma_db must be non-negative")


@dataclass(frozen=True, eq=False)
class AntennaConfig:
    """Element layout (positions in wavelengths) and per-element field pattern."""

    pattern: AntennaPattern = AntennaPattern.ISOTROPIC
    polarization_slant_deg: float = 0.0
    element_positions_tx: np.ndarray = field(default_factory=lambda: np.zeros((1, 3)))
    element_positions_rx: np.ndarray = field(default_factory=lambda: np.zeros((1, 3)))

    def __post_init__(self):
        for name in ("element_positions_tx", "element_positions_rx"):
            arr = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            if arr.ndim != 2 or arr.shape[1] != 3 or arr.shape[0] < 1:
                raise ValidationError(f"antenna.{name} must be an (n, 3) array with n >= 1")
            object.__setattr__(self, name, arr)

    @property
    def num_tx_elements(self) -> int:
        return self.element_positions_tx.shape[0]

    @property
    def num_rx_elements(self) -> int:
        return self.element_positions_rx.shape[0]


@dataclass(frozen=True)
class GenerationConfig:
    """Cluster generation, pruning, target selection, and time evolution knobs."""

    n_isac: int = 24
    prune_threshold_db: float | None = -50.0
    target_selection: SelectionPolicy | None = RandomK(3)
    seed: int = 1
    m_rays: int = 20
    allow_equispaced_offsets: bool = True
    placement: Placement = Placement.ANGLE_PRIORITY
    target_model: PointTarget | ExtendedTarget = PointTarget()
    reflection_types: tuple[ReflectionType, ...] = (ReflectionType.T1,)
    sub_cluster_weights: tuple[float, ...] | None = None
    target_speed_means_mps: tuple[float, ...] = (1.0, -10.0, 30.0)
    target_speed_std_mps: float = 1.0
    absolute_delay_mode: bool = False
    cpi_s: float = 50 * 8.92e-6
    det_bypass_scaling: bool = False
    regenerate_per_drop: bool = False
    env_point_box: tuple[float, ...] | None = None  # (x0,x1,y0,y1,z0,z1); None = auto
    env_min_clearance_m: float = 0.5

    def __post_init__(self):
        if self.n_isac < 2:
            raise ValidationError("generation.n_isac must be at least 2")
        if self.prune_threshold_db is not None and self.prune_threshold_db >= 0:
            raise ValidationError("generation.prune_threshold_db must be negative")
        if self.m_rays < 1:
            raise ValidationError("generation.m_rays must be at least 1")
        if self.cpi_s <= 0:
            raise ValidationError("generation.cpi_s must be positive")

    def target_spec(self, cluster_slot: int, rng: np.random.Generator) -> TargetSpec:
        """Concrete per-target spec; the slot picks the speed distribution."""
        means = self.target_speed_means_mps
        mean = means[cluster_slot % len(means)] if means else 0.0
        speed = rng.normal(mean, self.target_speed_std_mps)
        heading = rng.uniform(-math.pi, math.pi)
        velocity = np.array([speed * math.cos(heading), speed * math.sin(heading), 0.0])
        motion = Stationary() if speed == 0.0 else ConstantVelocity(velocity)
        return TargetSpec(
            target_model=self.target_model,
            reflection_types=self.reflection_types,
            sub_cluster_power_weights=self.sub_cluster_weights,
            placement=self.placement,
            motion=motion,
        )


@dataclass(frozen=True)
class OfdmConfig:
    """OFDM waveform used by the link and sensing evaluations."""

    n_subcarriers: int = 792
    delta_f_hz: float = 120e3
    symbol_duration_s: float = 8.92e-6
    modulation: str = "QPSK"
    pilot_period_symbols: int = 7

    def __post_init__(self):
        if self.n_subcarriers < 1 or self.pilot_period_symbols < 1:
            raise ValidationError("evaluation counts must be at least 1")
        if self.delta_f_hz <= 0:
            raise ValidationError("evaluation.delta_f_hz must be positive")
        if self.symbol_duration_s < 1.0 / self.delta_f_hz - 1e-15:
            raise ValidationError(
                "evaluation.symbol_duration_s shorter than the useful symbol 1/delta_f"
            )


@dataclass(frozen=True)
class EvalConfig:
    """Monte-Carlo evaluation settings beyond the waveform itself."""

    modulations: tuple[str, ...] = ("QPSK", "QAM16")
    frame_symbols: int = 57
    cpi_symbols: int = 50
    cfar_pfa: float = 1e-5
    cfar_guard_cells: int = 2
    cfar_train_cells: int = 8
    spectrogram_window_symbols: int = 64
    spectrogram_hop_symbols: int = 16
    target_power_rel_los_db: tuple[float, ...] | None = None
    target_eff_velocity_mps: tuple[float, ...] | None = None
    target_delay_override_s: tuple[float, ...] | None = None

    def __post_init__(self):
        if not (0.0 < self.cfar_pfa < 1.0):
            raise ValidationError("evaluation.cfar_pfa must be in (0, 1)")
        if self.frame_symbols < 2 or self.cpi_symbols < 2:
            raise ValidationError("evaluation frame/cpi symbol counts must be >= 2")


@dataclass(frozen=True)
class SimulationSetup:
    """All validated configuration objects for one simulation campaign."""

    scenario: ScenarioSpec
    lsp: LspSet
    antenna: AntennaConfig
    generation: GenerationConfig
    ofdm: OfdmConfig
    evaluation: EvalConfig

    def to_config_text(self) -> str:
        return dump_effective_config(self)


# --- built-in UMi street canyon defaults (TR 38.901 tables 7.5-6 / 7.4.1-1) ---


def umi_default_lsp(spec: ScenarioSpec) -> LspSet:
    """Median UMi street-canyon LSPs at the scenario's carrier frequency."""
    fc_ghz = spec.fc_hz / 1e9
    lg = math.log10(1.0 + fc_ghz)
    if spec.los_condition is LosCondition.LOS:
        return LspSet(
            ds_s=10.0 ** (-0.24 * lg - 7.14),
            r_tau=3.0,
            zeta_db=3.0,
            k_factor_db=9.0,
            asa_deg=10.0 ** (-0.08 * lg + 1.73),
            asd_deg=10.0 ** (-0.05 * lg + 1.21),
            zsa_deg=10.0 ** (-0.1 * lg + 0.73),
            zsd_deg=_umi_zsd_deg(spec, los=True),
            xpr_mu_db=9.0,
            xpr_sigma_db=3.0,
            sf_sigma_db=4.0,
            c_asa_deg=17.0,
            c_asd_deg=3.0,
            c_zsa_deg=7.0,
            c_zsd_deg=3.0,
        )
    return LspSet(
        ds_s=10.0 ** (-0.24 * lg - 6.83),
        r_tau=2.1,
        zeta_db=3.0,
        k_factor_db=0.0,  # unused in NLoS assembly
        asa_deg=10.0 ** (-0.08 * lg + 1.81),
        asd_deg=10.0 ** (-0.23 * lg + 1.53),
        zsa_deg=10.0 ** (-0.04 * lg + 0.92),
        zsd_deg=_umi_zsd_deg(spec, los=False),
        xpr_mu_db=8.0,
        xpr_sigma_db=3.0,
        sf_sigma_db=7.82,
        c_asa_deg=22.0,
        c_asd_deg=10.0,
        c_zsa_deg=7.0,
        c_zsd_deg=3.0,
    )


def _umi_zsd_deg(spec: ScenarioSpec, los: bool) -> float:
    d2d_km = spec.d2d / 1000.0
    h_ut = float(spec.rx_pos[2])
    h_bs = float(spec.tx_pos[2])
    if los:
        mu = max(-0.21, -14.8 * d2d_km + 0.01 * abs(h_ut - h_bs) + 0.83)
    else:
        mu = max(-0.5, -3.1 * d2d_km + 0.01 * max(h_ut - h_bs, 0.0) + 0.2)
    return 10.0**mu


UMI_NUM_CLUSTERS = {LosCondition.LOS: 12, LosCondition.NLOS: 19}


# --- path loss and shadow fading -------------------------------------------


def compute_pathloss(spec: ScenarioSpec) -> float:
    """Path loss in dB for the scenario's link geometry.

    Custom scenarios use free space; UMi uses the street-canyon formulas;
    all other scenarios require ``scenario.pathloss_override_db``.
    """
    if spec.comm_scenario is CommScenario.CUSTOM:
        return free_space_pathloss(spec.d3d, spec.fc_hz)
    if spec.comm_scenario is CommScenario.UMI:
        return umi_street_canyon_pathloss(spec)
    if spec.pathloss_override_db is None:
        raise ConfigError(
            f"scenario.pathloss_override_db required for {spec.comm_scenario.value}"
        )
    return spec.pathloss_override_db


def free_space_pathloss(d3d_m: float, fc_hz: float) -> float:
    return 20.0 * math.log10(4.0 * math.pi * d3d_m * fc_hz / SPEED_OF_LIGHT)


def umi_street_canyon_pathloss(spec: ScenarioSpec) -> float:
    """UMi street-canyon path loss (TR 38.901 table 7.4.1-1)."""
    fc_ghz = spec.fc_hz / 1e9
    d3d = spec.d3d
    d2d = spec.d2d
    h_bs = float(spec.tx_pos[2])
    h_ut = float(spec.rx_pos[2])
    # breakpoint with 1.0 m effective environment height
    d_bp = 4.0 * max(h_bs - 1.0, 0.0) * max(h_ut - 1.0, 0.0) * spec.fc_hz / SPEED_OF_LIGHT
    if d2d <= d_bp or d_bp == 0.0:
        pl_los = 32.4 + 21.0 * math.log10(d3d) + 20.0 * math.log10(fc_ghz)
    else:
        pl_los = (
            32.4
            + 40.0 * math.log10(d3d)
            + 20.0 * math.log10(fc_ghz)
            - 9.5 * math.log10(d_bp**2 + (h_bs - h_ut) ** 2)
        )
    if spec.los_condition is LosCondition.LOS:
        return pl_los
    pl_nlos = 35.3 * math.log10(d3d) + 22.4 + 21.3 * math.log10(fc_ghz) - 0.3 * (h_ut - 1.5)
    return max(pl_los, pl_nlos)


def draw_shadow_fading(lsp: LspSet, rng: np.random.Generator) -> float:
    """Zero-mean Gaussian shadow fading draw in dB."""
    if lsp.sf_sigma_db == 0.0:
        return 0.0
    return float(rng.normal(0.0, lsp.sf_sigma_db))


# --- config document parsing ------------------------------------------------

_SECTIONS = ("scenario", "lsp", "antenna", "generation", "evaluation")


def load_scenario(config_text: str = "") -> SimulationSetup:
    """Parse a config document and fill defaults.

    An empty document yields the all-defaults UMi + target-localization
    setup.  ``ISAC_SEED`` in the environment overrides ``generation.seed``.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(config_text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config document: {exc}") from exc
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")

    sc = _SectionReader(parser, "scenario")
    scenario = ScenarioSpec(
        comm_scenario=sc.enum("comm_scenario", CommScenario, CommScenario.UMI),
        sensing_scenario=sc.enum(
            "sensing_scenario", SensingScenario, SensingScenario.TARGET_LOCALIZATION
        ),
        fc_hz=sc.number("fc_hz", 28e9),
        bandwidth_hz=sc.number("bandwidth_hz", 792 * 120e3),
        tx_pos=sc.vector("tx_pos_m", (0.0, 0.0, 10.0)),
        rx_pos=sc.vector("rx_pos_m", (50.0, 0.0, 1.5)),
        los_condition=sc.enum("los_condition", LosCondition, LosCondition.LOS),
        v_ut=sc.vector("v_ut_mps", (0.0, 0.0, 0.0)),
        pathloss_override_db=sc.number("pathloss_override_db", None),
    )

    lr = _SectionReader(parser, "lsp")
    if scenario.comm_scenario in (CommScenario.UMI, CommScenario.CUSTOM):
        base = umi_default_lsp(scenario)
    else:
        base = None
        required = (
            "ds_s", "r_tau", "zeta_db", "k_factor_db", "asa_deg", "asd_deg",
            "zsa_deg", "zsd_deg", "xpr_mu_db", "xpr_sigma_db", "sf_sigma_db",
        )
        missing = [k for k in required if not lr.has(k)]
        if missing:
            raise ConfigError(
                f"scenario {scenario.comm_scenario.value} has no built-in LSP table; "
                f"missing lsp keys: {', '.join(missing)}"
            )
    lsp = LspSet(
        ds_s=lr.number("ds_s", base.ds_s if base else None),
        r_tau=lr.number("r_tau", base.r_tau if base else None),
        zeta_db=lr.number("zeta_db", base.zeta_db if base else None),
        k_factor_db=lr.number("k_factor_db", base.k_factor_db if base else None),
        asa_deg=lr.number("asa_deg", base.asa_deg if base else None),
        asd_deg=lr.number("asd_deg", base.asd_deg if base else None),
        zsa_deg=lr.number("zsa_deg", base.zsa_deg if base else None),
        zsd_deg=lr.number("zsd_deg", base.zsd_deg if base else None),
        xpr_mu_db=lr.number("xpr_mu_db", base.xpr_mu_db if base else None),
        xpr_sigma_db=lr.number("xpr_sigma_db", base.xpr_sigma_db if base else None),
        sf_sigma_db=lr.number("sf_sigma_db", base.sf_sigma_db if base else None),
        c_asa_deg=lr.number("c_asa_deg", base.c_asa_deg if base else 10.0),
        c_asd_deg=lr.number("c_asd_deg", base.c_asd_deg if base else 5.0),
        c_zsa_deg=lr.number("c_zsa_deg", base.c_zsa_deg if base else 7.0),
        c_zsd_deg=lr.number("c_zsd_deg", base.c_zsd_deg if base else 3.0),
    )

    ar = _SectionReader(parser, "antenna")
    antenna = AntennaConfig(
        pattern=ar.enum("pattern", AntennaPattern, AntennaPattern.ISOTROPIC),
        polarization_slant_deg=ar.number("polarization_slant_deg", 0.0),
        element_positions_tx=ar.matrix("tx_element_positions_wl", ((0.0, 0.0, 0.0),)),
        element_positions_rx=ar.matrix("rx_element_positions_wl", ((0.0, 0.0, 0.0),)),
    )
    for count_key, actual in (
        ("num_tx_elements", antenna.num_tx_elements),
        ("num_rx_elements", antenna.num_rx_elements),
    ):
        declared = ar.number(count_key, None)
        if declared is not None and int(declared) != actual:
            raise ConfigError(
                f"antenna.{count_key}={int(declared)} does not match "
                f"{actual} configured element positions"
            )

    gr = _SectionReader(parser, "generation")
    n_comm = UMI_NUM_CLUSTERS.get(scenario.los_condition, 12)
    if scenario.comm_scenario not in (CommScenario.UMI, CommScenario.CUSTOM) and not gr.has(
        "n_isac"
    ):
        raise ConfigError(
            f"generation.n_isac required for scenario {scenario.comm_scenario.value}"
        )
    seed = int(gr.number("seed", 1))
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        try:
            seed = int(env_seed)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {env_seed!r}") from exc
    generation = GenerationConfig(
        n_isac=int(gr.number("n_isac", 2 * n_comm)),
        prune_threshold_db=gr.threshold("prune_threshold_db", -50.0),
        target_selection=gr.policy("target_selection", RandomK(3)),
        seed=seed,
        m_rays=int(gr.number("m_rays", 20)),
        allow_equispaced_offsets=gr.boolean("allow_equispaced_offsets", True),
        placement=gr.enum("placement", Placement, Placement.ANGLE_PRIORITY),
        target_model=gr.target_model("target_model", PointTarget()),
        reflection_types=gr.reflection_types("reflection_types", (ReflectionType.T1,)),
        sub_cluster_weights=gr.float_tuple("sub_cluster_weights", None),
        target_speed_means_mps=gr.float_tuple("target_speed_means_mps", (1.0, -10.0, 30.0)),
        target_speed_std_mps=gr.number("target_speed_std_mps", 1.0),
        absolute_delay_mode=gr.boolean("absolute_delay_mode", False),
        cpi_s=gr.number("cpi_s", 50 * 8.92e-6),
        det_bypass_scaling=gr.boolean("det_bypass_scaling", False),
        regenerate_per_drop=gr.boolean("regenerate_per_drop", False),
        env_point_box=gr.float_tuple("env_point_box_m", None),
        env_min_clearance_m=gr.number("env_min_clearance_m", 0.5),
    )

    er = _SectionReader(parser, "evaluation")
    ofdm = OfdmConfig(
        n_subcarriers=int(er.number("n_subcarriers", 792)),
        delta_f_hz=er.number("delta_f_hz", 120e3),
        symbol_duration_s=er.number("symbol_duration_s", 8.92e-6),
        modulation=er.string("modulation", "QPSK"),
        pilot_period_symbols=int(er.number("pilot_period_symbols", 7)),
    )
    evaluation = EvalConfig(
        modulations=gr_tuple_str(er.string("modulations", "QPSK,QAM16")),
        frame_symbols=int(er.number("frame_symbols", 57)),
        cpi_symbols=int(er.number("cpi_symbols", 50)),
        cfar_pfa=er.number("cfar_pfa", 1e-5),
        cfar_guard_cells=int(er.number("cfar_guard_cells", 2)),
        cfar_train_cells=int(er.number("cfar_train_cells", 8)),
        spectrogram_window_symbols=int(er.number("spectrogram_window_symbols", 64)),
        spectrogram_hop_symbols=int(er.number("spectrogram_hop_symbols", 16)),
        target_power_rel_los_db=er.float_tuple("target_power_rel_los_db", None),
        target_eff_velocity_mps=er.float_tuple("target_eff_velocity_mps", None),
        target_delay_override_s=er.float_tuple("target_delay_override_s", None),
    )

    return SimulationSetup(scenario, lsp, antenna, generation, ofdm, evaluation)


def load_scenario_file(path: str) -> SimulationSetup:
    with open(path, "r", encoding="utf-8") as fh:
        return load_scenario(fh.read())


def gr_tuple_str(text: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in text.split(",") if part.strip())


class _SectionReader:
    """Typed accessors for one config section with field-path error messages."""

    def __init__(self, parser: configparser.ConfigParser, section: str):
        self._parser = parser
        self._section = section

    def has(self, key: str) -> bool:
        return self._parser.has_option(self._section, key)

    def _raw(self, key: str) -> str | None:
        if not self.has(key):
            return None
        return self._parser.get(self._section, key).strip()

    def _fail(self, key: str, detail: str):
        raise ConfigError(f"{self._section}.{key}: {detail}")

    def string(self, key: str, default: str) -> str:
        raw = self._raw(key)
        return default if raw is None else raw

    def number(self, key: str, default):
        raw = self._raw(key)
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError:
            self._fail(key, f"expected a number, got {raw!r}")

    def boolean(self, key: str, default: bool) -> bool:
        raw = self._raw(key)
        if raw is None:
            return default
        low = raw.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        self._fail(key, f"expected a boolean, got {raw!r}")

    def enum(self, key: str, enum_cls, default):
        raw = self._raw(key)
        if raw is None:
            return default
        for member in enum_cls:
            if member.value.lower() == raw.lower() or member.name.lower() == raw.lower():
                return member
        choices = ", ".join(m.value for m in enum_cls)
        self._fail(key, f"unknown value {raw!r}; choices: {choices}")

    def vector(self, key: str, default) -> np.ndarray:
        raw = self._raw(key)
        if raw is None:
            return np.asarray(default, dtype=float)
        try:
            parts = [float(p) for p in raw.split(",")]
        except ValueError:
            self._fail(key, f"expected comma-separated numbers, got {raw!r}")
        if len(parts) != 3:
            self._fail(key, f"expected 3 components, got {len(parts)}")
        return np.asarray(parts, dtype=float)

    def matrix(self, key: str, default) -> np.ndarray:
        raw = self._raw(key)
        if raw is None:
            return np.asarray(default, dtype=float)
        rows = []
        for row_text in raw.split(";"):
            row_text = row_text.strip()
            if not row_text:
                continue
            try:
                row = [float(p) for p in row_text.split(",")]
            except ValueError:
                self._fail(key, f"expected numeric triples, got {row_text!r}")
            if len(row) != 3:
                self._fail(key, f"each element position needs 3 components: {row_text!r}")
            rows.append(row)
        if not rows:
            self._fail(key, "no element positions given")
        return np.asarray(rows, dtype=float)

    def float_tuple(self, key: str, default):
        raw = self._raw(key)
        if raw is None:
            return default
        if raw.lower() in ("none", "equal", ""):
            return None
        try:
            return tuple(float(p) for p in raw.split(",") if p.strip())
        except ValueError:
            self._fail(key, f"expected comma-separated numbers, got {raw!r}")

    def threshold(self, key: str, default):
        raw = self._raw(key)
        if raw is None:
            return default
        if raw.lower() == "none":
            return None
        try:
            return float(raw)
        except ValueError:
            self._fail(key, f"expected a number or 'none', got {raw!r}")

    def policy(self, key: str, default):
        raw = self._raw(key)
        if raw is None:
            return default
        return parse_selection_policy(raw, f"{self._section}.{key}")

    def target_model(self, key: str, default):
        raw = self._raw(key)
        if raw is None:
            return default
        low = raw.lower()
        if low == "point":
            return PointTarget()
        if low.startswith("extended:"):
            parts = low.split(":")
            if len(parts) != 3:
                self._fail(key, "extended model syntax is extended:<k_rays>:<sigma_m>")
            try:
                return ExtendedTarget(k_rays=int(parts[1]), sigma_ext_m=float(parts[2]))
            except ValueError:
                self._fail(key, f"bad extended model parameters in {raw!r}")
        self._fail(key, f"unknown target model {raw!r}")

    def reflection_types(self, key: str, default):
        raw = self._raw(key)
        if raw is None:
            return default
        types = []
        for part in raw.split(","):
            part = part.strip().upper()
            if not part:
                continue
            try:
                types.append(ReflectionType(part))
            except ValueError:
                self._fail(key, f"unknown reflection type {part!r}")
        if not types:
            self._fail(key, "at least one reflection type required")
        return tuple(types)


def parse_selection_policy(text: str, where: str = "target_selection") -> SelectionPolicy | None:
    """Parse a target-selection policy string.

    Accepted forms: ``none``, ``random_k:<k>``, ``second_strongest``,
    ``delay_window:<tau_min_s>:<tau_max_s>[:<k>]``, ``explicit:<i>,<j>,...``.
    """
    low = text.strip().lower()
    try:
        if low == "none":
            return None
        if low == "second_strongest":
            return SecondStrongest()
        if low.startswith("random_k:"):
            return RandomK(int(low.split(":")[1]))
        if low.startswith("delay_window:"):
            parts = low.split(":")[1:]
            if len(parts) == 2:
                return DelayWindow(float(parts[0]), float(parts[1]))
            if len(parts) == 3:
                return DelayWindow(float(parts[0]), float(parts[1]), int(parts[2]))
            raise ValueError("expected 2 or 3 parameters")
        if low.startswith("explicit:"):
            idx = tuple(int(p) for p in low.split(":")[1].split(",") if p.strip())
            return ExplicitIndices(idx)
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"{where}: cannot parse policy {text!r} ({exc})") from exc
    raise ConfigError(f"{where}: unknown policy {text!r}")


def _policy_to_text(policy: SelectionPolicy | None) -> str:
    if policy is None:
        return "none"
    if isinstance(policy, RandomK):
        return f"random_k:{policy.k}"
    if isinstance(policy, SecondStrongest):
        return "second_strongest"
    if isinstance(policy, DelayWindow):
        base = f"delay_window:{policy.tau_min_s!r}:{policy.tau_max_s!r}"
        return base if policy.k is None else f"{base}:{policy.k}"
    if isinstance(policy, ExplicitIndices):
        return "explicit:" + ",".join(str(i) for i in policy.indices)
    raise TypeError(f"unknown policy type {type(policy)!r}")


def dump_effective_config(setup: SimulationSetup) -> str:
    """Serialize a setup back to config-document form.

    Round-trips: ``load_scenario(dump_effective_config(s))`` rebuilds
    identical objects.
    """
    p = configparser.ConfigParser()
    sc, lsp, ant, gen, ofdm, ev = (
        setup.scenario, setup.lsp, setup.antenna, setup.generation, setup.ofdm,
        setup.evaluation,
    )
    p["scenario"] = {
        "comm_scenario": sc.comm_scenario.value,
        "sensing_scenario": sc.sensing_scenario.value,
        "fc_hz": repr(sc.fc_hz),
        "bandwidth_hz": repr(sc.bandwidth_hz),
        "tx_pos_m": _vec_text(sc.tx_pos),
        "rx_pos_m": _vec_text(sc.rx_pos),
        "los_condition": sc.los_condition.value,
        "v_ut_mps": _vec_text(sc.v_ut),
    }
    if sc.pathloss_override_db is not None:
        p["scenario"]["pathloss_override_db"] = repr(sc.pathloss_override_db)
    p["lsp"] = {
        key: repr(float(getattr(lsp, key)))
        for key in (
            "ds_s", "r_tau", "zeta_db", "k_factor_db", "asa_deg", "asd_deg",
            "zsa_deg", "zsd_deg", "xpr_mu_db", "xpr_sigma_db", "sf_sigma_db",
            "c_asa_deg", "c_asd_deg", "c_zsa_deg", "c_zsd_deg",
        )
    }
    p["antenna"] = {
        "pattern": ant.pattern.value,
        "polarization_slant_deg": repr(ant.polarization_slant_deg),
        "tx_element_positions_wl": _matrix_text(ant.element_positions_tx),
        "rx_element_positions_wl": _matrix_text(ant.element_positions_rx),
    }
    model = gen.target_model
    model_text = (
        "point"
        if isinstance(model, PointTarget)
        else f"extended:{model.k_rays}:{model.sigma_ext_m!r}"
    )
    p["generation"] = {
        "n_isac": str(gen.n_isac),
        "prune_threshold_db": "none" if gen.prune_threshold_db is None
        else repr(gen.prune_threshold_db),
        "target_selection": _policy_to_text(gen.target_selection),
        "seed": str(gen.seed),
        "m_rays": str(gen.m_rays),
        "allow_equispaced_offsets": str(gen.allow_equispaced_offsets).lower(),
        "placement": gen.placement.value,
        "target_model": model_text,
        "reflection_types": ",".join(t.value for t in gen.reflection_types),
        "sub_cluster_weights": _tuple_text(gen.sub_cluster_weights),
        "target_speed_means_mps": _tuple_text(gen.target_speed_means_mps),
        "target_speed_std_mps": repr(gen.target_speed_std_mps),
        "absolute_delay_mode": str(gen.absolute_delay_mode).lower(),
        "cpi_s": repr(gen.cpi_s),
        "det_bypass_scaling": str(gen.det_bypass_scaling).lower(),
        "regenerate_per_drop": str(gen.regenerate_per_drop).lower(),
        "env_point_box_m": _tuple_text(gen.env_point_box),
        "env_min_clearance_m": repr(gen.env_min_clearance_m),
    }
    p["evaluation"] = {
        "n_subcarriers": str(ofdm.n_subcarriers),
        "delta_f_hz": repr(ofdm.delta_f_hz),
        "symbol_duration_s": repr(ofdm.symbol_duration_s),
        "modulation": ofdm.modulation,
        "pilot_period_symbols": str(ofdm.pilot_period_symbols),
        "modulations": ",".join(ev.modulations),
        "frame_symbols": str(ev.frame_symbols),
        "cpi_symbols": str(ev.cpi_symbols),
        "cfar_pfa": repr(ev.cfar_pfa),
        "cfar_guard_cells": str(ev.cfar_guard_cells),
        "cfar_train_cells": str(ev.cfar_train_cells),
        "spectrogram_window_symbols": str(ev.spectrogram_window_symbols),
        "spectrogram_hop_symbols": str(ev.spectrogram_hop_symbols),
        "target_power_rel_los_db": _tuple_text(ev.target_power_rel_los_db),
        "target_eff_velocity_mps": _tuple_text(ev.target_eff_velocity_mps),
        "target_delay_override_s": _tuple_text(ev.target_delay_override_s),
    }
    buf = io.StringIO()
    p.write(buf)
    return buf.getvalue()


def _vec_text(v: np.ndarray) -> str:
    return ", ".join(repr(float(x)) for x in v)


def _matrix_text(m: np.ndarray) -> str:
    return "; ".join(_vec_text(row) for row in m)


def _tuple_text(t) -> str:
    if t is None:
        return "none"
    return ", ".join(repr(float(x)) for x in t)
