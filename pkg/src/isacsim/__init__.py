"""Unified bistatic sensing + communication channel simulator.

Extends the TR 38.901 geometry-based stochastic procedure with a larger
generated cluster count, a lowered pruning threshold, conversion of
selected clusters into geometrically coherent sensing targets (statistical
or trace-driven), and a cumulative Doppler phase term for time coherence.
Includes an OFDM link/radar evaluation harness and the ``isac`` CLI.
"""

from .channel import (
    ChannelRealization,
    build_comm_channel,
    build_isac_channel,
    drop_rng,
    symbol_times,
)
from .clusters import (
    Cluster,
    ClusterKind,
    DelayWindow,
    ExplicitIndices,
    RandomK,
    SecondStrongest,
    generate_delays,
    generate_powers,
    prune_clusters,
    select_target_clusters,
)
from .coefficients import (
    CirSnapshot,
    Tap,
    TapOrigin,
    VelocityHistory,
    assemble_cir,
    cir_to_cfr,
    deterministic_ray_coefficient,
    env_ray_coefficient,
    los_coefficient,
    target_ray_coefficient,
)
from .config import (
    AntennaConfig,
    CommScenario,
    EvalConfig,
    GenerationConfig,
    LosCondition,
    LspSet,
    OfdmConfig,
    ScenarioSpec,
    SensingScenario,
    SimulationSetup,
    compute_pathloss,
    draw_shadow_fading,
    dump_effective_config,
    load_scenario,
    load_scenario_file,
)
from .env_rays import (
    EnvRay,
    draw_initial_phases,
    draw_xpr,
    expand_rays,
    generate_cluster_angles,
)
from .errors import (
    ConfigError,
    ConventionError,
    DegenerateEllipseError,
    DegenerateGeometryError,
    DivisionGuardError,
    IncompleteHistoryError,
    InsufficientClustersError,
    ParseError,
    ValidationError,
)
from .evaluate import (
    Detection,
    RangeDopplerMap,
    cfar_detect,
    doppler_spectrogram,
    estimate_range,
    range_doppler_map,
    run_ber_experiment,
    run_sensing_experiment,
    simulate_ofdm_link,
)
from .geometry import (
    SPEED_OF_LIGHT,
    BistaticGeometry,
    Direction,
    bistatic_range_rate,
    direction_between,
    ellipsoid_intersect,
    path_length,
    sample_ellipsoid_point,
    spherical_unit,
)
from .targets import (
    DeterministicTarget,
    ExtendedTarget,
    Placement,
    PointTarget,
    ReflectionType,
    SensingRay,
    TargetSpec,
    advance_targets,
    assign_doppler,
    build_statistical_target,
    ingest_deterministic_rays,
    scale_deterministic_power,
)

__version__ = "0.1.0"
