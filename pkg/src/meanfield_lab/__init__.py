"""Particle and mean-field simulation of agents with mixed strategies."""

from .agent_state import (
    AgentState,
    Ensemble,
    TrajectoryBundle,
    path_sup_cost,
    state_norm,
    time_marginal,
    w2_path,
    w_product,
)
from .chaos import CouplingResult, SweepResult, chaos_sweep, coupled_run, empirical_law_convergence
from .config import ExperimentConfig
from .errors import (
    ConfigError,
    ContractViolation,
    DivergenceError,
    GeometryViolation,
    InputError,
    MeanfieldLabError,
    OracleRefused,
)
from .fields import (
    BuiltinField,
    FieldSet,
    StateSampler,
    apply_G,
    builtin_field,
    estimate_lipschitz,
    validate_geometry,
)
from .meanfield import FixedPointReport, LawEnsemble, apply_S, fixed_point, solve_auxiliary
from .sde_engine import BrownianSource, InitialLaw, SimConfig, solve_n_particle, step, sup_moment
from .strategy_space import (
    MixedStrategy,
    PureStrategySpace,
    ZeroMassMeasure,
    bl_norm,
    bl_norm_batch,
    convex_step,
    w1_strategy,
)

__version__ = "0.1.0"
