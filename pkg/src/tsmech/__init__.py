"""Time-separated stochastic mechanics for material-point models.

The stochastic response of a material with random parameters is split into
a deterministic trajectory plus time-dependent tangents contracted with
time-independent fluctuations. Expectation and variance then follow from a
single extended simulation instead of many Monte Carlo runs.
"""
from .config import RunConfig, parse_config, read_config
from .engine import (ExtendedState, MaterialModel, StatSeries, TimeGrid, TSMTiming, Trajectory,
                     integrate_extended, postprocess, run_tsm, state_statistics)
from .errors import (DegeneratePhase, InsufficientSamples, NonFiniteState, OutOfDomain,
                     ParseError, RetryExhausted, ShapeMismatch, TSMError,
                     UnsupportedDistribution, ValidationError)
from .loadcases import LoadCase, load_table_csv, strain_at
from .models import DamageModel, PhaseModel, ViscoplasticModel, build_model
from .montecarlo import MCStats, mc_standard_error, run_mc
from .pipeline import run_pipeline, run_verify
from .stochastic import (CorrelationSpec, FluctuatingScalar, MomentSet, StochasticParams,
                         analytic_gaussian_moments, estimate_moments)
from .verification import fd_tangent_check, frozen_state_sampling_check, linear_surrogate_stats

__version__ = "0.1.0"
