"""Surrogate models for a two-vehicle emergency-braking scenario.

The toolkit covers the whole pipeline: a deterministic reference simulator
with a constrained uniform parameter sampler, dataset generation and
persistence, six regression experts predicting full output time series,
per-timestep hybrid selection and exponentially weighted aggregation, and
the benchmark reports.
"""

from aebsurro.sim import (
    CHANNELS,
    PARAM_NAMES,
    ParameterPriors,
    ParameterVector,
    ScenarioSeries,
    SimConfig,
    check_constraints,
    sample_parameters,
    simulate,
)

__version__ = "0.1.0"

__all__ = [
    "CHANNELS",
    "PARAM_NAMES",
    "ParameterPriors",
    "ParameterVector",
    "ScenarioSeries",
    "SimConfig",
    "check_constraints",
    "sample_parameters",
    "simulate",
]
