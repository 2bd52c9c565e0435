"""Goodness-of-fit tests for Haar measure on the compact classical groups."""

from .errors import (
    DegenerateInput,
    DegenerateSpectrum,
    EmptySample,
    HaarTestError,
    MixedDeterminants,
    NonPositiveParameter,
    NotOrthogonal,
    NumericalError,
    PairingFailure,
)
from .harness import (
    ExperimentConfig,
    StatisticSpec,
    SweepReport,
    emit_report,
    estimate_power,
    load_report,
    run_sweep,
)
from .kernels import KernelParams, cauchy_kernel, kernel_series_oracle, uq_weight_sum
from .linalg import GroupElement, cos_spectrum, read_sample, validate_group_element, write_sample
from .nulldist import (
    NullMixtureSpec,
    ad_ksample,
    local_power,
    partition_count,
    sample_null_mixture,
    tz_null_moments,
    tz_null_quantile,
)
from .rng import RngStream
from .samplers import SamplerSpec, draw_sample, haar_orthogonal, jor_transform, kac_walk, reflection_walk
from .statistics import (
    ExpFamParams,
    StatisticResult,
    expfam_statistic,
    gine,
    rayleigh,
    selberg_derivatives,
    t_z,
    trace_power,
    u_zq,
)

__version__ = "0.1.0"
