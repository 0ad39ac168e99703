"""fbslab: lattice linear random fields and their fractional Brownian sheet limits.

A desk-scale simulation laboratory: product-form coefficient kernels,
dependent innovation fields with a physical dependence measure, rectangle
partial-sum processes, an exact Gaussian sheet oracle, and a harness of
statistical checks that confront the normal and sheet limits with
Monte-Carlo evidence.
"""

from ._version import __version__
from .errors import (
    ConfigurationError,
    DegenerateModelError,
    DegenerateWeightsError,
    DimensionMismatchError,
    FbsLabError,
    NumericError,
    UnsupportedLinkError,
)
from .lattice import Box, Field, unit_box
from .kernels import (
    AxisKernel,
    ProductKernel,
    WeightTable,
    axis_kernel,
    axis_weight_table,
    block_averages,
    coeff,
    product_kernel,
    regularity_stats,
    scaling_ratio,
    weight_table,
)
from .innovations import (
    CoupledSample,
    DependenceSummary,
    Filter,
    InnovationModel,
    Link,
    NoiseLaw,
    coupled_pair,
    delta_filter,
    dependence_measure,
    filter_from_pairs,
    innovation_model,
    link,
    long_run_variance,
    m_truncate,
    noise_law,
    sample_field,
)
from .sums import (
    BlockingDiagnostics,
    PartialSumProcess,
    blocking_decomposition,
    linear_field,
    partial_sum_process,
    sigma_ml,
    tensor_grid_sums,
    weighted_sum,
)
from .fbs_oracle import FbsGrid, build_factors, dense_covariance, fbs_covariance, sample_fbs
from .verify import (
    ExperimentReport,
    clt_check,
    fdd_check,
    moment_fuzz_check,
    moment_inequality_check,
    regularity_check,
    scaling_check,
    sigma_ml_check,
    tightness_check,
)

__all__ = [name for name in dir() if not name.startswith("_")]
