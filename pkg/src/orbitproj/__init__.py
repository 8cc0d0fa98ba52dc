"""Spectral distributions of projected orbital measures.

Monte Carlo sampling, oscillatory-quadrature densities, exact box-spline
densities, and restriction-multiplicity computations for randomized quantum
marginal problems (distinguishable particles, bosons, fermions).
"""

from .alternant import alternant_ratio, hc_sum_kernel, hciz_value, mc_hciz
from .boxspline import BoxSpline, ExactEvaluator, J_exact, density_exact, spline_eval
from .compare import run_compare
from .density import (
    DensityGrid,
    J_at,
    NonGenericSpectrumError,
    PreparedKernel,
    QuadratureParams,
    density_at,
    density_grid,
    normalization_check,
)
from .multiplicity import (
    MultiplicityTable,
    SignedAtomicMeasure,
    build_M,
    build_Xi,
    recover_multiplicity,
    restrict_decompose,
    weight_multiplicities,
    weyl_dim,
)
from .sampler import (
    Histogram,
    NumericalAlarm,
    Spectrum,
    haar_unitary,
    marginals_distinguishable,
    orbit_point,
    project_symmetric,
    run_histogram,
    sample_spectrum,
)
from .weights import (
    CapExceededError,
    Setting,
    SettingError,
    WeightSystem,
    build_weight_system,
    degree_bounds,
    ell,
    min_line_degree,
    vandermonde,
)

__all__ = [name for name in dir() if not name.startswith("_")]
