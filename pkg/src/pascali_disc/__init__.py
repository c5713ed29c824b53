"""Pascali systems on the unit disc and proper discs attached to strictly convex boundaries."""

import os as _os

# PASCALI_THREADS caps the BLAS/OpenMP pools; it must be set before numpy loads them
if _os.environ.get("PASCALI_THREADS", "").isdigit():
    for _key in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ[_key] = _os.environ["PASCALI_THREADS"]

from .cauchy_green import cauchy_transform_quad, transform_T, transform_T0, transform_T_modes
from .errors import *  # noqa: F401,F403
from .geometry import (
    Ball,
    BoundaryData,
    ConstantsBundle,
    ConvexDomain,
    CustomDomain,
    Ellipsoid,
    complex_tangent_section,
    curvature_bounds,
    derive_constants,
    domain_from_config,
    extend_section,
    lambda_margin,
    nearest_boundary,
    scale_section_chord,
)
from .grid import DiscGrid, Field, dbar, eval_boundary, evaluate, lp_norm, make_grid, resample, sup_norm
from .pascali import CoefficientPair, PascaliOperators, apply_psi, apply_psi_hat, dbar_B, invert_psi_hat, q_B
from .diagnostics import max_principle_ratio, ratio_study, similarity_factor_scalar
from .proper_disc import (
    PushTrace,
    RHParams,
    RHResult,
    TraceRecord,
    rh_step,
    run_proper_disc,
    small_disc,
    stage_one,
    stage_two,
)

__version__ = "0.1.0"
