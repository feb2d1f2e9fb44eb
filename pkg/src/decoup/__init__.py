"""Cap decompositions for finite-type graphs ``x_n = sum_j phi_j(xi_j)``,
parabolic rescaling, and numerical decoupling-ratio experiments."""

from .dyadic import Dyadic, dyadic_add, dyadic_mul, parse_dyadic, pow2
from .geometry import Box, Cap, Cube, Curved, Flat, Interval, cap_volume, caps_disjoint_interiors
from .surface import PhaseSpec, SurfaceSpec, check_m_nondegenerate, graph_point, phase_total
from .partition import (
    ScaleError,
    cap_family,
    caps_in,
    coarse_caps,
    interval_family,
    omega_regions,
    verify_cover,
)
from .rescale import (
    affine_for_cap,
    image_box,
    rescale_cap,
    rescale_surface,
    verify_membership_claim,
)
from .extension import (
    GridFunction,
    Lattice,
    NyquistError,
    SampledField,
    SeparableFunction,
    extend_direct,
    extend_separable,
    nyquist_lattice,
    weight_eval,
)
from .analysis import (
    LatticeSpec,
    RatioResult,
    SlopeFit,
    decoupling_ratio,
    fit_slope,
    lp_norm,
    predicted_sharpness_exponent,
    sharpness_experiment,
    sweep_and_fit,
    trivial_decoupling_check,
    weighted_lp_norm,
)

__version__ = "0.1.0"

__all__ = [
    "Dyadic",
    "dyadic_add",
    "dyadic_mul",
    "parse_dyadic",
    "pow2",
    "Box",
    "Cap",
    "Cube",
    "Curved",
    "Flat",
    "Interval",
    "cap_volume",
    "caps_disjoint_interiors",
    "PhaseSpec",
    "SurfaceSpec",
    "check_m_nondegenerate",
    "graph_point",
    "phase_total",
    "ScaleError",
    "cap_family",
    "caps_in",
    "coarse_caps",
    "interval_family",
    "omega_regions",
    "verify_cover",
    "affine_for_cap",
    "image_box",
    "rescale_cap",
    "rescale_surface",
    "verify_membership_claim",
    "GridFunction",
    "Lattice",
    "NyquistError",
    "SampledField",
    "SeparableFunction",
    "extend_direct",
    "extend_separable",
    "nyquist_lattice",
    "weight_eval",
    "LatticeSpec",
    "RatioResult",
    "SlopeFit",
    "decoupling_ratio",
    "fit_slope",
    "lp_norm",
    "predicted_sharpness_exponent",
    "sharpness_experiment",
    "sweep_and_fit",
    "trivial_decoupling_check",
    "weighted_lp_norm",
]
