"""defgpa: closed-form generalized Procrustes analysis with linear basis warps.

Registers n corresponded landmark shapes (possibly with missing points) to an
unknown reference shape, with affine or thin-plate-spline transformations,
by a single eigendecomposition instead of alternating minimization.
"""

from .errors import (
    DefgpaError,
    DegenerateCenters,
    DegenerateConfiguration,
    DegenerateInput,
    DimensionError,
    FormatError,
    InsufficientOverlap,
    InvalidMatrix,
    NotAnEigenvector,
    SingularSystem,
    SingularTransform,
    UnconstrainedPoint,
)
from .shapes import Shape, ShapeSet, center, centroid, covariance, load_shapes, save_shapes
from .spectral import EigenPairs, bottom_d_scaled, eig_sym, leftmost_singular_vector, top_d_excluding
from .warps import (
    AffineWarp,
    LbwModel,
    TpsWarp,
    affine_basis,
    apply_warp,
    bending_energy,
    fit_inverse_tps,
    free_translation_witness,
    place_control_points,
    tps_basis,
    tps_build,
    tps_from_json_dict,
    tps_kernel,
    tps_to_json_dict,
)
from .gpa import (
    CovariancePrior,
    GpaSolution,
    SimilarityTransform,
    TheoremConditionReport,
    assemble_P,
    check_theorem_conditions,
    complete_all,
    complete_shape,
    correct_reflection,
    estimate_prior,
    estimate_prior_for_set,
    pairwise_similarity_procrustes,
    pairwise_transform_table,
    solve,
    solve_affine_centered,
)
from .metrics import CveConfig, cross_validation_error, gauge_align, rmse_d, rmse_r

__version__ = "0.1.0"

__all__ = [
    "AffineWarp", "CovariancePrior", "CveConfig", "DefgpaError", "DegenerateCenters",
    "DegenerateConfiguration", "DegenerateInput", "DimensionError", "EigenPairs",
    "FormatError", "GpaSolution", "InsufficientOverlap", "InvalidMatrix", "LbwModel",
    "NotAnEigenvector", "Shape", "ShapeSet", "SimilarityTransform", "SingularSystem",
    "SingularTransform", "TheoremConditionReport", "TpsWarp", "UnconstrainedPoint",
    "affine_basis", "apply_warp", "assemble_P", "bending_energy", "bottom_d_scaled",
    "center", "centroid", "check_theorem_conditions", "complete_all", "complete_shape",
    "correct_reflection", "covariance", "cross_validation_error", "eig_sym",
    "estimate_prior", "estimate_prior_for_set", "fit_inverse_tps",
    "free_translation_witness", "gauge_align", "leftmost_singular_vector",
    "load_shapes", "pairwise_similarity_procrustes", "pairwise_transform_table",
    "place_control_points", "rmse_d", "rmse_r", "save_shapes", "solve",
    "solve_affine_centered", "top_d_excluding", "tps_basis", "tps_build",
    "tps_from_json_dict", "tps_kernel", "tps_to_json_dict",
]
