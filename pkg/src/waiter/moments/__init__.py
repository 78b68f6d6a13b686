"""Moment sequences, realizability conditions and trajectory verification."""
from .basis import (DegreeOverflow, MonomialBasis, TruncatedMomentSequence, affine_moment_map,
                    localizing_matrix, moment_matrix, poly_degree, riesz)
from .relaxation import (Relaxation, is_realizable, max_violation_sdp, params_to_tms,
                         realizability_conditions, tms_to_params)
from .shape import BoundingShape, ball_poly, halfspace_poly
from .verify import VerificationReport, verify_motion, verify_trajectory

__all__ = [
    "DegreeOverflow", "MonomialBasis", "TruncatedMomentSequence", "affine_moment_map",
    "localizing_matrix", "moment_matrix", "poly_degree", "riesz",
    "Relaxation", "is_realizable", "max_violation_sdp", "params_to_tms",
    "realizability_conditions", "tms_to_params",
    "BoundingShape", "ball_poly", "halfspace_poly",
    "VerificationReport", "verify_motion", "verify_trajectory",
]
