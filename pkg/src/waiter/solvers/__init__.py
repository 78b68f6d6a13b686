"""Dense interior point solvers for LPs, QPs and small SDPs."""
from .lp import (INFEASIBLE, MAX_ITERATIONS, NUMERICAL_FAILURE, OPTIMAL, UNBOUNDED,
                 LPResult)
from .qp import QPResult, QuadProgram, solve_lp, solve_qp
from .sdp import PsdBlock, SdpProblem, SdpResult, SingleSdpResult, solve_sdp, solve_sdp_batch

__all__ = [
    "OPTIMAL", "INFEASIBLE", "UNBOUNDED", "MAX_ITERATIONS", "NUMERICAL_FAILURE",
    "LPResult", "QPResult", "QuadProgram", "solve_qp", "solve_lp",
    "PsdBlock", "SdpProblem", "SdpResult", "SingleSdpResult", "solve_sdp", "solve_sdp_batch",
]
