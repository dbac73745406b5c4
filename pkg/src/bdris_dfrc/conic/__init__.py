"""Self-contained second-order cone programming layer."""

from .ipm import solve_socp
from .problem import (
    SocConstraint, SocpProblem, SocpSolution, embed_cvec, herm_row,
    imag_herm_row, kkt_residuals, lift_cvec, psd_factor, real_block,
    rotated_soc,
)

__all__ = [
    "SocConstraint", "SocpProblem", "SocpSolution", "solve_socp",
    "kkt_residuals", "embed_cvec", "lift_cvec", "herm_row", "imag_herm_row",
    "real_block", "rotated_soc", "psd_factor",
]
