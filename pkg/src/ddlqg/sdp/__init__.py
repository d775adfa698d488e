"""Small dense semidefinite programming toolkit."""
from .model import Affine, LmiBlock, SdpBuilder, SdpModel, VarInfo, bmat
from .solver import Residuals, SdpError, SdpSolution, Status, residuals, solve, solve_or_raise

__all__ = [
    "Affine", "LmiBlock", "SdpBuilder", "SdpModel", "VarInfo", "bmat",
    "Residuals", "SdpError", "SdpSolution", "Status", "residuals", "solve", "solve_or_raise",
]
