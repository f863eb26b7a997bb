"""Regularized Bloch-wave homogenization of quasiperiodic media.

Pipeline: lift a quasiperiodic coefficient to a periodic one on a higher
dimensional torus (``qpcore``), compute the first regularized Bloch
eigenpair (``spectral``), obtain the effective tensor from cell problems
(``cell``) or from the eigenvalue curvature (``tensor``), and check the
limits numerically (``blochtransform``, ``directsolver``).
"""
from .cell import Corrector, cell_tensor, evaluate_corrector, solve_all, solve_cell, tensor_from_cell
from .effective import EffectiveTensor
from .errors import *  # noqa: F401,F403
from .qpcore import (
    FourierField,
    QPMatrix,
    TrigSum,
    WindingMap,
    coercivity_estimate,
    detect_module,
    kozlov_diagnostic,
    lift,
    mean,
    restrict,
)
from .spectral import EigenPair, ModeLattice, ShiftedOperator, assemble, choose_shift, eigen_sweep, first_eigenpair
from .tensor import (
    cross_route,
    delta_continuation,
    eigvec_derivative_check,
    gradient_at_zero,
    hessian_tensor,
)

__version__ = "0.1.0"
