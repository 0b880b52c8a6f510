"""Bregman alternating minimization for two-block DC programs.

The solver engine lives in :mod:`ubama.solver`; primitives in
:mod:`ubama.prox` and :mod:`ubama.linops`; applications in :mod:`ubama.tv`,
:mod:`ubama.rpca` and :mod:`ubama.bid`.
"""

__version__ = "0.1.0"

from .errors import (ConfigError, FormatError, IllPosedSystemError, InnerSolverError,
                     LineSearchError, NumericalError, StepError)
from .prox import BregmanKernel, CappedNormParams, proj_box, proj_simplex, shrink, svt
from .solver import (GeneralizedDcProblem, IterationRecord, SolveResult, SolverConfig,
                     descent_audit, run)
