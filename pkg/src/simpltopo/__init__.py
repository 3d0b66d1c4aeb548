"""Sigmoidal-mirror-descent topology optimization (SiMPL) with OC and
projected-gradient baselines, a command-line driver, and a REST service."""

from .fem import Mesh2D, SparseOperator, SolverError, build_mesh
from .entropy import (
    sigmoid,
    inv_sigmoid,
    softplus,
    fermi_dirac_entropy,
    bregman_div,
    bregman_volume_correct,
    l2_volume_correct,
)
from .physics import ProblemSpec, EvaluationRecord, Evaluator, default_problem

__version__ = "0.1.0"
