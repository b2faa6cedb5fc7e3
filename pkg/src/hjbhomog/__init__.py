"""Effective Hamiltonians and homogenization for periodic bi-domain optimal control."""

from .cell_solver import CellSolution, extract_ergodic, solve_discounted
from .control_model import ControlProblem, MixedControl, Region, Variant, make_problem
from .effective_hamiltonian import HBarTable, tabulate
from .ergodic_oracle import crossing_estimate, long_time_average
from .grid import PeriodicGrid, ValueField
from .homogenized_solver import convergence_study, solve_effective, solve_epsilon

__all__ = [
    "CellSolution",
    "ControlProblem",
    "HBarTable",
    "MixedControl",
    "PeriodicGrid",
    "Region",
    "ValueField",
    "Variant",
    "convergence_study",
    "crossing_estimate",
    "extract_ergodic",
    "long_time_average",
    "make_problem",
    "solve_discounted",
    "solve_effective",
    "solve_epsilon",
    "tabulate",
]
