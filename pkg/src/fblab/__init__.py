"""Numerical laboratory for the parabolic obstacle problem with variable right-hand side.

Solve on a space-time grid, classify free-boundary points by quadratic
blow-up fits, sweep Gaussian-weighted energy functionals over radii and test
the almost-monotonicity, decay, cleaning and dimension statements they obey.
"""

from .errors import *  # noqa: F401,F403
from .fixtures import AnalyticField, ClosedForm, PolyP
from .mesh import ScalarField, SpaceTimeGrid
from .monitor import CheckReport, FunctionalTrace
from .pardim import DimensionEstimate, ParPointSet
from .singular import Regular, Singular, Undecided
from .solver import Scenario, SolveReport, load_scenario, solve

__version__ = "0.1.0"
