"""Ergodic analysis of the elasto-perfectly-plastic oscillator.

The oscillator's velocity y and elastic component z live on the strip
D = R x (-Y, Y) together with two plastic rays D+ = (0,inf) x {Y} and
D- = (-inf,0) x {-Y}.  This package computes the invariant measure and
related quantities two independent ways: by solving the degenerate
Kolmogorov equations on a truncated grid, and by simulating the
constrained stochastic differential equation directly.
"""

__version__ = "0.1.0"

from .model import (
    OscillatorParams,
    PhasePoint,
    Functional,
    SymmetrySplit,
    drift,
    symmetrize,
    reflect,
    get_functional,
    FUNCTIONAL_NAMES,
)
from .grid import (
    Grid,
    BoundaryConditionSpec,
    LinearSystem,
    Field,
    SolverError,
    build_grid,
    assemble_generator,
    solve_linear,
    trace,
)
