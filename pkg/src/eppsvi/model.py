"""Physical parameters, phase-space vocabulary and test functionals.

Shared by the PDE grid and the Monte Carlo simulator, so that one
functional object can be evaluated on grid nodes and along simulated
paths without interpolation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

# Region codes, usable both as scalars and inside vectorized evaluations.
INTERIOR = 0
PLUS_RAY = 1
MINUS_RAY = -1

_REGION_NAMES = {INTERIOR: "interior", PLUS_RAY: "plus-ray", MINUS_RAY: "minus-ray"}
_REGION_CODES = {v: k for k, v in _REGION_NAMES.items()}


def region_name(code: int) -> str:
    return _REGION_NAMES[int(code)]


def region_code(name: str) -> int:
    try:
        return _REGION_CODES[name]
    except KeyError:
        raise ValueError(f"unknown region {name!r}") from None


@dataclass(frozen=True)
class OscillatorParams:
    """Damping c0, stiffness k and elasto-plastic bound Y (all > 0)."""

    c0: float
    k: float
    Y: float

    def __post_init__(self):
        for name in ("c0", "k", "Y"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be a positive finite number, got {val}")

    @property
    def sigma_y(self) -> float:
        """Stationary velocity scale of the linear oscillator, 1/sqrt(2 c0)."""
        return 1.0 / np.sqrt(2.0 * self.c0)


@dataclass(frozen=True)
class PhasePoint:
    """A point of the closed phase space: strip interior or one of the rays."""

    y: float
    z: float
    region: str = "interior"

    def __post_init__(self):
        if self.region not in _REGION_CODES:
            raise ValueError(f"unknown region {self.region!r}")
        if self.region == "plus-ray" and self.y < 0:
            raise ValueError("plus-ray requires y >= 0")
        if self.region == "minus-ray" and self.y > 0:
            raise ValueError("minus-ray requires y <= 0")

    def validate(self, params: OscillatorParams) -> None:
        if self.region == "interior":
            if abs(self.z) > params.Y:
                raise ValueError(f"interior point needs |z| <= Y, got z={self.z}")
        elif self.region == "plus-ray":
            if self.z != params.Y:
                raise ValueError("plus-ray requires z = Y")
        elif self.z != -params.Y:
            raise ValueError("minus-ray requires z = -Y")


def drift(params: OscillatorParams, p: PhasePoint) -> float:
    """Drift of the velocity, -(c0 y + k z)."""
    return -(params.c0 * p.y + params.k * p.z)


def reflect(p: PhasePoint) -> PhasePoint:
    """Mirror map (y, z) -> (-y, -z); swaps the two rays."""
    swap = {"interior": "interior", "plus-ray": "minus-ray", "minus-ray": "plus-ray"}
    return PhasePoint(-p.y, -p.z, swap[p.region])


SYMMETRIC = "symmetric"
ANTISYMMETRIC = "antisymmetric"
GENERAL = "general"


@dataclass(frozen=True)
class Functional:
    """A bounded test functional f(y, z, region).

    ``eval`` must accept numpy arrays for y and z and an integer region
    array (codes INTERIOR/PLUS_RAY/MINUS_RAY) and broadcast.  ``bound``
    is a user-declared sup-norm estimate; it is spot-checked where the
    artifact evaluates f, not proven.
    """

    name: str
    eval: Callable = field(repr=False)
    symmetry: str = GENERAL
    bound: float | None = None

    def __post_init__(self):
        if self.symmetry not in (SYMMETRIC, ANTISYMMETRIC, GENERAL):
            raise ValueError(f"unknown symmetry tag {self.symmetry!r}")
        if self.bound is not None and not self.bound >= 0:
            raise ValueError("bound must be >= 0")

    def __call__(self, y, z, region=INTERIOR):
        return self.eval(np.asarray(y, dtype=float), np.asarray(z, dtype=float),
                         np.asarray(region))

    def mirrored(self) -> "Functional":
        """The functional (y,z) -> f(-y,-z) with the rays swapped."""
        f = self.eval
        return Functional(
            name=f"mirror({self.name})",
            eval=lambda y, z, r: f(-np.asarray(y, float), -np.asarray(z, float),
                                   -np.asarray(r)),
            symmetry=self.symmetry,
            bound=self.bound,
        )


@dataclass(frozen=True)
class SymmetrySplit:
    f_sym: Functional
    f_asym: Functional


def symmetrize(f: Functional) -> SymmetrySplit:
    """Split f into its even and odd parts under (y,z) -> (-y,-z)."""
    g = f.eval

    def even(y, z, r):
        y = np.asarray(y, float); z = np.asarray(z, float); r = np.asarray(r)
        return 0.5 * (g(y, z, r) + g(-y, -z, -r))

    def odd(y, z, r):
        y = np.asarray(y, float); z = np.asarray(z, float); r = np.asarray(r)
        return 0.5 * (g(y, z, r) - g(-y, -z, -r))

    return SymmetrySplit(
        f_sym=Functional(f"sym({f.name})", even, SYMMETRIC, f.bound),
        f_asym=Functional(f"asym({f.name})", odd, ANTISYMMETRIC, f.bound),
    )


def _const(c):
    return lambda y, z, r: np.full(np.broadcast(y, z).shape, float(c))


_CATALOGUE = {
    "one": Functional("one", _const(1.0), SYMMETRIC, 1.0),
    "y": Functional("y", lambda y, z, r: y, ANTISYMMETRIC),
    "z": Functional("z", lambda y, z, r: z, ANTISYMMETRIC),
    "y2": Functional("y2", lambda y, z, r: y * y, SYMMETRIC),
    "z2": Functional("z2", lambda y, z, r: z * z, SYMMETRIC),
    "abs_y": Functional("abs_y", lambda y, z, r: np.abs(y), SYMMETRIC),
    "yz": Functional("yz", lambda y, z, r: y * z, SYMMETRIC),
    "plastic_plus": Functional(
        "plastic_plus",
        lambda y, z, r: (np.asarray(r) == PLUS_RAY).astype(float) + 0.0 * y,
        GENERAL,
        1.0,
    ),
    "y_plus_y2": Functional("y_plus_y2", lambda y, z, r: y + y * y, GENERAL),
    # note: y z^3 is EVEN under (y,z) -> (-y,-z) (degree-4 monomial), so
    # this combination is mixed, not odd; only its y^3 part is odd
    "yz3_plus_y3": Functional(
        "yz3_plus_y3", lambda y, z, r: y * z**3 + y**3, GENERAL
    ),
}

FUNCTIONAL_NAMES = tuple(sorted(_CATALOGUE))


def get_functional(name: str) -> Functional:
    """Look up a catalogue functional by name (used by the CLI)."""
    try:
        return _CATALOGUE[name]
    except KeyError:
        raise ValueError(
            f"unknown functional {name!r}; available: {', '.join(FUNCTIONAL_NAMES)}"
        ) from None
