from __future__ import annotations

"""
src/lbsdc/modules/phases.py

Initial conditions:

- 2D lamellar / cylindrical seeds  2 a1 cos(G1.x) + 2 a2 (cos(G2.x) + cos(G3.x))
- 3D cubic seeds built from a lattice of Fourier modes, written in the
  "(±2,±1,0) (0,±2,1)" notation; an opposite-sign group flips the
  coefficient sign
- the manufactured solution exp(-2t) sin(sqrt(3) x) sin(y) and its source

A registry (PHASES) ties each name to its box, model parameters and the
reference energy used by the gap stopping rule.
"""

import itertools
import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.errors import DuplicateLatticePoint, GridError, NonPeriodicWavevector, PreconditionError
from ..core.log_manager import log_mgr
from .lb_model import ModelParams, model_for
from .spectral import Grid, ScalarField, Spectrum, inverse_dft

SQRT3 = math.sqrt(3.0)

# [0, 16 pi / sqrt(3)] x [0, 8 pi]
BOX_2D: Tuple[float, float] = (16.0 * math.pi / SQRT3, 8.0 * math.pi)

G_VECTORS: Tuple[Tuple[float, float], ...] = (
    (0.0, 1.0),
    (-SQRT3 / 2.0, 0.5),
    (-SQRT3 / 2.0, -0.5),
)

PERIODICITY_TOL = 1e-9
DEFAULT_AMPLITUDE = 0.3

LatticePoint = Tuple[Tuple[int, int, int], int]


# =========================================================
#   2D phases
# =========================================================

class TwoDPhase(str, Enum):
    LAMELLAR = "lamellar"
    CYLINDRICAL = "cylindrical"


@dataclass(frozen=True)
class TwoDPhaseSpec:
    name: TwoDPhase
    alpha: float
    gamma: float

    @property
    def a1(self) -> float:
        if self.name is TwoDPhase.LAMELLAR:
            return math.sqrt(2.0 * self.alpha)
        return (self.gamma + math.sqrt(self.gamma ** 2 + 10.0 * self.alpha)) / 5.0

    @property
    def a2(self) -> float:
        return 0.0 if self.name is TwoDPhase.LAMELLAR else self.a1


def _check_periodic(grid: Grid, g: Sequence[float]) -> None:
    for gj, L in zip(g, grid.lengths):
        cycles = gj * L / (2.0 * math.pi)
        if abs(cycles - round(cycles)) > PERIODICITY_TOL:
            raise NonPeriodicWavevector(
                f"wavevector {tuple(g)} makes {cycles:.12f} periods over L={L:.12f}"
            )


def make_2d_phase(grid: Grid, spec: TwoDPhaseSpec) -> ScalarField:
    if grid.d != 2:
        raise GridError(f"{spec.name.value} seed needs a 2D grid, got d={grid.d}")
    for g in G_VECTORS:
        _check_periodic(grid, g)

    x, y = grid.coordinates()
    modes = [np.cos(g[0] * x + g[1] * y) for g in G_VECTORS]
    values = 2.0 * spec.a1 * modes[0] + 2.0 * spec.a2 * (modes[1] + modes[2])
    return ScalarField(grid, np.broadcast_to(values, grid.shape).copy())


# =========================================================
#   3D cubic phases
# =========================================================

_POINT = re.compile(r"\(([^)]*)\)")


def parse_lattice(text: str, sign: int = 1) -> List[LatticePoint]:
    """
    Expand "(±2,±1,0) (0,±2,1)" into integer wavevectors, each tagged with
    sign. "+-" is accepted for "±".
    """
    out: List[LatticePoint] = []
    for group in _POINT.findall(text or ""):
        options = []
        for raw in group.split(","):
            token = raw.strip().replace("+-", "±")
            if token.startswith("±"):
                value = int(token[1:])
                options.append(sorted({value, -value}, reverse=True))
            else:
                options.append([int(token)])
        if len(options) != 3:
            raise PreconditionError(f"lattice point '({group})' must have three components")
        for combo in itertools.product(*options):
            out.append((tuple(combo), sign))
    return out


@dataclass(frozen=True)
class CubicPhaseSpec:
    name: str
    a: float
    alpha: float
    gamma: float
    lattice: Tuple[LatticePoint, ...]
    amplitude: float = DEFAULT_AMPLITUDE

    @classmethod
    def from_table(
        cls,
        name: str,
        a: float,
        alpha: float,
        gamma: float,
        plain: str,
        opposite: str = "",
        amplitude: float = DEFAULT_AMPLITUDE,
    ) -> "CubicPhaseSpec":
        lattice = parse_lattice(plain, 1) + parse_lattice(opposite, -1)
        return cls(name, a, alpha, gamma, tuple(lattice), amplitude)


def validate_lattice(name: str, lattice: Sequence[LatticePoint], n: Optional[int] = None) -> None:
    """
    Reject repeated wavevectors, a mirror pair with opposite signs, the zero
    mode, and (given n) modes at or beyond the Nyquist index.
    """
    signs: Dict[Tuple[int, int, int], int] = {}
    listed = set()
    for k, s in lattice:
        if k in listed:
            raise DuplicateLatticePoint(f"{name}: wavevector {k} listed twice")
        listed.add(k)
        if all(kj == 0 for kj in k):
            raise PreconditionError(f"{name}: the zero mode cannot be seeded")
        if n is not None and any(abs(kj) >= n // 2 for kj in k):
            raise GridError(f"{name}: wavevector {k} not resolved with N={n}")
        mirror = tuple(-kj for kj in k)
        if signs.get(mirror, s) != s:
            raise DuplicateLatticePoint(f"{name}: {k} and its mirror carry opposite signs")
        signs[k] = signs[mirror] = s


def make_cubic_phase(grid: Grid, spec: CubicPhaseSpec) -> ScalarField:
    """
    Coefficient sign * amplitude * N^3 / 2 at every listed k and at -k, then
    an inverse transform. k and -k may both be listed with the same sign.
    """
    if grid.d != 3:
        raise GridError(f"{spec.name} seed needs a 3D grid, got d={grid.d}")
    if any(abs(L - spec.a) > 1e-12 * spec.a for L in grid.lengths):
        raise PreconditionError(f"{spec.name} seed needs the box [0, {spec.a}]^3, got {grid.lengths}")
    validate_lattice(spec.name, spec.lattice, grid.n)

    n = grid.n
    coeffs = np.zeros(grid.shape, dtype=np.complex128)
    for k, s in spec.lattice:
        value = s * spec.amplitude * grid.size / 2.0
        coeffs[tuple(kj % n for kj in k)] = value
        coeffs[tuple(-kj % n for kj in k)] = value

    return inverse_dft(Spectrum(grid, coeffs))


# =========================================================
#   Manufactured solution
# =========================================================

@dataclass(frozen=True)
class ManufacturedCase:
    """
    phi(t, x, y) = exp(-2t) sin(sqrt(3) x) sin(y) on BOX_2D.

    Here Delta phi = -4 phi, so (Delta + 1)^2 phi = 9 phi and
    beta(phi) = -gamma exp(-4t) / 8, which gives the closed-form source
    g = (7 - alpha) phi + phi^3 / 6 - gamma phi^2 / 2 + gamma exp(-4t) / 8.
    """

    alpha: float = 0.15
    gamma: float = 0.25
    S: float = 2.0
    lengths: Tuple[float, float] = BOX_2D

    def params(self) -> ModelParams:
        return ModelParams(self.alpha, self.gamma, self.S)

    def grid(self, n: int) -> Grid:
        return Grid(2, self.lengths, n)

    def _check(self, grid: Grid) -> None:
        if grid.d != 2 or any(abs(a - b) > 1e-12 * b for a, b in zip(grid.lengths, self.lengths)):
            raise PreconditionError(f"manufactured case needs the box {self.lengths}, got {grid.lengths}")

    def _phi(self, t: float, grid: Grid) -> np.ndarray:
        x, y = grid.coordinates()
        return np.exp(-2.0 * t) * np.sin(SQRT3 * x) * np.sin(y)

    def exact(self, t: float, grid: Grid) -> ScalarField:
        self._check(grid)
        return ScalarField(grid, self._phi(t, grid))

    def source(self, t: float, grid: Grid) -> ScalarField:
        self._check(grid)
        phi = self._phi(t, grid)
        g = (
            (7.0 - self.alpha) * phi
            + phi ** 3 / 6.0
            - self.gamma * phi ** 2 / 2.0
            + self.gamma * math.exp(-4.0 * t) / 8.0
        )
        return ScalarField(grid, g)

    def source_for(self, grid: Grid):
        """Time-only callable for the integrators."""
        self._check(grid)
        return lambda t: self.source(t, grid)

    def residual(self, t: float, grid: Grid, h: float = 1e-3) -> float:
        """
        max |d_t phi + dE(phi) - beta(phi) - g| with a fourth-order centred
        difference in time and the spectral dE.
        """
        model = model_for(grid, self.params())
        f = lambda s: self.exact(s, grid).values
        dphi = (-f(t + 2 * h) + 8.0 * f(t + h) - 8.0 * f(t - h) + f(t - 2 * h)) / (12.0 * h)
        phi = f(t)
        res = dphi + model.variational_derivative(phi) - model.beta(phi) - self.source(t, grid).values
        return float(np.max(np.abs(res)))


MANUFACTURED = ManufacturedCase()


def manufactured_exact(t: float, grid: Grid) -> ScalarField:
    return MANUFACTURED.exact(t, grid)


def manufactured_source(t: float, grid: Grid) -> ScalarField:
    return MANUFACTURED.source(t, grid)


def manufactured_residual(t: float, grid: Grid, case: ManufacturedCase = MANUFACTURED) -> float:
    return case.residual(t, grid)


# =========================================================
#   Registry
# =========================================================

@dataclass(frozen=True)
class PhasePreset:
    name: str
    d: int
    lengths: Tuple[float, ...]
    alpha: float
    gamma: float
    e_ref: Optional[float]
    dt: float
    iterations: Optional[int] = None
    plain: str = ""
    opposite: str = ""

    @property
    def cubic(self) -> bool:
        return self.d == 3

    def params(self, S: float = 2.0) -> ModelParams:
        return ModelParams(self.alpha, self.gamma, S)

    def grid(self, n: int) -> Grid:
        return Grid(self.d, self.lengths, n)


def _cubic(name, a, alpha, gamma, e_ref, dt, iterations, plain, opposite="") -> PhasePreset:
    return PhasePreset(name, 3, (a, a, a), alpha, gamma, e_ref, dt, iterations, plain, opposite)


PHASES: Dict[str, PhasePreset] = {
    "lamellar": PhasePreset("lamellar", 2, BOX_2D, 0.15, 0.25, -16.532074091947, 1.0, 21),
    "cylindrical": PhasePreset("cylindrical", 2, BOX_2D, 0.15, 0.25, -17.324103376071, 1.0, 21),
    "a15": _cubic(
        "a15", 2 * math.sqrt(5) * math.pi, 0.0, 1.23, -57.4752889933902, 2.0, 51,
        "(±2,±1,0) (0,±2,1) (±1,0,2)",
        "(±1,±2,0) (±2,0,1) (0,±1,2)",
    ),
    "bcc": _cubic(
        "bcc", 2 * math.sqrt(2) * math.pi, 0.0, 1.23, -14.4932738221454, 2.0, 16,
        "(±1,±1,0) (±1,0,±1) (0,±1,±1)",
    ),
    "fcc": _cubic(
        "fcc", 2 * math.sqrt(3) * math.pi, 0.0, 2.0, -209.6360921245683, 2.0, 9,
        "(±1,±1,1)",
    ),
    # the listed groups share (-2,1,1), so building it raises
    # DuplicateLatticePoint until a lattice override resolves it
    "gyr": _cubic(
        "gyr", 2 * math.sqrt(6) * math.pi, 0.47, 0.46, -162.0665004168457, 3.0, 28,
        "(1,-2,1) (1,2,-1) (-2,1,1) (1,1,-2) (-1,1,2) (2,-1,1)",
        "(1,2,1) (-1,2,1) (2,1,1) (1,1,2) (1,-1,2) (-2,1,1)",
    ),
}


def get_preset(name: str) -> PhasePreset:
    key = str(name).strip().lower()
    if key not in PHASES:
        raise PreconditionError(f"unknown phase '{name}' (choose from {', '.join(PHASES)})")
    return PHASES[key]


def build_seed(
    preset: PhasePreset,
    grid: Grid,
    params: ModelParams,
    amplitude: Optional[float] = None,
    plain: Optional[str] = None,
    opposite: Optional[str] = None,
) -> ScalarField:
    """Seed for a registry phase; lattice and amplitude overrides apply to cubic phases."""
    if not preset.cubic:
        seed = make_2d_phase(grid, TwoDPhaseSpec(TwoDPhase(preset.name), params.alpha, params.gamma))
    else:
        spec = CubicPhaseSpec.from_table(
            preset.name,
            grid.lengths[0],
            params.alpha,
            params.gamma,
            preset.plain if plain is None else plain,
            preset.opposite if opposite is None else opposite,
            DEFAULT_AMPLITUDE if amplitude is None else amplitude,
        )
        seed = make_cubic_phase(grid, spec)
    log_mgr.log("phases", f"built {preset.name} seed on N={grid.n}", extra={"max": float(np.max(np.abs(seed.values)))})
    return seed
