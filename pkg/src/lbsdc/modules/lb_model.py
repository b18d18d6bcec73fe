from __future__ import annotations

"""
src/lbsdc/modules/lb_model.py

Landau-Brazovskii energy and the pieces of its mass-conserving Allen-Cahn flow

    d phi / dt = -dE/dphi + beta(phi)

split as E = E^c - E^e with

    dE^c = (Delta + 1)^2 phi + (S - alpha) phi        (implicit, spectral)
    dE^e = S phi - phi^3 / 6 + gamma phi^2 / 2        (explicit, pointwise)

Linear operators act as diagonal symbols in Fourier space with
(Delta + 1) -> 1 - 4 pi^2 |Bk|^2. LBModel precomputes the symbols for one
(grid, params) pair and works on raw numpy arrays; the module-level
functions wrap it for ScalarField inputs.
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Tuple, Union

import numpy as np
import scipy.fft as sfft

from ..core.errors import ModelError, NegativeRadicand, PreconditionError, SingularSymbol
from .spectral import FOUR_PI_SQ, Grid, ScalarField, weighted_sum

SourceValue = Union[ScalarField, np.ndarray]
Source = Callable[[float], SourceValue]

DEFAULT_STABILIZER = 2.0


@dataclass(frozen=True)
class ModelParams:
    alpha: float
    gamma: float
    S: float = DEFAULT_STABILIZER

    def __post_init__(self) -> None:
        if not all(np.isfinite(v) for v in (self.alpha, self.gamma, self.S)):
            raise ModelError(f"non-finite model parameters: {self}")
        if self.gamma < 0.0:
            raise ModelError(f"gamma must be >= 0 (use phi -> -phi symmetry), got {self.gamma}")
        if not self.S > self.alpha:
            raise ModelError(f"stabilizer S={self.S} must exceed alpha={self.alpha}")


@dataclass(frozen=True)
class EnergyReport:
    total: float
    quadratic_part: float
    bulk_part: float
    mass: float


@dataclass(frozen=True)
class BoundDiagnostic:
    lam: float
    c_of_phi: float


class LBModel:
    """
    Spectral workspace for one grid and parameter set.

    Holds only read-only symbol arrays, so one instance can be shared by
    several threads. Transforms are real-to-complex over the last axis.
    """

    def __init__(self, grid: Grid, params: ModelParams, workers: Optional[int] = None) -> None:
        self.grid = grid
        self.params = params
        self.workers = workers

        half = grid.n // 2 + 1
        bk2 = grid.bk_squared()[..., :half]
        # (1 - 4 pi^2 |Bk|^2)^2, the (Delta + 1)^2 symbol
        self._helmholtz_sq = (1.0 - FOUR_PI_SQ * bk2) ** 2
        self._energy_symbol = 0.5 * (self._helmholtz_sq - params.alpha)
        self._sigma = self._helmholtz_sq + (params.S - params.alpha)
        self._sigma_min = float(np.min(self._sigma))

        # rfft keeps k_d >= 0 only; interior columns stand for +-k_d
        mult = np.full(half, 2.0)
        mult[0] = 1.0
        mult[-1] = 1.0
        self._multiplicity = mult

    # -------------------------------------------------
    # Transforms
    # -------------------------------------------------
    def rfft(self, u: np.ndarray) -> np.ndarray:
        return sfft.rfftn(u, workers=self.workers)

    def irfft(self, uh: np.ndarray) -> np.ndarray:
        return sfft.irfftn(uh, s=self.grid.shape, workers=self.workers)

    # -------------------------------------------------
    # Energy
    # -------------------------------------------------
    def energy_parts(self, u: np.ndarray) -> Tuple[float, float]:
        g = self.grid
        uh = self.rfft(u)
        spectral = np.sum(self._multiplicity * self._energy_symbol * (uh.real ** 2 + uh.imag ** 2))
        quadratic = g.volume / float(g.size) ** 2 * float(spectral)
        bulk = weighted_sum(g, u ** 4 / 24.0 - self.params.gamma * u ** 3 / 6.0)
        return quadratic, bulk

    def energy(self, u: np.ndarray) -> float:
        quadratic, bulk = self.energy_parts(u)
        return quadratic + bulk

    def energy_convex(self, u: np.ndarray) -> float:
        quadratic, _ = self.energy_parts(u)
        return quadratic + 0.5 * self.params.S * weighted_sum(self.grid, u ** 2)

    def energy_expansive(self, u: np.ndarray) -> float:
        _, bulk = self.energy_parts(u)
        return 0.5 * self.params.S * weighted_sum(self.grid, u ** 2) - bulk

    # -------------------------------------------------
    # Variational derivatives
    # -------------------------------------------------
    def variational_derivative(self, u: np.ndarray) -> np.ndarray:
        p = self.params
        linear = self.irfft((self._helmholtz_sq - p.alpha) * self.rfft(u))
        return linear + u ** 3 / 6.0 - p.gamma * u ** 2 / 2.0

    def delta_ec(self, u: np.ndarray) -> np.ndarray:
        return self.irfft(self._sigma * self.rfft(u))

    def delta_ee(self, u: np.ndarray) -> np.ndarray:
        p = self.params
        return p.S * u - u ** 3 / 6.0 + p.gamma * u ** 2 / 2.0

    def beta(self, u: np.ndarray) -> float:
        p = self.params
        integrand = (1.0 - p.alpha) * u + u ** 3 / 6.0 - p.gamma * u ** 2 / 2.0
        return float(np.sum(integrand)) / self.grid.size

    # -------------------------------------------------
    # IMEX pieces
    # -------------------------------------------------
    def g_implicit(self, u: np.ndarray) -> np.ndarray:
        return -self.delta_ec(u)

    def g_explicit(self, u: np.ndarray, t: float = 0.0, source: Optional[Source] = None) -> np.ndarray:
        out = self.delta_ee(u) + self.beta(u)
        if source is not None:
            out = out + source_values(source(t))
        return out

    def _denominator(self, dt: float) -> np.ndarray:
        if not dt > 0.0:
            raise PreconditionError(f"step size must be positive, got {dt}")
        if 1.0 + dt * self._sigma_min <= 0.0:
            raise SingularSymbol(
                f"1 + dt*sigma reaches {1.0 + dt * self._sigma_min:.3e} (dt={dt}, "
                f"S={self.params.S}, alpha={self.params.alpha})"
            )
        return 1.0 + dt * self._sigma

    def implicit_solve(self, rhs: np.ndarray, dt: float) -> np.ndarray:
        """Solve (I + dt((Delta+1)^2 + S - alpha)) phi = rhs mode by mode."""
        return self.irfft(self.rfft(rhs) / self._denominator(dt))

    def solve(self, rhs: np.ndarray, dt: float) -> Tuple[np.ndarray, np.ndarray]:
        """implicit_solve that also returns dE^c(phi) from the same spectrum."""
        phi_hat = self.rfft(rhs) / self._denominator(dt)
        return self.irfft(phi_hat), self.irfft(self._sigma * phi_hat)

    def cs_step(self, u: np.ndarray, dt: float, t: float = 0.0, source: Optional[Source] = None) -> np.ndarray:
        return self.implicit_solve(u + dt * self.g_explicit(u, t, source), dt)

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        return weighted_sum(self.grid, u * v)

    def convex_concave_gap(self, new: np.ndarray, old: np.ndarray, ec_new: Optional[np.ndarray] = None) -> float:
        """<dE^c(new) - dE^e(old), new - old>; bounds E(new) - E(old) from above."""
        if ec_new is None:
            ec_new = self.delta_ec(new)
        return self.inner(ec_new - self.delta_ee(old), new - old)


@lru_cache(maxsize=16)
def model_for(grid: Grid, params: ModelParams) -> LBModel:
    return LBModel(grid, params)


def source_values(value: SourceValue) -> np.ndarray:
    return value.values if isinstance(value, ScalarField) else np.asarray(value, dtype=np.float64)


# =========================================================
#   ScalarField-level operations
# =========================================================

def lb_energy(field: ScalarField, p: ModelParams) -> EnergyReport:
    model = model_for(field.grid, p)
    quadratic, bulk = model.energy_parts(field.values)
    mass = float(np.sum(field.values)) / field.grid.size
    return EnergyReport(total=quadratic + bulk, quadratic_part=quadratic, bulk_part=bulk, mass=mass)


def variational_derivative(field: ScalarField, p: ModelParams) -> ScalarField:
    return ScalarField(field.grid, model_for(field.grid, p).variational_derivative(field.values))


def delta_ec(field: ScalarField, p: ModelParams) -> ScalarField:
    return ScalarField(field.grid, model_for(field.grid, p).delta_ec(field.values))


def delta_ee(field: ScalarField, p: ModelParams) -> ScalarField:
    return ScalarField(field.grid, model_for(field.grid, p).delta_ee(field.values))


def beta(field: ScalarField, p: ModelParams) -> float:
    return model_for(field.grid, p).beta(field.values)


def implicit_solve(rhs: ScalarField, dt: float, p: ModelParams) -> ScalarField:
    return ScalarField(rhs.grid, model_for(rhs.grid, p).implicit_solve(rhs.values, dt))


def cs_step(
    phi_n: ScalarField,
    dt: float,
    p: ModelParams,
    src: Optional[Source] = None,
    t_n: float = 0.0,
) -> ScalarField:
    """One convex-splitting step; beta enters the right-hand side as a constant."""
    model = model_for(phi_n.grid, p)
    return ScalarField(phi_n.grid, model.cs_step(phi_n.values, dt, t_n, src))


def uc_bound(field: ScalarField, p: ModelParams, lam: float) -> BoundDiagnostic:
    """C(phi) = sqrt((E(phi) + (9 gamma^4 + 3)|Omega|) / lambda); diagnostic only."""
    if not lam > 0.0:
        raise PreconditionError(f"lambda must be positive, got {lam}")
    energy = lb_energy(field, p).total
    radicand = energy + (9.0 * p.gamma ** 4 + 3.0) * field.grid.volume
    if radicand < 0.0:
        raise NegativeRadicand(f"E + (9 gamma^4 + 3)|Omega| = {radicand:.6e} < 0")
    return BoundDiagnostic(lam=lam, c_of_phi=float(np.sqrt(radicand / lam)))


def stabilizer_condition(p: ModelParams, c0: float, lam: float, e_c0: float, volume: float) -> bool:
    """
    Sufficient condition on S for unconditional stability of the CS scheme,
    given C^0, the embedding constant lambda and E(C^0).
    """
    if not lam > 0.0:
        raise PreconditionError(f"lambda must be positive, got {lam}")
    c0 = max(c0, 1.0)
    bound = max(
        1.0,
        p.alpha,
        0.5 * c0 ** 2 + p.gamma * c0,
        (e_c0 + p.gamma ** 2 * volume / 4.0) / (2.0 * lam),
    )
    return p.S > bound
