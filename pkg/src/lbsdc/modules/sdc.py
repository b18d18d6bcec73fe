from __future__ import annotations

"""
src/lbsdc/modules/sdc.py

Spectral deferred correction on top of the convex-splitting step.

On one step [t_n, t_n + dt] the M Gauss-Lobatto nodes split the interval
into M-1 subintervals of physical length h_i. The prediction sweep is the
CS scheme run node to node,

    phi^p_{i+1} = phi^p_i + h_i (G_im(phi^p_{i+1}) + G_ex(phi^p_i)),

and each correction sweep solves

    phi^c_{i+1} = phi^c_i + h_i (G_im(phi^c_{i+1}) + G_ex(phi^c_i)
                                - G_im(phi^p_{i+1}) - G_ex(phi^p_i))
                  + sum_j w_ij G(phi^p_j),

where w_ij integrates the Lagrange basis over subinterval i. Nodes and
weights live on [-1, 1]; the physical values are scaled by dt/2.

The adaptive variant gates each corrected stage on the convex-concave
quantity <dE^c(phi^c_{i+1}) - dE^e(phi^c_i), phi^c_{i+1} - phi^c_i>: when it
is negative the stage phi^c_i is replaced by phi^c_{i+1} and later sweeps
restart from that stage.
"""

import time
from dataclasses import dataclass, field as dc_field
from enum import Enum
from typing import Callable, List, Optional, Protocol, Tuple

import numpy as np
from scipy.interpolate import BarycentricInterpolator
from scipy.special import roots_legendre

from ..core.errors import IllConditioned, NoConvergence, PreconditionError
from ..core.log_manager import log_mgr
from .lb_model import LBModel, ModelParams, Source
from .runlog import RunLog, RunRecord
from .spectral import Grid, ScalarField

NEWTON_TOL = 1e-14
NEWTON_MAX_ITER = 100
EXACTNESS_TOL = 1e-10
MASS_TOL = 1e-12


class NodeFamily(str, Enum):
    LEGENDRE = "legendre"
    CHEBYSHEV = "chebyshev"

    @classmethod
    def parse(cls, value: "str | NodeFamily") -> "NodeFamily":
        if isinstance(value, NodeFamily):
            return value
        key = str(value).strip().lower()
        for member in cls:
            if key in (member.value, member.value[:3], member.name.lower()):
                return member
        raise ValueError(f"unknown node family '{value}' (legendre|chebyshev)")


# =========================================================
#   Nodes and weights
# =========================================================

def lobatto_nodes(M: int, family: "NodeFamily | str" = NodeFamily.LEGENDRE) -> np.ndarray:
    """
    M Gauss-Lobatto nodes on [-1, 1], ascending.

    Legendre nodes are -1, 1 and the roots of P'_{M-1}, found by Newton
    iteration on (1 - x^2) P'_{M-1} from Chebyshev initial guesses.
    """
    family = NodeFamily.parse(family)
    if M < 2:
        raise PreconditionError(f"need at least two nodes, got M={M}")
    n = M - 1
    j = np.arange(M)
    # sin form keeps the Chebyshev points exactly symmetric
    cheb = np.sin(np.pi * (2 * j - n) / (2 * n))
    if family is NodeFamily.CHEBYSHEV:
        return cheb

    x = cheb.copy()
    P = np.zeros((M, n + 1))
    for _ in range(NEWTON_MAX_ITER):
        P[:, 0] = 1.0
        P[:, 1] = x
        for k in range(2, n + 1):
            P[:, k] = ((2 * k - 1) * x * P[:, k - 1] - (k - 1) * P[:, k - 2]) / k
        update = (x * P[:, n] - P[:, n - 1]) / ((n + 1) * P[:, n])
        x = x - update
        if np.max(np.abs(update)) <= NEWTON_TOL:
            break
    else:
        raise NoConvergence(f"Legendre-Lobatto Newton iteration stalled for M={M}")

    x = 0.5 * (x - x[::-1])
    x[0], x[-1] = -1.0, 1.0
    return x


def subinterval_weights(nodes: np.ndarray) -> np.ndarray:
    """
    (M-1) x M matrix w with w[i, j] = integral of l_j over [x_i, x_{i+1}].

    Each row integrates the Lagrange basis with a Gauss-Legendre rule exact
    for degree M-1, then the rule is checked on the monomials t^q, q < M.
    """
    nodes = np.asarray(nodes, dtype=np.float64)
    M = nodes.size
    if M < 2 or np.any(np.diff(nodes) <= 0.0):
        raise PreconditionError("nodes must be strictly increasing, at least two of them")

    basis = BarycentricInterpolator(nodes, np.eye(M))
    gx, gw = roots_legendre(M // 2 + 1)
    weights = np.empty((M - 1, M))
    for i in range(M - 1):
        a, b = nodes[i], nodes[i + 1]
        half = 0.5 * (b - a)
        t = 0.5 * (a + b) + half * gx
        weights[i] = half * (gw @ basis(t))

    for q in range(M):
        exact = (nodes[1:] ** (q + 1) - nodes[:-1] ** (q + 1)) / (q + 1)
        err = float(np.max(np.abs(weights @ nodes ** q - exact)))
        if err > EXACTNESS_TOL:
            raise IllConditioned(f"weights miss t^{q} by {err:.3e} with M={M}")
    return weights


@dataclass(frozen=True)
class SdcScheme:
    M: int
    K: int
    family: NodeFamily
    nodes: np.ndarray = dc_field(repr=False, compare=False)
    weights: np.ndarray = dc_field(repr=False, compare=False)

    @classmethod
    def build(cls, M: int, K: int, family: "NodeFamily | str" = NodeFamily.LEGENDRE) -> "SdcScheme":
        if K < 0:
            raise PreconditionError(f"correction count must be >= 0, got K={K}")
        family = NodeFamily.parse(family)
        nodes = lobatto_nodes(M, family)
        return cls(M=M, K=K, family=family, nodes=nodes, weights=subinterval_weights(nodes))

    @classmethod
    def convex_splitting(cls) -> "SdcScheme":
        """The bare CS scheme: one subinterval, no corrections."""
        return cls.build(2, 0, NodeFamily.LEGENDRE)

    @property
    def gaps(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def label(self) -> str:
        return f"SDC_{self.M}^{self.K}[{self.family.value}]"


# =========================================================
#   Stage bookkeeping
# =========================================================

class SplitProblem(Protocol):
    """What the sweeps need from a problem; LBModel is one."""

    def solve(self, rhs: np.ndarray, dt: float) -> Tuple[np.ndarray, np.ndarray]: ...

    def g_implicit(self, u: np.ndarray) -> np.ndarray: ...

    def g_explicit(self, u: np.ndarray, t: float = 0.0, source: Optional[Source] = None) -> np.ndarray: ...

    def convex_concave_gap(self, new: np.ndarray, old: np.ndarray, ec_new: Optional[np.ndarray] = None) -> float: ...


@dataclass
class StageState:
    """Stage values and cached G_im / G_ex at every node of one step."""

    stages: List[np.ndarray]
    g_implicit: List[np.ndarray]
    g_explicit: List[np.ndarray]
    t_n: float
    dt: float
    grid: Optional[Grid] = None

    @property
    def g_values(self) -> List[np.ndarray]:
        return [gi + ge for gi, ge in zip(self.g_implicit, self.g_explicit)]

    def stage_field(self, i: int) -> ScalarField:
        if self.grid is None:
            raise PreconditionError("stage state has no grid attached")
        return ScalarField(self.grid, self.stages[i])


class SdcIntegrator:
    """
    One integrator per thread; it keeps no buffers between steps, but the
    problem it wraps may.
    """

    def __init__(self, problem: SplitProblem, scheme: SdcScheme, source: Optional[Source] = None) -> None:
        self.problem = problem
        self.scheme = scheme
        self.source = source

    # -------------------------------------------------
    # Physical mapping
    # -------------------------------------------------
    def stage_times(self, t_n: float, dt: float) -> np.ndarray:
        return t_n + 0.5 * dt * (self.scheme.nodes + 1.0)

    def _g_explicit(self, u: np.ndarray, t: float) -> np.ndarray:
        return self.problem.g_explicit(u, t, self.source)

    def accepts(self, gap: float) -> bool:
        """Convex-concave acceptance test of the adaptive sweep."""
        return gap < 0.0

    # -------------------------------------------------
    # Sweeps
    # -------------------------------------------------
    def predict(self, u0: np.ndarray, t_n: float, dt: float) -> StageState:
        if not dt > 0.0:
            raise PreconditionError(f"step size must be positive, got {dt}")
        times = self.stage_times(t_n, dt)
        h = 0.5 * dt * self.scheme.gaps

        stages = [u0]
        g_im = [self.problem.g_implicit(u0)]
        g_ex = [self._g_explicit(u0, times[0])]
        for i in range(self.scheme.M - 1):
            u, ec = self.problem.solve(stages[i] + h[i] * g_ex[i], h[i])
            stages.append(u)
            g_im.append(-ec)
            g_ex.append(self._g_explicit(u, times[i + 1]))
        return StageState(stages, g_im, g_ex, t_n, dt)

    def state_from_stages(self, stages: List[np.ndarray], t_n: float, dt: float) -> StageState:
        times = self.stage_times(t_n, dt)
        return StageState(
            list(stages),
            [self.problem.g_implicit(u) for u in stages],
            [self._g_explicit(u, t) for u, t in zip(stages, times)],
            t_n,
            dt,
        )

    def sweep(self, state: StageState, start: int = 0, adaptive: bool = False) -> Tuple[StageState, int, int, int]:
        """
        One correction sweep over subintervals start..M-2 (0-based).

        Returns (new_state, solves, acceptances, restart index).
        """
        M = self.scheme.M
        dt = state.dt
        times = self.stage_times(state.t_n, dt)
        h = 0.5 * dt * self.scheme.gaps
        w = 0.5 * dt * self.scheme.weights
        g = state.g_values

        c = list(state.stages)
        c_im = list(state.g_implicit)
        c_ex = list(state.g_explicit)
        solves = accepted = 0
        k = start
        for i in range(start, M - 1):
            quad = sum(w[i, j] * g[j] for j in range(M))
            rhs = c[i] + h[i] * (c_ex[i] - state.g_implicit[i + 1] - state.g_explicit[i]) + quad
            u, ec = self.problem.solve(rhs, h[i])
            solves += 1
            c[i + 1] = u
            c_im[i + 1] = -ec
            c_ex[i + 1] = self._g_explicit(u, times[i + 1])

            if adaptive:
                if self.accepts(self.problem.convex_concave_gap(u, c[i], ec)):
                    c[i] = u
                    c_im[i] = c_im[i + 1]
                    c_ex[i] = self._g_explicit(u, times[i])
                    k = i
                    accepted += 1
        return StageState(c, c_im, c_ex, state.t_n, dt, state.grid), solves, accepted, k

    # -------------------------------------------------
    # Steps
    # -------------------------------------------------
    def step(self, u0: np.ndarray, t_n: float, dt: float) -> Tuple[np.ndarray, int, int]:
        """SDC_M^K: returns (phi^{n+1}, correction solves, 0)."""
        state = self.predict(u0, t_n, dt)
        solves = 0
        for _ in range(self.scheme.K):
            state, n, _, _ = self.sweep(state, 0, adaptive=False)
            solves += n
        return state.stages[-1], solves, 0

    def adaptive_step(self, u0: np.ndarray, t_n: float, dt: float) -> Tuple[np.ndarray, int, int]:
        """ASDC_M^K: returns (phi^{n+1}, correction solves, acceptances)."""
        state = self.predict(u0, t_n, dt)
        solves = accepted = 0
        k = 0
        for _ in range(self.scheme.K):
            state, n, a, k = self.sweep(state, k, adaptive=True)
            solves += n
            accepted += a
        return state.stages[-1], solves, accepted


# =========================================================
#   ScalarField-level operations
# =========================================================

def _integrator(grid: Grid, scheme: SdcScheme, p: ModelParams, src: Optional[Source], workers=None) -> SdcIntegrator:
    return SdcIntegrator(LBModel(grid, p, workers), scheme, src)


def sdc_predict(
    phi_n: ScalarField,
    scheme: SdcScheme,
    dt: float,
    t_n: float,
    p: ModelParams,
    src: Optional[Source] = None,
) -> StageState:
    state = _integrator(phi_n.grid, scheme, p, src).predict(phi_n.values, t_n, dt)
    state.grid = phi_n.grid
    return state


def sdc_correct_sweep(
    state: StageState,
    scheme: SdcScheme,
    p: ModelParams,
    src: Optional[Source] = None,
    start_index: int = 1,
) -> StageState:
    """start_index counts stages from 1, as phi^c_1 is the step's initial value."""
    if state.grid is None:
        raise PreconditionError("stage state has no grid attached")
    if not 1 <= start_index <= scheme.M - 1:
        raise PreconditionError(f"start_index must lie in 1..{scheme.M - 1}, got {start_index}")
    new_state, _, _, _ = _integrator(state.grid, scheme, p, src).sweep(state, start_index - 1)
    return new_state


def sdc_step(
    phi_n: ScalarField,
    scheme: SdcScheme,
    dt: float,
    t_n: float,
    p: ModelParams,
    src: Optional[Source] = None,
) -> ScalarField:
    u, _, _ = _integrator(phi_n.grid, scheme, p, src).step(phi_n.values, t_n, dt)
    return ScalarField(phi_n.grid, u)


def asdc_step(
    phi_n: ScalarField,
    scheme: SdcScheme,
    dt: float,
    t_n: float,
    p: ModelParams,
    src: Optional[Source] = None,
) -> Tuple[ScalarField, int]:
    u, solves, _ = _integrator(phi_n.grid, scheme, p, src).adaptive_step(phi_n.values, t_n, dt)
    return ScalarField(phi_n.grid, u), solves


# =========================================================
#   Relaxation loop
# =========================================================

class StopMode(str, Enum):
    REFERENCE_GAP = "gap"
    ENERGY_INCREMENT = "increment"
    MAX_ITERS = "iters"


@dataclass(frozen=True)
class StopRule:
    mode: StopMode = StopMode.REFERENCE_GAP
    epsilon: float = 1e-12
    e_ref: Optional[float] = None
    max_iters: int = 5000

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", StopMode(self.mode))
        if not self.epsilon > 0.0:
            raise PreconditionError(f"stop tolerance must be positive, got {self.epsilon}")
        if self.max_iters < 0:
            raise PreconditionError(f"max_iters must be >= 0, got {self.max_iters}")
        if self.mode is StopMode.REFERENCE_GAP and self.e_ref is None:
            raise PreconditionError("reference-gap stopping needs a reference energy")

    def satisfied(self, previous: Optional[float], energy: float) -> bool:
        if self.mode is StopMode.REFERENCE_GAP:
            return energy - self.e_ref <= self.epsilon
        if self.mode is StopMode.ENERGY_INCREMENT:
            return previous is not None and abs(previous - energy) <= self.epsilon
        return False

    def undershoots(self, energy: float) -> bool:
        """True when a gap run sits more than epsilon below its reference energy."""
        return self.mode is StopMode.REFERENCE_GAP and energy - self.e_ref < -self.epsilon

    def increment_fallback(self) -> "StopRule":
        """Increment rule on the same budget, epsilon scaled to the reference's magnitude."""
        return StopRule(StopMode.ENERGY_INCREMENT, self.epsilon * max(1.0, abs(self.e_ref)), self.e_ref, self.max_iters)


Observer = Callable[[int, np.ndarray, RunRecord], None]


def _leave_reference_gap(stop: StopRule, energy: float, it: int, label: str, log: RunLog) -> StopRule:
    # below e_ref - eps the gap rule holds for every later iterate
    if not stop.undershoots(energy):
        return stop
    fallback = stop.increment_fallback()
    log.stop = fallback.mode.value
    log_mgr.log(
        "relax",
        f"{label}: E={energy:.13f} is below the reference {stop.e_ref:.13f} at iteration {it}, "
        f"stopping on energy increments <= {fallback.epsilon:.1e} instead",
        level="warn",
        bubble=True,
        extra={"energy": energy, "e_ref": stop.e_ref, "eps": fallback.epsilon},
    )
    return fallback


def relax(
    phi_0: ScalarField,
    scheme: SdcScheme,
    dt: float,
    p: ModelParams,
    stop: StopRule,
    adaptive: bool = False,
    *,
    src: Optional[Source] = None,
    observer: Optional[Observer] = None,
    workers: Optional[int] = None,
) -> Tuple[ScalarField, RunLog]:
    """
    Iterate SDC/ASDC steps from a zero-mean seed until the stop rule fires.

    Non-convergence is reported through log.converged, never raised.
    """
    grid = phi_0.grid
    mean0 = float(np.sum(phi_0.values)) / grid.size
    if abs(mean0) > MASS_TOL:
        raise PreconditionError(f"seed mean {mean0:.3e} is not zero")

    model = LBModel(grid, p, workers)
    integrator = SdcIntegrator(model, scheme, src)
    advance = integrator.adaptive_step if adaptive else integrator.step
    label = ("A" if adaptive else "") + scheme.label

    log = RunLog(label=label, e_ref=stop.e_ref, stop=stop.mode.value)
    u = phi_0.values.copy()
    t = 0.0
    energy = model.energy(u)
    clock = time.perf_counter()
    log.append(RunRecord.of(0, t, energy, stop.e_ref, u, 0, 0, 0.0))

    log_mgr.log(
        "relax",
        f"{label} dt={dt} N={grid.n} d={grid.d}: start, E={energy:.13f}",
        extra={"alpha": p.alpha, "gamma": p.gamma, "S": p.S, "stop": stop.mode.value, "eps": stop.epsilon},
    )

    stop = _leave_reference_gap(stop, energy, 0, label, log)
    if stop.satisfied(None, energy):
        log.converged = True
    else:
        for it in range(1, stop.max_iters + 1):
            u_next, solves, accepted = advance(u, t, dt)
            previous, energy = energy, model.energy(u_next)
            if not np.isfinite(energy):
                # keep the last finite iterate so the caller still gets a field
                log_mgr.log("relax", f"{label}: energy blew up at iteration {it}", level="error", bubble=True)
                break
            u = u_next
            t += dt
            record = RunRecord.of(it, t, energy, stop.e_ref, u, solves, accepted, time.perf_counter() - clock)
            log.append(record)
            if observer is not None:
                observer(it, u, record)
            stop = _leave_reference_gap(stop, energy, it, label, log)
            if stop.satisfied(previous, energy):
                log.converged = True
                break
        else:
            log.converged = stop.mode is StopMode.MAX_ITERS

    if log.converged:
        log_mgr.log(
            "relax",
            f"{label}: done after {log.n_iteration} iterations, E={log.final_energy:.13f}",
            level="ok",
            extra=log.summary(),
        )
    else:
        log_mgr.log("relax", f"{label}: not converged after {log.n_iteration} iterations", level="warn", extra=log.summary())
    return ScalarField(grid, u), log
