import math

import numpy as np
import pytest

from src.lbsdc.core.errors import PreconditionError
from src.lbsdc.core.log_manager import log_mgr
from src.lbsdc.modules.lb_model import LBModel, ModelParams, cs_step
from src.lbsdc.modules.phases import MANUFACTURED, TwoDPhase, TwoDPhaseSpec, make_2d_phase
from src.lbsdc.modules.sdc import (
    NodeFamily,
    SdcIntegrator,
    SdcScheme,
    StopMode,
    StopRule,
    asdc_step,
    lobatto_nodes,
    relax,
    sdc_correct_sweep,
    sdc_predict,
    sdc_step,
    subinterval_weights,
)
from src.lbsdc.modules.spectral import Grid, ScalarField, grid_mean

P = ModelParams(0.15, 0.25, 2.0)
BOX = Grid(2, (4 * math.pi, 4 * math.pi), 16)
FAMILIES = [NodeFamily.LEGENDRE, NodeFamily.CHEBYSHEV]


class LinearProblem:
    """u' = -a u + b u with the first term implicit; values are 1-element arrays."""

    def __init__(self, a: float, b: float):
        self.a, self.b = a, b

    def solve(self, rhs, dt):
        u = rhs / (1.0 + dt * self.a)
        return u, self.a * u

    def g_implicit(self, u):
        return -self.a * u

    def g_explicit(self, u, t=0.0, source=None):
        return self.b * u

    def convex_concave_gap(self, new, old, ec_new=None):
        ec = self.a * new if ec_new is None else ec_new
        return float(np.sum((ec - self.b * old) * (new - old)))


def lamellar_seed(n=32):
    grid = MANUFACTURED.grid(n)
    return make_2d_phase(grid, TwoDPhaseSpec(TwoDPhase.LAMELLAR, P.alpha, P.gamma))


# -------------------------------------------------
# Nodes and weights
# -------------------------------------------------
@pytest.mark.parametrize("family", FAMILIES)
def test_two_nodes_are_the_endpoints(family):
    assert list(lobatto_nodes(2, family)) == [-1.0, 1.0]


def test_four_chebyshev_nodes():
    assert lobatto_nodes(4, "chebyshev") == pytest.approx([-1.0, -0.5, 0.5, 1.0], abs=1e-15)


def test_four_legendre_nodes():
    r = 1 / math.sqrt(5)
    assert lobatto_nodes(4, "legendre") == pytest.approx([-1.0, -r, r, 1.0], abs=1e-15)


@pytest.mark.parametrize("M", range(3, 9))
def test_legendre_nodes_are_roots_of_the_derivative(M):
    interior = np.sort(np.polynomial.legendre.Legendre.basis(M - 1).deriv().roots().real)
    nodes = lobatto_nodes(M, NodeFamily.LEGENDRE)
    assert nodes[0] == -1.0 and nodes[-1] == 1.0
    assert nodes[1:-1] == pytest.approx(interior, abs=1e-13)
    assert np.all(np.diff(nodes) > 0)


def test_node_family_parsing():
    assert NodeFamily.parse("leg") is NodeFamily.LEGENDRE
    assert NodeFamily.parse("Chebyshev") is NodeFamily.CHEBYSHEV
    with pytest.raises(ValueError):
        NodeFamily.parse("radau")


def test_lobatto_nodes_need_two_points():
    with pytest.raises(PreconditionError):
        lobatto_nodes(1)


def test_two_node_weights_are_the_trapezoidal_rule():
    assert subinterval_weights(np.array([-1.0, 1.0])) == pytest.approx(np.array([[1.0, 1.0]]), abs=1e-15)


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("M", range(2, 9))
def test_weights_integrate_polynomials_exactly(M, family):
    nodes = lobatto_nodes(M, family)
    w = subinterval_weights(nodes)
    assert w.shape == (M - 1, M)
    assert w.sum(axis=1) == pytest.approx(np.diff(nodes), abs=1e-13)
    for q in range(M):
        exact = (nodes[1:] ** (q + 1) - nodes[:-1] ** (q + 1)) / (q + 1)
        assert np.max(np.abs(w @ nodes ** q - exact)) <= 1e-12


def test_weights_need_increasing_nodes():
    with pytest.raises(PreconditionError):
        subinterval_weights(np.array([-1.0, 0.5, 0.2, 1.0]))


def test_scheme_build_and_label():
    scheme = SdcScheme.build(4, 2, "chebyshev")
    assert scheme.label == "SDC_4^2[chebyshev]"
    assert scheme.gaps.sum() == pytest.approx(2.0)
    cs = SdcScheme.convex_splitting()
    assert (cs.M, cs.K) == (2, 0)
    with pytest.raises(PreconditionError):
        SdcScheme.build(4, -1)


# -------------------------------------------------
# Sweeps on a scalar linear problem
# -------------------------------------------------
@pytest.mark.parametrize("family", FAMILIES)
def test_collocation_solution_is_a_fixed_point_of_the_sweep(family):
    a, b, dt = 2.0, 0.7, 0.4
    lam = -a + b
    scheme = SdcScheme.build(5, 1, family)
    w = 0.5 * dt * scheme.weights
    M = scheme.M

    # U_{i+1} - U_i - lam sum_j w_ij U_j = 0 with U_1 = 1
    A = np.zeros((M - 1, M - 1))
    rhs = np.zeros(M - 1)
    for i in range(M - 1):
        A[i, i] += 1.0
        if i > 0:
            A[i, i - 1] -= 1.0
        else:
            rhs[i] += 1.0
        for j in range(M):
            if j == 0:
                rhs[i] += lam * w[i, 0]
            else:
                A[i, j - 1] -= lam * w[i, j]
    U = np.concatenate([[1.0], np.linalg.solve(A, rhs)])

    integrator = SdcIntegrator(LinearProblem(a, b), scheme)
    state = integrator.state_from_stages([np.array([u]) for u in U], 0.0, dt)
    swept, solves, _, _ = integrator.sweep(state)
    assert solves == M - 1
    got = np.array([s[0] for s in swept.stages])
    assert np.max(np.abs(got - U)) <= 1e-12


@pytest.mark.parametrize("K", [0, 1, 2, 3])
def test_each_correction_raises_the_order(K):
    a, b, T = 1.0, 0.5, 1.0
    problem = LinearProblem(a, b)
    integrator = SdcIntegrator(problem, SdcScheme.build(4, K))
    errors = []
    for dt in (0.1, 0.05):
        u = np.array([1.0])
        for n in range(int(round(T / dt))):
            u, _, _ = integrator.step(u, n * dt, dt)
        errors.append(abs(u[0] - math.exp((-a + b) * T)))
    order = math.log2(errors[0] / errors[1])
    assert order >= K + 1 - 0.3


# -------------------------------------------------
# Field-level steps
# -------------------------------------------------
def test_prediction_and_corrections_preserve_mass(smooth_field):
    phi = ScalarField(BOX, smooth_field(BOX.shape, modes=4) + 0.1)
    scheme = SdcScheme.build(4, 3)
    state = sdc_predict(phi, scheme, 1.0, 0.0, P)
    m0 = grid_mean(phi)
    assert np.array_equal(state.stages[0], phi.values)
    for i in range(scheme.M):
        assert grid_mean(state.stage_field(i)) == pytest.approx(m0, abs=1e-13)
    for _ in range(scheme.K):
        state = sdc_correct_sweep(state, scheme, P)
        for i in range(scheme.M):
            assert grid_mean(state.stage_field(i)) == pytest.approx(m0, abs=1e-13)


def test_prediction_of_zero_field_stays_zero():
    state = sdc_predict(ScalarField.zeros(BOX), SdcScheme.build(4, 1), 1.0, 0.0, P)
    assert all(np.all(s == 0) for s in state.stages)


def test_correct_sweep_start_index_is_checked():
    scheme = SdcScheme.build(4, 1)
    state = sdc_predict(ScalarField.zeros(BOX), scheme, 1.0, 0.0, P)
    with pytest.raises(PreconditionError):
        sdc_correct_sweep(state, scheme, P, start_index=4)
    with pytest.raises(PreconditionError):
        sdc_correct_sweep(state, scheme, P, start_index=0)


def test_two_nodes_reduce_to_a_cs_step(smooth_field):
    phi = ScalarField(BOX, smooth_field(BOX.shape, modes=4))
    state = sdc_predict(phi, SdcScheme.build(2, 0), 0.7, 0.0, P)
    assert state.stages[-1] == pytest.approx(cs_step(phi, 0.7, P).values, abs=1e-14)


def test_no_corrections_returns_the_prediction(smooth_field):
    phi = ScalarField(BOX, smooth_field(BOX.shape, modes=4))
    scheme = SdcScheme.build(4, 0)
    predicted = sdc_predict(phi, scheme, 1.0, 0.0, P).stages[-1]
    assert np.array_equal(sdc_step(phi, scheme, 1.0, 0.0, P).values, predicted)


def test_step_rejects_non_positive_dt():
    with pytest.raises(PreconditionError):
        sdc_step(ScalarField.zeros(BOX), SdcScheme.build(4, 1), 0.0, 0.0, P)


def test_asdc_equals_sdc_when_the_test_never_fires(smooth_field, monkeypatch):
    monkeypatch.setattr(SdcIntegrator, "accepts", lambda self, gap: False)
    phi = ScalarField(BOX, smooth_field(BOX.shape, modes=4))
    scheme = SdcScheme.build(4, 3)
    adaptive, solves = asdc_step(phi, scheme, 1.0, 0.0, P)
    assert np.array_equal(adaptive.values, sdc_step(phi, scheme, 1.0, 0.0, P).values)
    assert solves == scheme.K * (scheme.M - 1)


def test_asdc_restarts_from_the_last_accepted_stage(smooth_field, monkeypatch):
    monkeypatch.setattr(SdcIntegrator, "accepts", lambda self, gap: True)
    phi = ScalarField(BOX, smooth_field(BOX.shape, modes=4))
    scheme = SdcScheme.build(4, 3)
    _, solves = asdc_step(phi, scheme, 1.0, 0.0, P)
    # first sweep covers every subinterval, later ones only the last
    assert solves == (scheme.M - 1) + (scheme.K - 1)


@pytest.mark.parametrize("gap, scale", [(-0.3, 1.0), (-0.3, 1e6), (0.2, 1e-6), (0.2, 5.0)])
def test_acceptance_depends_only_on_the_sign(gap, scale):
    integrator = SdcIntegrator(LinearProblem(1.0, 0.0), SdcScheme.build(4, 1))
    assert integrator.accepts(gap) == integrator.accepts(gap * scale)


class _Recording:
    def __init__(self, model):
        self.model = model
        self.last_new = None
        self.last_old = None

    def solve(self, rhs, dt):
        u, ec = self.model.solve(rhs, dt)
        self.last_new = u
        return u, ec

    def g_implicit(self, u):
        return self.model.g_implicit(u)

    def g_explicit(self, u, t=0.0, source=None):
        return self.model.g_explicit(u, t, source)

    def convex_concave_gap(self, new, old, ec_new=None):
        self.last_old = old
        return self.model.convex_concave_gap(new, old, ec_new)


def test_accepted_stages_never_raise_the_energy():
    seed = lamellar_seed(32)
    model = LBModel(seed.grid, P)
    problem = _Recording(model)
    fired = []

    class Checking(SdcIntegrator):
        def accepts(self, gap):
            ok = super().accepts(gap)
            if ok:
                fired.append((model.energy(problem.last_new), model.energy(problem.last_old)))
            return ok

    integrator = Checking(problem, SdcScheme.build(4, 5))
    u = seed.values
    for n in range(5):
        u, _, _ = integrator.adaptive_step(u, float(n), 1.0)
    assert fired
    for e_new, e_old in fired:
        assert e_new <= e_old + 1e-11


def test_adaptive_sweep_gates_on_the_model_gap():
    seed = lamellar_seed(32)
    model = LBModel(seed.grid, P)
    calls = []

    class Spy(_Recording):
        def convex_concave_gap(self, new, old, ec_new=None):
            gap = super().convex_concave_gap(new, old, ec_new)
            calls.append((new.copy(), old.copy(), gap))
            return gap

    integrator = SdcIntegrator(Spy(model), SdcScheme.build(4, 2))
    state = integrator.predict(seed.values, 0.0, 1.0)
    integrator.sweep(state, 0, adaptive=True)
    assert len(calls) == 3
    for new, old, gap in calls:
        assert gap == pytest.approx(model.convex_concave_gap(new, old), rel=1e-9, abs=1e-9)


# -------------------------------------------------
# Relaxation loop
# -------------------------------------------------
def test_stop_rule_validation():
    with pytest.raises(PreconditionError):
        StopRule(StopMode.REFERENCE_GAP)
    with pytest.raises(PreconditionError):
        StopRule(StopMode.ENERGY_INCREMENT, epsilon=0.0)
    with pytest.raises(PreconditionError):
        StopRule(StopMode.MAX_ITERS, max_iters=-1)
    assert StopRule("increment").mode is StopMode.ENERGY_INCREMENT


def test_relax_needs_zero_mean_seed():
    seed = ScalarField(BOX, np.full(BOX.shape, 0.1))
    with pytest.raises(PreconditionError):
        relax(seed, SdcScheme.build(4, 1), 1.0, P, StopRule(StopMode.MAX_ITERS, max_iters=1))


def test_relax_stops_at_once_on_the_reference():
    seed = lamellar_seed(32)
    e0 = LBModel(seed.grid, P).energy(seed.values)
    field, log = relax(seed, SdcScheme.build(4, 2), 1.0, P, StopRule("gap", 1e-12, e_ref=e0))
    assert log.converged
    assert log.n_iteration == 0
    assert len(log.records) == 1
    assert log.stop == "gap"
    assert np.array_equal(field.values, seed.values)


def test_seed_below_the_reference_switches_to_increments():
    seed = lamellar_seed(32)
    e0 = LBModel(seed.grid, P).energy(seed.values)
    got = []
    log_mgr.set_status_handler(lambda level, msg: got.append((level, msg)))
    _, log = relax(seed, SdcScheme.build(4, 2), 1.0, P, StopRule("gap", 1e-12, e_ref=e0 + 1.0, max_iters=200))
    assert log.stop == "increment"
    assert log.n_iteration >= 1
    assert log.converged
    assert abs(log.records[-2].energy - log.records[-1].energy) <= 1e-12 * max(1.0, abs(e0 + 1.0))
    assert log.final_gap <= -1.0
    assert got and got[0][0] == "warn" and "below the reference" in got[0][1]


def test_undershoot_fallback_scales_its_tolerance():
    fallback = StopRule("gap", 1e-12, e_ref=-209.6, max_iters=7).increment_fallback()
    assert fallback.mode is StopMode.ENERGY_INCREMENT
    assert fallback.epsilon == pytest.approx(209.6e-12)
    assert fallback.e_ref == -209.6 and fallback.max_iters == 7
    assert StopRule("gap", 1e-12, e_ref=-0.5).increment_fallback().epsilon == 1e-12
    assert not StopRule("gap", 1e-12, e_ref=-1.0).undershoots(-1.0 - 1e-13)
    assert StopRule("gap", 1e-12, e_ref=-1.0).undershoots(-1.0 - 1e-11)
    assert not StopRule("increment", 1e-12, e_ref=-1.0).undershoots(-5.0)


def test_relax_max_iters_runs_every_step():
    seed = lamellar_seed(32)
    calls = []
    _, log = relax(
        seed,
        SdcScheme.build(4, 2),
        1.0,
        P,
        StopRule(StopMode.MAX_ITERS, max_iters=4),
        observer=lambda it, u, rec: calls.append(it),
    )
    assert log.converged
    assert log.n_iteration == 4
    assert calls == [1, 2, 3, 4]
    assert log.n_correction == pytest.approx(6.0)
    assert math.isnan(log.final_gap)


def test_relax_reports_non_convergence_without_raising():
    seed = lamellar_seed(32)
    _, log = relax(seed, SdcScheme.build(4, 1), 1.0, P, StopRule("gap", 1e-12, e_ref=-1e6, max_iters=3))
    assert not log.converged
    assert log.n_iteration == 3


@pytest.mark.parametrize("adaptive", [False, True])
@pytest.mark.parametrize("scheme", [SdcScheme.convex_splitting(), SdcScheme.build(4, 2)])
def test_relax_conserves_mass_over_100_steps(smooth_field, scheme, adaptive):
    seed = ScalarField(BOX, smooth_field(BOX.shape, modes=4))
    _, log = relax(seed, scheme, 1.0, P, StopRule(StopMode.MAX_ITERS, max_iters=100), adaptive)
    assert log.n_iteration == 100
    assert log.mass_drift() <= 1e-12


def test_relax_is_deterministic():
    runs = [
        relax(lamellar_seed(32), SdcScheme.build(4, 3), 1.0, P, StopRule("increment", 1e-10, max_iters=40), True)[1]
        for _ in range(2)
    ]
    assert [r.energy for r in runs[0].records] == [r.energy for r in runs[1].records]
    assert [r.corrections for r in runs[0].records] == [r.corrections for r in runs[1].records]


def test_cs_relaxation_energy_is_monotone():
    _, log = relax(lamellar_seed(32), SdcScheme.convex_splitting(), 1.0, P, StopRule(StopMode.MAX_ITERS, max_iters=50))
    assert log.energy_monotone(1e-11)
