"""
End-to-end reproductions of the reference values: temporal orders on the
manufactured solution, 2D reference energies and iteration counts, and the
3D cubic phases (marked slow). The cubic reference energies are not reached;
that check is an expected failure and the relaxations are checked for what
they do reach.
"""

import pytest

from app.commands.converge import fill_orders, run_cell
from src.lbsdc.modules.phases import MANUFACTURED, build_seed, get_preset
from src.lbsdc.modules.sdc import NodeFamily, SdcScheme, StopMode, StopRule, relax

pytestmark = pytest.mark.acceptance

DTS = (0.05, 0.025, 0.0125, 0.00625)

# finest-pair L2 order and the L2 errors at dt = 0.05 and 0.00625
REFERENCE = {
    1: (1.9165, 1.7949e-05, 4.0540e-07),
    2: (2.8468, 1.5222e-06, 6.0440e-09),
    3: (3.7755, 1.2966e-07, 9.2766e-11),
    4: (4.7026, 1.0856e-08, 1.4514e-12),
}

GYR_OPPOSITE = "(1,2,1) (-1,2,1) (2,1,1) (1,1,2) (1,-1,2) (2,1,-1)"


@pytest.fixture(scope="module")
def convergence_rows():
    grid = MANUFACTURED.grid(64)
    rows = [run_cell(MANUFACTURED, grid, 4, K, NodeFamily.LEGENDRE, dt, 4.0) for K in REFERENCE for dt in DTS]
    return fill_orders(rows)


def relax_phase(name, n, M, K, adaptive, family=NodeFamily.LEGENDRE, max_iters=300, **seed):
    preset = get_preset(name)
    grid = preset.grid(n)
    params = preset.params()
    phi_0 = build_seed(preset, grid, params, **seed)
    stop = StopRule(StopMode.REFERENCE_GAP, 1e-12, preset.e_ref, max_iters)
    return relax(phi_0, SdcScheme.build(M, K, family), preset.dt, params, stop, adaptive)[1]


# -------------------------------------------------
# Temporal convergence
# -------------------------------------------------
@pytest.mark.parametrize("K", sorted(REFERENCE))
def test_convergence_orders(convergence_rows, K):
    order, _, _ = REFERENCE[K]
    finest = [r for r in convergence_rows if r.K == K][-1]
    assert finest.dt == DTS[-1]
    assert finest.l2_order == pytest.approx(order, abs=0.3)
    assert finest.max_order == pytest.approx(order, abs=0.3)


@pytest.mark.parametrize("K", sorted(REFERENCE))
def test_convergence_errors(convergence_rows, K):
    _, coarse, fine = REFERENCE[K]
    rows = [r for r in convergence_rows if r.K == K]
    assert rows[0].l2_err == pytest.approx(coarse, rel=0.1)
    assert rows[-1].l2_err == pytest.approx(fine, rel=0.1)


# -------------------------------------------------
# 2D phases
# -------------------------------------------------
@pytest.mark.parametrize("name", ["lamellar", "cylindrical"])
@pytest.mark.parametrize("family", list(NodeFamily))
def test_2d_reference_energies(name, family):
    log = relax_phase(name, 256, 4, 5, True, family)
    assert log.converged
    assert log.final_energy == pytest.approx(get_preset(name).e_ref, abs=1e-8)
    assert log.energy_monotone()


def test_lamellar_iteration_counts():
    sdc = relax_phase("lamellar", 256, 4, 2, False)
    asdc_same = relax_phase("lamellar", 256, 4, 2, True)
    asdc = relax_phase("lamellar", 256, 4, 5, True)
    assert sdc.converged and asdc_same.converged and asdc.converged
    assert abs(sdc.n_iteration - 37) <= 3
    assert abs(asdc.n_iteration - 21) <= 3
    assert asdc_same.n_iteration <= sdc.n_iteration


def test_cylindrical_iteration_count():
    log = relax_phase("cylindrical", 256, 4, 5, True)
    assert log.converged
    assert abs(log.n_iteration - 21) <= 3


# -------------------------------------------------
# 3D phases
# -------------------------------------------------
CUBIC_CASES = [
    ("a15", 51, 51, {}),
    ("bcc", 16, 16, {}),
    ("fcc", 9, 9, {}),
    ("gyr", 28, 33, {"opposite": GYR_OPPOSITE}),
]


@pytest.mark.slow
@pytest.mark.xfail(
    strict=True,
    reason="the cubic reference energies lie above the relaxed states of this functional "
    "(the bcc seed already sits below its reference); see the open question in DESIGN.md",
)
@pytest.mark.parametrize("name, low, high, seed", CUBIC_CASES)
def test_3d_reference_energies(name, low, high, seed):
    log = relax_phase(name, 128, 4, 4, True, max_iters=80, **seed)
    assert log.converged
    assert log.stop == "gap"
    assert log.final_energy == pytest.approx(get_preset(name).e_ref, abs=1e-6)
    assert 0.8 * low <= log.n_iteration <= 1.2 * high


@pytest.mark.slow
@pytest.mark.parametrize("name, low, high, seed", CUBIC_CASES)
def test_3d_relaxation_goes_below_the_reference(name, low, high, seed):
    log = relax_phase(name, 16, 4, 4, True, max_iters=30, **seed)
    assert log.stop == "increment"
    assert log.n_iteration >= 1
    assert log.final_energy < get_preset(name).e_ref
    assert log.final_energy <= log.records[0].energy
    assert log.mass_drift() <= 1e-12
