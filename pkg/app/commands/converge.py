from __future__ import annotations

"""
app/commands/converge.py

Temporal convergence study on the manufactured solution: SDC_M^K for every
K in `corrections` and every dt in `dts`, integrated from exact(0) to T with
the source term, errors measured against exact(T).
"""

import csv
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np

from src.lbsdc.core.config import RunConfig
from src.lbsdc.core.errors import PreconditionError
from src.lbsdc.core.log_manager import log_mgr
from src.lbsdc.modules.lb_model import LBModel
from src.lbsdc.modules.phases import ManufacturedCase
from src.lbsdc.modules.sdc import SdcIntegrator, SdcScheme
from src.lbsdc.modules.spectral import Grid, weighted_sum

RESIDUAL_TOL = 1e-10
RESIDUAL_TIMES = (0.0, 0.5, 2.0)

TABLE_COLUMNS = ("K", "dt", "l2_err", "l2_order", "max_err", "max_order")


@dataclass
class ConvergenceRow:
    K: int
    dt: float
    l2_err: float
    max_err: float
    l2_order: float = math.nan
    max_order: float = math.nan

    def as_csv(self) -> List[str]:
        return [
            str(self.K),
            repr(self.dt),
            repr(self.l2_err),
            "" if math.isnan(self.l2_order) else repr(self.l2_order),
            repr(self.max_err),
            "" if math.isnan(self.max_order) else repr(self.max_order),
        ]


def check_source(case: ManufacturedCase, grid: Grid) -> float:
    """The closed-form source must match the numerical residual before use."""
    worst = max(case.residual(t, grid) for t in RESIDUAL_TIMES)
    if worst > RESIDUAL_TOL:
        raise PreconditionError(f"manufactured source misses the residual check by {worst:.3e}")
    log_mgr.log("converge", f"manufactured source residual {worst:.3e}", level="ok")
    return worst


def run_cell(
    case: ManufacturedCase,
    grid: Grid,
    M: int,
    K: int,
    family,
    dt: float,
    T: float,
    workers: Optional[int] = None,
) -> ConvergenceRow:
    scheme = SdcScheme.build(M, K, family)
    integrator = SdcIntegrator(LBModel(grid, case.params(), workers), scheme, case.source_for(grid))

    steps = int(round(T / dt))
    u = case.exact(0.0, grid).values
    for n in range(steps):
        u, _, _ = integrator.step(u, n * dt, dt)

    err = u - case.exact(T, grid).values
    row = ConvergenceRow(
        K=K,
        dt=dt,
        l2_err=math.sqrt(weighted_sum(grid, err ** 2)),
        max_err=float(np.max(np.abs(err))),
    )
    log_mgr.log("converge", f"K={K} dt={dt}: l2={row.l2_err:.4e} max={row.max_err:.4e}")
    return row


def fill_orders(rows: List[ConvergenceRow]) -> List[ConvergenceRow]:
    """log(err_prev / err) / log(dt_prev / dt) between successive dt of one K."""
    rows = sorted(rows, key=lambda r: (r.K, -r.dt))
    for prev, row in zip(rows, rows[1:]):
        if prev.K != row.K:
            continue
        ratio = math.log(prev.dt / row.dt)
        if prev.l2_err > 0.0 and row.l2_err > 0.0:
            row.l2_order = math.log(prev.l2_err / row.l2_err) / ratio
        if prev.max_err > 0.0 and row.max_err > 0.0:
            row.max_order = math.log(prev.max_err / row.max_err) / ratio
    return rows


def write_table(rows: List[ConvergenceRow], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(TABLE_COLUMNS)
        for row in rows:
            writer.writerow(row.as_csv())
    return path


def format_table(rows: List[ConvergenceRow]) -> str:
    fmt_order = lambda x: "   -  " if math.isnan(x) else f"{x:6.3f}"
    lines = [f"{'K':>2} {'dt':>10} {'l2_err':>12} {'order':>6} {'max_err':>12} {'order':>6}"]
    for r in rows:
        lines.append(
            f"{r.K:>2} {r.dt:>10.6f} {r.l2_err:>12.4e} {fmt_order(r.l2_order)} "
            f"{r.max_err:>12.4e} {fmt_order(r.max_order)}"
        )
    return "\n".join(lines)


def cmd_converge(run: RunConfig) -> List[ConvergenceRow]:
    case = ManufacturedCase(alpha=run.params.alpha, gamma=run.params.gamma, S=run.params.S)
    grid = run.grid
    check_source(case, grid)

    cells = [(K, dt) for K in run.corrections for dt in run.dts]
    log_mgr.log(
        "converge",
        f"SDC_{run.scheme.M}^K study: {len(cells)} cells on N={grid.n}, T={run.T}, jobs={run.jobs}",
        bubble=True,
    )
    with ThreadPoolExecutor(max_workers=run.jobs) as pool:
        futures = [
            pool.submit(run_cell, case, grid, run.scheme.M, K, run.scheme.family, dt, run.T, run.workers)
            for K, dt in cells
        ]
        rows = fill_orders([f.result() for f in futures])

    path = write_table(rows, run.out / "table.csv")
    print(format_table(rows), file=sys.stdout)
    log_mgr.log("converge", f"wrote {path}", level="ok", bubble=True)
    return rows
