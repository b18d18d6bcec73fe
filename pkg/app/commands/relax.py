from __future__ import annotations

"""
app/commands/relax.py

Steady-state relaxation of a phase seed:
    out/runlog.csv, out/summary.json, out/final.lbfield
"""

import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from src.lbsdc.core.config import RunConfig
from src.lbsdc.core.errors import NotConverged
from src.lbsdc.core.log_manager import log_mgr
from src.lbsdc.modules.lb_model import uc_bound
from src.lbsdc.modules.phases import build_seed, get_preset
from src.lbsdc.modules.runlog import RunLog, RunRecord
from src.lbsdc.modules.sdc import relax
from src.lbsdc.modules.snapshot import write_field
from src.lbsdc.modules.spectral import ScalarField


@dataclass
class RelaxResult:
    field: ScalarField
    log: RunLog
    runlog_path: Path
    field_path: Path
    summary_path: Path


def seed_field(run: RunConfig) -> ScalarField:
    preset = get_preset(run.phase)
    return build_seed(preset, run.grid, run.params, run.amplitude, run.lattice, run.lattice_opposite)


def progress_observer(label: str):
    def observe(it: int, values: np.ndarray, record: RunRecord) -> None:
        log_mgr.log(
            "relax",
            f"{label} iter {it}: E={record.energy:.13f}",
            extra={"gap": None if math.isnan(record.gap) else record.gap, "corrections": record.corrections},
        )

    return observe


def bound_extra(field: ScalarField, run: RunConfig) -> Dict[str, Any]:
    if run.bound_lambda is None:
        return {}
    bound = uc_bound(field, run.params, run.bound_lambda)
    return {"bound": {"lambda": bound.lam, "c_of_phi": bound.c_of_phi, "sup_norm": float(np.max(np.abs(field.values)))}}


def relax_to_files(
    run: RunConfig,
    seed: ScalarField,
    out: Path,
    label: Optional[str] = None,
) -> RelaxResult:
    """Relax from seed and write the three artifacts; never raises on non-convergence."""
    tag = label or run.phase
    field, log = relax(
        seed,
        run.scheme,
        run.dt,
        run.params,
        run.stop,
        run.adaptive,
        observer=progress_observer(tag),
        workers=run.workers,
    )
    log.label = f"{tag} {log.label}"

    out = Path(out)
    runlog_path = log.write_csv(out / "runlog.csv")
    summary_path = log.write_summary(out / "summary.json", bound_extra(field, run))
    field_path = write_field(field, out / "final.lbfield")
    return RelaxResult(field, log, runlog_path, field_path, summary_path)


def cmd_relax(run: RunConfig) -> RelaxResult:
    log_mgr.log(
        "relax",
        f"{run.phase}: N={run.grid.n} dt={run.dt} {'A' if run.adaptive else ''}{run.scheme.label}",
        bubble=True,
    )
    result = relax_to_files(run, seed_field(run), run.out)
    print(result.log.summary_line(), file=sys.stdout)
    if not result.log.converged:
        raise NotConverged(f"{run.phase}: stop rule not met after {result.log.n_iteration} iterations", result.log)
    return result
