from __future__ import annotations

"""
app/commands/energy_ref.py

Reference energy by grid refinement: relax at N, prolong the result to 2N,
relax again, and report both energies with the number of significant digits
they share. The 2N value is the reference candidate.
"""

import csv
import math
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List

from src.lbsdc.core.config import RunConfig
from src.lbsdc.core.errors import NotConverged
from src.lbsdc.core.log_manager import log_mgr
from src.lbsdc.modules.sdc import StopMode, StopRule
from src.lbsdc.modules.spectral import Grid, resample

from .relax import RelaxResult, relax_to_files, seed_field

MAX_DIGITS = 16


@dataclass
class EnergyReference:
    coarse: RelaxResult
    fine: RelaxResult

    @property
    def energy(self) -> float:
        return self.fine.log.final_energy

    @property
    def difference(self) -> float:
        return self.fine.log.final_energy - self.coarse.log.final_energy

    @property
    def converged(self) -> bool:
        return self.coarse.log.converged and self.fine.log.converged

    @property
    def stable_digits(self) -> int:
        return stable_digits(self.coarse.log.final_energy, self.fine.log.final_energy)


def stable_digits(a: float, b: float) -> int:
    """Significant decimal digits on which a and b agree."""
    diff = abs(a - b)
    scale = max(abs(a), abs(b))
    if diff == 0.0:
        return MAX_DIGITS
    if scale == 0.0:
        return 0
    return max(0, min(MAX_DIGITS, int(math.floor(-math.log10(diff / scale)))))


def refinement_stop(stop: StopRule) -> StopRule:
    """
    The reference energy is the unknown here, so a gap rule becomes an
    energy-increment rule with the same tolerance.
    """
    if stop.mode is StopMode.REFERENCE_GAP:
        return StopRule(StopMode.ENERGY_INCREMENT, stop.epsilon, stop.e_ref, stop.max_iters)
    return stop


def write_energy_table(ref: EnergyReference, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(("n", "energy", "iterations", "converged"))
        for result in (ref.coarse, ref.fine):
            log = result.log
            writer.writerow((result.field.grid.n, repr(log.final_energy), log.n_iteration, int(log.converged)))
    return path


def cmd_energy_ref(run: RunConfig) -> EnergyReference:
    stop = refinement_stop(run.stop)
    local = replace(run, stop=stop)
    n = run.grid.n

    log_mgr.log("energy-ref", f"{run.phase}: relaxing at N={n} and N={2 * n}", bubble=True)
    coarse = relax_to_files(local, seed_field(run), run.out / f"n{n}", label=f"{run.phase} N={n}")

    fine_grid = Grid(run.grid.d, run.grid.lengths, 2 * n)
    fine_seed = resample(coarse.field, fine_grid.n)
    fine = relax_to_files(replace(local, grid=fine_grid), fine_seed, run.out / f"n{2 * n}", label=f"{run.phase} N={2 * n}")

    ref = EnergyReference(coarse, fine)
    write_energy_table(ref, run.out / "energy_ref.csv")

    lines: List[str] = [
        coarse.log.summary_line(),
        fine.log.summary_line(),
        f"E(N={2 * n}) = {ref.energy:.16g}  E(2N) - E(N) = {ref.difference:.3e}  stable digits: {ref.stable_digits}",
    ]
    print("\n".join(lines), file=sys.stdout)
    log_mgr.log(
        "energy-ref",
        f"{run.phase}: E={ref.energy:.16g} ({ref.stable_digits} stable digits)",
        level="ok" if ref.converged else "warn",
        bubble=True,
    )
    if not ref.converged:
        raise NotConverged(f"{run.phase}: refinement runs did not both converge", fine.log)
    return ref

