from __future__ import annotations

"""
src/lbsdc/modules/runlog.py

Per-iteration record of a relaxation run and its CSV / JSON artifacts.
"""

import csv
import json
import math
from dataclasses import asdict, dataclass, field as dc_field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np


@dataclass(frozen=True)
class RunRecord:
    iter: int
    t: float
    energy: float
    gap: float
    mass: float
    corrections: int
    accepted: int
    sup_norm: float
    wall: float

    @classmethod
    def of(
        cls,
        it: int,
        t: float,
        energy: float,
        e_ref: Optional[float],
        values: np.ndarray,
        corrections: int,
        accepted: int,
        wall: float,
    ) -> "RunRecord":
        return cls(
            iter=it,
            t=t,
            energy=energy,
            gap=energy - e_ref if e_ref is not None else math.nan,
            mass=float(np.sum(values)) / values.size,
            corrections=corrections,
            accepted=accepted,
            sup_norm=float(np.max(np.abs(values))),
            wall=wall,
        )


COLUMNS: Tuple[str, ...] = tuple(f.name for f in fields(RunRecord))


@dataclass
class RunLog:
    label: str = ""
    e_ref: Optional[float] = None
    records: List[RunRecord] = dc_field(default_factory=list)
    converged: bool = False
    stop: str = ""

    def append(self, record: RunRecord) -> None:
        self.records.append(record)

    # -------------------------------------------------
    # Summary quantities
    # -------------------------------------------------
    @property
    def n_iteration(self) -> int:
        return self.records[-1].iter if self.records else 0

    @property
    def n_correction(self) -> float:
        """Average number of correction solves per iteration."""
        steps = [r.corrections for r in self.records if r.iter > 0]
        return float(np.mean(steps)) if steps else 0.0

    @property
    def final_energy(self) -> float:
        return self.records[-1].energy if self.records else math.nan

    @property
    def final_gap(self) -> float:
        return self.records[-1].gap if self.records else math.nan

    @property
    def wall(self) -> float:
        return self.records[-1].wall if self.records else 0.0

    def energy_monotone(self, slack: float = 1e-11) -> bool:
        e = [r.energy for r in self.records]
        return all(b <= a + slack for a, b in zip(e, e[1:]))

    def mass_drift(self) -> float:
        if not self.records:
            return 0.0
        m0 = self.records[0].mass
        return max(abs(r.mass - m0) for r in self.records)

    def summary(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "n_iteration": self.n_iteration,
            "n_correction": self.n_correction,
            "final_energy": self.final_energy,
            "final_gap": None if math.isnan(self.final_gap) else self.final_gap,
            "converged": self.converged,
            "stop": self.stop,
            "wall": self.wall,
        }

    def summary_line(self) -> str:
        gap = "n/a" if math.isnan(self.final_gap) else f"{self.final_gap:.4e}"
        return (
            f"{self.label}: N_iteration={self.n_iteration} N_correction={self.n_correction:.2f} "
            f"E={self.final_energy:.13f} gap={gap} wall={self.wall:.2f}s "
            f"{'converged' if self.converged else 'NOT converged'}"
        )

    # -------------------------------------------------
    # Files
    # -------------------------------------------------
    def write_csv(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(COLUMNS)
            for r in self.records:
                writer.writerow([_fmt(v) for v in asdict(r).values()])
        return path

    def write_summary(self, path: Path, extra: Optional[Dict[str, Any]] = None) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        data = self.summary()
        data.update(extra or {})
        path.write_text(json.dumps(data, indent=2), encoding="utf-8")
        return path

    @classmethod
    def read_csv(cls, path: Path, label: str = "") -> "RunLog":
        log = cls(label=label)
        with Path(path).open("r", newline="", encoding="utf-8") as f:
            for row in csv.DictReader(f):
                log.append(
                    RunRecord(
                        iter=int(row["iter"]),
                        t=float(row["t"]),
                        energy=float(row["energy"]),
                        gap=float(row["gap"]),
                        mass=float(row["mass"]),
                        corrections=int(row["corrections"]),
                        accepted=int(row["accepted"]),
                        sup_norm=float(row["sup_norm"]),
                        wall=float(row["wall"]),
                    )
                )
        return log


def _fmt(value: Any) -> str:
    # repr round-trips floats exactly
    if isinstance(value, float):
        return repr(value)
    return str(value)
