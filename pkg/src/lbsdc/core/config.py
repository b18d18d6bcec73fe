from __future__ import annotations

"""
src/lbsdc/core/config.py

Run configuration: a flat `key = value` text file merged over defaults, then
command-line overrides, then validated into a typed RunConfig before any
compute starts.

    # lamellar.cfg
    phase   = lamellar
    scheme  = 4,5
    adaptive = true
    n       = 256
"""

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

from .errors import ConfigError, LBError
from .log_manager import log_mgr
from .paths import runs_dir
from ..modules.lb_model import ModelParams
from ..modules.phases import BOX_2D, MANUFACTURED, get_preset, parse_lattice, validate_lattice
from ..modules.sdc import SdcScheme, StopMode, StopRule
from ..modules.spectral import Grid

_DEFAULT: Dict[str, Optional[str]] = {
    "experiment": "relax",
    "phase": "lamellar",
    "d": None,
    "n": "64",
    "lengths": None,
    "cell": None,
    "alpha": None,
    "gamma": None,
    "S": "2",
    "scheme": "4,4",
    "nodes": "legendre",
    "adaptive": "false",
    "dt": None,              # phase preset (1 in 2D)
    "dts": "0.05,0.025,0.0125,0.00625",
    "T": "4",
    "corrections": "1,2,3,4",
    "stop": None,            # gap when a reference energy is known, else increment
    "eps": "1e-12",
    "eref": None,
    "max_iters": "5000",
    "amplitude": None,
    "lattice": None,
    "lattice_opposite": None,
    "out": None,
    "workers": None,
    "jobs": "1",
    "bound_lambda": None,
}

EXPERIMENTS = ("converge", "relax", "energy-ref")
MANUFACTURED_PHASE = "manufactured"

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    phase: str
    grid: Grid
    params: ModelParams
    scheme: SdcScheme
    adaptive: bool
    dt: float
    dts: Tuple[float, ...]
    T: float
    corrections: Tuple[int, ...]
    stop: StopRule
    amplitude: Optional[float]
    lattice: Optional[str]
    lattice_opposite: Optional[str]
    out: Path
    workers: Optional[int]
    jobs: int
    bound_lambda: Optional[float]

    @property
    def manufactured(self) -> bool:
        return self.phase == MANUFACTURED_PHASE

    @property
    def e_ref(self) -> Optional[float]:
        return self.stop.e_ref


class Config:
    def __init__(
        self,
        path: Path | None = None,
        overrides: Mapping[str, Any] | None = None,
        base: Mapping[str, Any] | None = None,
    ):
        """Layers, lowest first: _DEFAULT, base, the file at path, overrides."""
        self.path = Path(path) if path is not None else None
        self.data: Dict[str, Optional[str]] = dict(_DEFAULT)
        if base:
            self.update(base)
        if self.path is not None:
            self.load()
        if overrides:
            self.update(overrides)

    # -------------------------------------------------
    # key = value files
    # -------------------------------------------------
    def load(self) -> None:
        if self.path is None or not self.path.exists():
            raise ConfigError(f"config file not found: {self.path}")
        text = self.path.read_text(encoding="utf-8")
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{self.path.name}:{lineno}: expected 'key = value', got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            self._set(key, value, where=f"{self.path.name}:{lineno}")

    def update(self, overrides: Mapping[str, Any]) -> None:
        for key, value in overrides.items():
            if value is None:
                continue
            if isinstance(value, bool):
                value = "true" if value else "false"
            self._set(key, str(value), where="override")

    def save(self, path: Path | None = None) -> Path:
        target = Path(path) if path is not None else self.path
        if target is None:
            raise ConfigError("no path to save the config to")
        target.parent.mkdir(parents=True, exist_ok=True)
        width = max(len(k) for k in self.data)
        lines = [f"{k.ljust(width)} = {v}" for k, v in self.data.items() if v is not None]
        target.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return target

    def _set(self, key: str, value: str, where: str) -> None:
        if key not in _DEFAULT:
            raise ConfigError(f"{where}: unknown key '{key}'")
        self.data[key] = value if value != "" else None

    def get(self, key: str) -> Optional[str]:
        return self.data.get(key)

    # -------------------------------------------------
    # Validation
    # -------------------------------------------------
    def to_run_config(self) -> RunConfig:
        try:
            run = self._build()
        except ConfigError:
            raise
        except (LBError, ValueError) as e:
            raise ConfigError(str(e)) from e
        log_mgr.log("config", f"{run.experiment} {run.phase}: config validated", extra=self.data)
        return run

    def _build(self) -> RunConfig:
        experiment = self._choice("experiment", EXPERIMENTS)
        phase = (self.get("phase") or "").strip().lower()
        n = self._int("n")

        if experiment == "converge" and phase != MANUFACTURED_PHASE:
            raise ConfigError("the convergence study runs on phase = manufactured")

        if phase == MANUFACTURED_PHASE:
            if experiment != "converge":
                raise ConfigError("phase = manufactured is only used by the convergence study")
            if self.get("lengths") or self.get("cell"):
                raise ConfigError("the manufactured case fixes its own box")
            d, lengths = 2, BOX_2D
            alpha = self._float("alpha", MANUFACTURED.alpha)
            gamma = self._float("gamma", MANUFACTURED.gamma)
            dt_default, e_ref_default, defaults_match = 1.0, None, False
        else:
            preset = get_preset(phase)
            d = self._int("d", preset.d)
            if d != preset.d:
                raise ConfigError(f"phase {phase} is {preset.d}D, config says d={d}")
            if self.get("lengths"):
                lengths = self._floats("lengths")
            elif self.get("cell"):
                lengths = (self._float("cell"),) * d
            else:
                lengths = preset.lengths
            alpha = self._float("alpha", preset.alpha)
            gamma = self._float("gamma", preset.gamma)
            dt_default = preset.dt
            defaults_match = (
                alpha == preset.alpha
                and gamma == preset.gamma
                and len(lengths) == len(preset.lengths)
                and all(math.isclose(a, b, rel_tol=1e-12) for a, b in zip(lengths, preset.lengths))
            )
            e_ref_default = preset.e_ref if defaults_match else None

        grid = Grid(d, lengths, n)
        params = ModelParams(alpha, gamma, self._float("S"))

        scheme_text = (self.get("scheme") or "").strip().lower()
        nodes = self.get("nodes") or "legendre"
        if scheme_text == "cs":
            scheme = SdcScheme.convex_splitting()
        else:
            parts = [p.strip() for p in scheme_text.split(",")]
            if len(parts) != 2:
                raise ConfigError(f"scheme must be 'M,K' or 'cs', got {scheme_text!r}")
            try:
                M, K = int(parts[0]), int(parts[1])
            except ValueError as e:
                raise ConfigError(f"scheme must be 'M,K' or 'cs', got {scheme_text!r}") from e
            scheme = SdcScheme.build(M, K, nodes)

        dt = self._float("dt", dt_default)
        if not dt > 0.0:
            raise ConfigError(f"dt must be positive, got {dt}")
        dts = self._floats("dts")
        if any(not x > 0.0 for x in dts):
            raise ConfigError(f"dts must be positive, got {dts}")
        T = self._float("T")
        if not T > 0.0:
            raise ConfigError(f"T must be positive, got {T}")
        for x in dts:
            steps = T / x
            if abs(steps - round(steps)) > 1e-9 * steps:
                raise ConfigError(f"T={T} is not a whole number of steps of {x}")
        corrections = tuple(int(x) for x in self._list("corrections"))
        if any(k < 0 for k in corrections):
            raise ConfigError(f"corrections must be >= 0, got {corrections}")

        e_ref = self._float("eref", e_ref_default)
        stop_text = self.get("stop")
        mode = StopMode(stop_text) if stop_text else (StopMode.REFERENCE_GAP if e_ref is not None else StopMode.ENERGY_INCREMENT)
        stop = StopRule(mode, self._float("eps"), e_ref, self._int("max_iters"))

        amplitude = self._float("amplitude", None)
        if amplitude is not None and not amplitude > 0.0:
            raise ConfigError(f"amplitude must be positive, got {amplitude}")
        lattice, opposite = self.get("lattice"), self.get("lattice_opposite")
        if d == 3:
            # a partial override keeps the preset's other group
            preset = get_preset(phase)
            lattice = preset.plain if lattice is None else lattice
            opposite = preset.opposite if opposite is None else opposite
            points = parse_lattice(lattice, 1) + parse_lattice(opposite, -1)
            validate_lattice(phase, points, n)
        elif lattice is not None or opposite is not None:
            raise ConfigError("lattice overrides apply to 3D phases only")

        workers = self._int("workers", None)
        jobs = self._int("jobs")
        if jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {jobs}")
        bound_lambda = self._float("bound_lambda", None)
        if bound_lambda is not None and not bound_lambda > 0.0:
            raise ConfigError(f"bound_lambda must be positive, got {bound_lambda}")

        out = Path(self.get("out")) if self.get("out") else runs_dir() / f"{experiment}-{phase}"

        return RunConfig(
            experiment=experiment,
            phase=phase,
            grid=grid,
            params=params,
            scheme=scheme,
            adaptive=self._bool("adaptive"),
            dt=dt,
            dts=dts,
            T=T,
            corrections=corrections,
            stop=stop,
            amplitude=amplitude,
            lattice=lattice,
            lattice_opposite=opposite,
            out=out,
            workers=workers,
            jobs=jobs,
            bound_lambda=bound_lambda,
        )

    # -------------------------------------------------
    # Typed accessors
    # -------------------------------------------------
    _MISSING = object()

    def _raw(self, key: str, default: Any):
        value = self.get(key)
        if value is None:
            if default is Config._MISSING:
                raise ConfigError(f"missing value for '{key}'")
            return None
        return value

    def _float(self, key: str, default: Any = _MISSING) -> Optional[float]:
        value = self._raw(key, default)
        if value is None:
            return default
        try:
            out = float(value)
        except ValueError as e:
            raise ConfigError(f"'{key}' must be a number, got {value!r}") from e
        if not math.isfinite(out):
            raise ConfigError(f"'{key}' must be finite, got {value!r}")
        return out

    def _int(self, key: str, default: Any = _MISSING) -> Optional[int]:
        value = self._raw(key, default)
        if value is None:
            return default
        try:
            return int(value)
        except ValueError as e:
            raise ConfigError(f"'{key}' must be an integer, got {value!r}") from e

    def _bool(self, key: str) -> bool:
        value = (self.get(key) or "false").strip().lower()
        if value in _TRUE:
            return True
        if value in _FALSE:
            return False
        raise ConfigError(f"'{key}' must be true or false, got {value!r}")

    def _list(self, key: str) -> Tuple[str, ...]:
        value = self._raw(key, Config._MISSING)
        items = tuple(x.strip() for x in value.split(",") if x.strip())
        if not items:
            raise ConfigError(f"'{key}' must list at least one value")
        return items

    def _floats(self, key: str) -> Tuple[float, ...]:
        try:
            return tuple(float(x) for x in self._list(key))
        except ValueError as e:
            raise ConfigError(f"'{key}' must be a comma list of numbers, got {self.get(key)!r}") from e

    def _choice(self, key: str, choices: Tuple[str, ...]) -> str:
        value = (self.get(key) or "").strip().lower()
        if value not in choices:
            raise ConfigError(f"'{key}' must be one of {', '.join(choices)}, got {value!r}")
        return value
