import os
from pathlib import Path


def app_dir() -> Path:
    """Root of per-user state; LBSDC_HOME overrides ~/.lbsdc."""
    override = os.environ.get("LBSDC_HOME")
    return Path(override) if override else Path.home() / ".lbsdc"


def logs_dir() -> Path:
    return app_dir() / "logs"


def runs_dir() -> Path:
    return app_dir() / "runs"


