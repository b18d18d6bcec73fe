# src/lbsdc/utils/safe_exec.py
from __future__ import annotations

"""
Safe-execution helper for the command layer.

safe_call(...) runs a command and always returns (ok, message, payload):

    - ok=True, payload = the command's return value
    - ok=False, payload = the exception, so the caller can map it to an
      exit status (NotConverged -> 2, everything else -> 1)

The exception is also logged under the call's label. Library code raises;
only the command layer uses this.
"""

from typing import Any, Callable, Tuple, TypeVar

from ..core.errors import LBError, NotConverged
from ..core.log_manager import log_mgr

T = TypeVar("T")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NOT_CONVERGED = 2


def safe_call(
    label: str,
    func: Callable[..., T],
    *args: Any,
    **kwargs: Any,
) -> Tuple[bool, str, Any]:
    """
    Example:

        ok, msg, payload = safe_call("relax", cmd_relax, run_config)
    """
    try:
        result = func(*args, **kwargs)
        return True, f"{label} completed successfully.", result
    except NotConverged as e:
        log_mgr.log(label, str(e), level="warn", bubble=True)
        return False, f"{label} did not converge: {e}", e
    except LBError as e:
        log_mgr.log(label, f"{type(e).__name__}: {e}", level="error", bubble=True)
        return False, f"{label} failed with {type(e).__name__}: {e}", e
    except Exception as e:
        log_mgr.log(label, f"{type(e).__name__}: {e}", level="error", bubble=True)
        return False, f"{label} failed with error: {e!r}", e


def exit_code(ok: bool, payload: Any) -> int:
    if ok:
        return EXIT_OK
    if isinstance(payload, NotConverged):
        return EXIT_NOT_CONVERGED
    return EXIT_CONFIG
