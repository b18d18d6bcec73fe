# src/lbsdc/core/errors.py

from __future__ import annotations

"""
Exception types raised by the lbsdc library.

Every error derives from LBError so the command layer can catch the whole
family in one place. Input/shape problems also derive from ValueError and
numerical breakdowns from ArithmeticError or RuntimeError.
"""


class LBError(Exception):
    """Base class for all lbsdc errors."""


# -------------------------------------------------
# Grids and transforms
# -------------------------------------------------
class GridError(LBError, ValueError):
    """Invalid grid descriptor or field shape."""


class GridMismatch(LBError, ValueError):
    """Two fields that must share a grid do not."""


class ImaginaryResidue(LBError, ArithmeticError):
    """Inverse transform of a spectrum that is not conjugate symmetric."""


# -------------------------------------------------
# Model
# -------------------------------------------------
class ModelError(LBError, ValueError):
    """Model parameters violate gamma >= 0 or S > alpha."""


class SingularSymbol(LBError, ArithmeticError):
    """1 + dt * sigma(k) <= 0 for some mode."""


class NegativeRadicand(LBError, ArithmeticError):
    """E(phi) + (9 gamma^4 + 3)|Omega| < 0 in the L-infinity bound."""


# -------------------------------------------------
# Integrators
# -------------------------------------------------
class NoConvergence(LBError, RuntimeError):
    """Newton iteration for quadrature nodes did not converge."""


class IllConditioned(LBError, ArithmeticError):
    """Subinterval weights fail the polynomial exactness check."""


class PreconditionError(LBError, ValueError):
    """An operation was called outside its documented preconditions."""


class NotConverged(LBError, RuntimeError):
    """A relaxation hit max_iters before its stop rule fired."""

    def __init__(self, message: str, log=None):
        super().__init__(message)
        self.log = log


# -------------------------------------------------
# Phases and files
# -------------------------------------------------
class NonPeriodicWavevector(LBError, ValueError):
    """A seed wavevector is not commensurate with the box."""


class DuplicateLatticePoint(LBError, ValueError):
    """A lattice lists the same wavevector twice."""


class FormatError(LBError, ValueError):
    """Malformed field snapshot."""


class TruncatedPayload(FormatError):
    """Snapshot payload shorter than N^d values."""


class ConfigError(LBError, ValueError):
    """Invalid run configuration."""
