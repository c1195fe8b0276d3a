"""Exception hierarchy shared by all modules."""

from __future__ import annotations

from typing import Any


class TatonnementError(Exception):
    """Base class. Carries enough context for the CLI's machine-readable error object."""

    module = "tatonnement"

    def __init__(self, message: str, *, operation: str = "", witness: Any = None):
        super().__init__(message)
        self.message = message
        self.operation = operation
        self.witness = witness

    def to_dict(self) -> dict:
        return {
            "module": self.module,
            "operation": self.operation,
            "message": self.message,
            "witness": self.witness,
        }


class MarketError(TatonnementError, ValueError):
    module = "market"

    def __init__(self, message: str, *, condition: str = "", **kw):
        super().__init__(message, **kw)
        self.condition = condition

    def to_dict(self) -> dict:
        out = super().to_dict()
        out["condition"] = self.condition
        return out


class EquilibriumError(TatonnementError, ValueError):
    module = "equilibrium"


class SpectralError(TatonnementError, ValueError):
    module = "spectral"


class DynamicsError(TatonnementError, RuntimeError):
    module = "dynamics"


class NoiseError(TatonnementError, RuntimeError):
    module = "noise"


class CLIError(TatonnementError, ValueError):
    module = "cli"
