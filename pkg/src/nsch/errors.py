"""Exception types shared across the package."""

from __future__ import annotations


class NonFiniteError(ValueError):
    """Raised when a field contains NaN or infinite samples."""


class BlowUpError(RuntimeError):
    """The simulation left its regime of validity (vacuum or non-finite values).

    Attributes
    ----------
    t : float
        Time of the state that triggered the detection.
    reason : str
        Short machine-readable cause (``"vacuum"`` or ``"non_finite"``).
    norms : dict
        Diagnostic values at detection (min density, sup norms, ...).
    """

    def __init__(self, t: float, reason: str, norms: dict | None = None):
        self.t = float(t)
        self.reason = reason
        self.norms = dict(norms or {})
        detail = ", ".join(f"{k}={v:.6g}" for k, v in self.norms.items())
        super().__init__(f"blow-up at t={self.t:.6g}: {reason}" + (f" ({detail})" if detail else ""))

    def record(self) -> dict:
        return {"t": self.t, "reason": self.reason, "norms": self.norms}


class CheckpointError(ValueError):
    """A checkpoint file is unreadable, truncated, or fails its checksum."""


class ConfigError(ValueError):
    """A run configuration is malformed or inconsistent."""
