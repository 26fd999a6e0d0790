"""Exception types shared across the package."""


class QuantestError(Exception):
    """Base class for errors raised by quantest."""


class ValidationError(QuantestError, ValueError):
    """Input data or configuration failed validation."""


class EstimationFailed(QuantestError):
    """No usable threshold survived the discard rules.

    Attributes:
        discarded: list of ``(k, reason)`` pairs, one per transition level.
    """

    def __init__(self, discarded):
        self.discarded = list(discarded)
        counts = {}
        for _, reason in self.discarded:
            counts[reason] = counts.get(reason, 0) + 1
        summary = ", ".join(f"{r}={n}" for r, n in sorted(counts.items())) or "no thresholds"
        super().__init__(f"estimation failed: no usable thresholds ({summary})")


class IllConditionedError(QuantestError):
    """Least-squares design matrix is (numerically) singular."""


class ConvergenceError(QuantestError):
    """Iterative fit did not converge; ``last`` carries the final iterate."""

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class UnsupportedNoiseError(QuantestError, ValueError):
    """Operation needs a noise model it cannot handle (e.g. sigma == 0)."""


class UnboundedCRLBError(QuantestError):
    """Fisher information is zero, so the bound is infinite."""
