"""Exception and warning types raised across the package."""


class TruncationError(ValueError):
    """Fock truncation too small for the requested state."""

    def __init__(self, message, required_dim=None):
        super().__init__(message)
        self.required_dim = required_dim


class DegenerateState(ValueError):
    pass


class ImpossibleOutcome(ValueError):
    pass


class SizeError(ValueError):
    pass


class OutOfRange(ValueError):
    pass


class NonpositiveNu(ValueError):
    pass


class NonpositiveInstrumentVariance(ValueError):
    pass


class EmptySample(ValueError):
    pass


class GridTooNarrow(ValueError):
    pass


class NoAcceptableMu(RuntimeError):
    """No grid value of mu passes the Kolmogorov test.

    The best-effort calibration is kept on ``result``.
    """

    def __init__(self, result):
        super().__init__(
            f"best mu={result.mu:.2f} gives KS statistic {result.ks_statistic:.5f} "
            f">= Kolmogorov bound {result.ks_bound:.5f}"
        )
        self.result = result


class IllConditioned(RuntimeWarning):
    pass
