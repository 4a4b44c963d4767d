"""Exception types shared across the pipeline."""


class GenerationFailed(RuntimeError):
    """Korner recipe could not certify within its degree budget."""


class NonIntegerSpectrum(ValueError):
    """A polynomial expected to have integer frequencies does not."""


class InvalidRho(ValueError):
    """Perturbation sequence violates the pool invariants."""


class PoolTooSmall(ValueError):
    """Index floor and cap leave no usable frequencies."""


class LayerBuildFailed(RuntimeError):
    """A basis polynomial could not meet its exceedance bound."""

    def __init__(self, l, r, report, message=""):
        self.l = l
        self.r = r
        self.report = report
        super().__init__(message or f"layer {l}: R_(r={r}) failed its exceedance bound")


class OutOfMaterializedRange(KeyError):
    """Index lies outside the range covered by a spectrum plan."""


class StepFailed(RuntimeError):
    """A representation step could not be completed."""

    def __init__(self, N, stage, cause, report=None):
        self.N = N
        self.stage = stage
        self.cause = cause
        self.report = report
        super().__init__(f"step N={N} failed during {stage}: {cause}")
