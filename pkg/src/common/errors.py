"""Exception hierarchy shared by the simulator and the command line."""


class ZZCancelError(Exception):
    """Base class for every error raised by the simulator."""


class LayoutError(ZZCancelError, IndexError):
    """A mode index or occupation lies outside the truncated space."""


class DeviceError(ZZCancelError, ValueError):
    """Device description references unknown modes or has an invalid topology."""


class LabelCollisionError(ZZCancelError):
    """Two bare product states claim the same eigenvector."""

    def __init__(self, message: str, labels=None):
        super().__init__(message)
        self.labels = labels or []


class ResonantDenominatorError(ZZCancelError, ZeroDivisionError):
    """The perturbative formula straddles a two-photon resonance."""


class ContinuationError(ZZCancelError):
    """Dressed-state tracking lost a state between two amplitude steps."""

    def __init__(self, message: str, amplitude_mhz: float = float("nan"), overlap: float = float("nan")):
        super().__init__(message)
        self.amplitude_mhz = amplitude_mhz
        self.overlap = overlap


class NoSignChangeError(ZZCancelError, ValueError):
    """The amplitude bracket does not straddle a ZZ zero crossing."""


class IntegrationError(ZZCancelError, RuntimeError):
    """The ODE integrator failed, usually through step-size underflow."""


class ScheduleError(ZZCancelError, ValueError):
    """A pulse schedule is inconsistent with its total duration or tones."""


class FitError(ZZCancelError, RuntimeError):
    """A curve fit or likelihood optimisation did not converge."""


class ConfigError(ZZCancelError, ValueError):
    """A configuration or device file could not be parsed."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        super().__init__(message)
        self.field = field
        self.line = line
