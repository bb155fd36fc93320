"""Exception hierarchy for hostmix."""


class HostmixError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(HostmixError):
    """Invalid user input: bad network, parameters or configuration file."""


class NumericalError(HostmixError):
    """An integration or probability computation failed."""


# network / exchange
class IndexOutOfRange(ConfigError):
    pass


class DuplicateEdge(ConfigError):
    pass


class NonPositiveRate(ConfigError):
    pass


class SelfLoop(ConfigError):
    pass


class ZeroTotalRate(ConfigError):
    pass


class DimensionMismatch(ConfigError):
    pass


class EmptyEdgeList(ConfigError):
    pass


class EmptyInput(ConfigError):
    pass


class ShapeMismatch(ConfigError):
    pass


class BadQuantiles(ConfigError):
    pass


# integrator
class StepUnderflow(NumericalError):
    pass


class IntegrationEscape(NumericalError):
    pass


class NonFiniteDerivative(NumericalError):
    pass


class NonConvergentFlow(NumericalError):
    pass


class NoAttractorsFound(NumericalError):
    pass


# simulator
class ConfigInvalid(ConfigError):
    pass


class UnsortedEvents(ConfigError):
    pass


class UnknownEdge(ConfigError):
    pass


# lfa
class GammaOnBoundary(ConfigError):
    """The interaction strength lies inside a reported boundary interval."""

    def __init__(self, gamma, intervals):
        self.gamma = gamma
        self.intervals = list(intervals)
        shown = ", ".join(f"[{lo:.7f}, {hi:.7f}]" for lo, hi in self.intervals)
        super().__init__(f"gamma={gamma} lies in the boundary set; boundary intervals: {shown}")


class UnresolvedClassification(NumericalError):
    pass


class MissingEdgeMap(ConfigError):
    pass


class TensorTooLarge(ConfigError):
    pass


class NegativeProbability(NumericalError):
    pass


# cli / config
class SchemaViolation(ConfigError):
    def __init__(self, message, pointer=""):
        self.pointer = pointer
        super().__init__(f"{pointer or '/'}: {message}")


class ModeFieldMissing(ConfigError):
    pass


class FileNotFound(ConfigError):
    pass
