"""Exception types shared across the package.

Every error raised on purpose derives from Smch2Error so callers can
distinguish deliberate contract violations from genuine bugs.
"""


class Smch2Error(Exception):
    """Base class for all package errors."""


class InvalidGrid(Smch2Error):
    """Grid constructor preconditions violated (size, power of two, length)."""


class GridMismatch(Smch2Error):
    """Two fields that must share a grid do not."""


class NonFiniteField(Smch2Error):
    """A field contains NaN or Inf where finiteness is required."""


class InvalidEpsilon(Smch2Error):
    """Mollifier width outside its admissible range."""


class InvalidKappa(Smch2Error):
    """Correlation coefficient outside [-1, 1]."""


class SpecViolation(Smch2Error):
    """A noise coefficient left its declared bounds at runtime."""


class InvalidParams(Smch2Error):
    """Scalar parameters of a threshold or experiment out of range."""


class InvalidC(InvalidParams):
    """Breaking-threshold parameter c outside (0, 1)."""


class RegimeViolation(Smch2Error):
    """Scan parameters violate the hypotheses of the bounded-envelope regime."""


class JacobianCollapse(Smch2Error):
    """A particle Jacobian reached zero: the flow map degenerated (imminent
    wave breaking, not a code bug)."""


class ConfigRejected(Smch2Error):
    """Run configuration failed validation; carries field-level messages."""

    def __init__(self, messages):
        if isinstance(messages, str):
            messages = [messages]
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))


class DecayViolation(Smch2Error):
    """Initial data does not decay below tolerance at the domain boundary."""


class UnsupportedMethod(Smch2Error):
    """Stepping method incompatible with the requested noise model."""
