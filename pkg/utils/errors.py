# ----------------------------------------------------------------------
# bridgesim: simulation and verification of Markov bridges.
# ----------------------------------------------------------------------


class BridgeSimError(Exception):
    pass


class ConfigError(BridgeSimError):
    """Scenario file or command line is malformed."""
    pass


class ParamError(BridgeSimError):
    """Parameters outside the admissible range of a model or check."""
    pass


class DomainError(BridgeSimError):
    """State outside the domain E."""
    pass


class TimeError(BridgeSimError):
    pass


class IntegrabilityError(BridgeSimError):
    pass


class QuadratureError(BridgeSimError):
    pass


class SingularCovError(BridgeSimError):
    pass


class SampleSizeError(BridgeSimError):
    pass


class InconclusiveError(BridgeSimError):
    """Partial integrals neither converged nor clearly diverged."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []


class HFloorError(BridgeSimError):
    """h fell below the floor, i.e. the bridge left the support of h."""

    def __init__(self, message, t=None, y=None, log_h=None):
        super().__init__(message)
        self.t = t
        self.y = y
        self.log_h = log_h


class NumericsError(BridgeSimError):

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class EnsembleError(BridgeSimError):

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
