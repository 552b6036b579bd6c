"""Exception hierarchy shared across the package."""


class HawkesNetError(Exception):
    """Base class for all package errors."""


class InvalidDimensionError(HawkesNetError, ValueError):
    pass


class InvalidIntervalError(HawkesNetError, ValueError):
    pass


class UnstableModelError(HawkesNetError, ValueError):
    """The dominating linear process has no finite mean intensity."""


class SimulationDivergedError(HawkesNetError, RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ResolutionError(HawkesNetError, ValueError):
    """Quadrature grid too coarse for the basis knot spacing."""


class SingularDesignError(HawkesNetError, ArithmeticError):
    def __init__(self, message, group=None):
        super().__init__(message)
        self.group = group


class NumericError(HawkesNetError, ArithmeticError):
    pass


class UndefinedKappaError(HawkesNetError, ValueError):
    """The node has no events, so T / N_j(0, T] is undefined."""


class InternalInconsistencyError(HawkesNetError, RuntimeError):
    pass
