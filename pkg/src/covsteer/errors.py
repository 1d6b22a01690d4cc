"""Exception hierarchy shared across the package."""


class CovsteerError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatch(CovsteerError):
    pass


class NotSymmetric(CovsteerError):
    pass


class NotPositiveDefinite(CovsteerError):
    pass


class NonPositiveHorizon(CovsteerError):
    pass


class UnknownKey(CovsteerError):
    """A scenario document contains a key the schema does not define."""


class BlowUp(CovsteerError):
    """A matrix ODE trajectory exceeded the blow-up threshold.

    Attributes:
        time: grid time at which the blow-up was detected.
    """

    def __init__(self, time, message=None):
        self.time = float(time)
        super().__init__(message or f"trajectory blow-up detected at t={self.time:.6g}")


class RiccatiBlowUp(BlowUp):
    """The game Riccati equation escaped in finite time (no solution on [0, T])."""


class SingularOperator(CovsteerError):
    pass


class SingularKKT(CovsteerError):
    pass


class Infeasible(CovsteerError):
    pass


class NoConvergence(CovsteerError):
    """An iterative solver failed to reach its tolerance.

    Attributes:
        best_residual: smallest residual norm seen before giving up.
    """

    def __init__(self, best_residual, message=None):
        self.best_residual = float(best_residual)
        super().__init__(
            message or f"no convergence, best residual {self.best_residual:.3e}"
        )


class SaddleViolation(CovsteerError):
    """A perturbation broke the one-sided Nash inequality.

    Attributes:
        player: 1 or 2.
        margin: signed margin that violated the bound.
        perturbation: the offending constant gain perturbation.
    """

    def __init__(self, player, margin, perturbation):
        self.player = int(player)
        self.margin = float(margin)
        self.perturbation = perturbation
        super().__init__(
            f"saddle inequality violated for player {self.player}, margin {self.margin:.3e}"
        )


class NonFinitePath(CovsteerError):
    """A simulated sample path overflowed.

    Attributes:
        path_index: which path went non-finite.
        time: simulation time of the first non-finite state.
    """

    def __init__(self, path_index, time):
        self.path_index = int(path_index)
        self.time = float(time)
        super().__init__(
            f"non-finite state on path {self.path_index} at t={self.time:.6g}"
        )
