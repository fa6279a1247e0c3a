"""Exception hierarchy shared by the oracle, the descent engines and the zoo."""


class LRGDError(Exception):
    """Base class for every error raised by this package."""


class ObjectiveOverflow(LRGDError):
    def __init__(self, point, value=None):
        self.point = point
        self.value = value
        super().__init__(f"objective overflow at point {point!r} (value={value!r})")


class OracleUnavailable(LRGDError):
    pass


class DegenerateSample(LRGDError):
    """Sampled gradients are (numerically) zero, so no subspace can be built."""


class DivergenceError(LRGDError):
    def __init__(self, alpha, L=None, iteration=None):
        self.alpha = alpha
        self.L = L
        self.iteration = iteration
        msg = f"divergence detected: stepsize alpha={alpha!r}"
        if L is not None:
            msg += f", smoothness L={L!r} (alpha*L={alpha * L:.4g})"
        if iteration is not None:
            msg += f", at iteration {iteration}"
        super().__init__(msg)


class StalledResidual(LRGDError):
    """Adaptive descent found no new direction although the guard still fails."""


class DomainError(LRGDError):
    pass


class ConstructionError(LRGDError):
    pass


class SpecError(LRGDError):
    """Malformed function-spec or experiment configuration text."""
