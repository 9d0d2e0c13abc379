"""Exception types raised by the cellhom modules."""


class CellhomError(Exception):
    """Base class for all computational errors."""


class ShapeTouchesBoundary(CellhomError):
    pass


class DisconnectedInclusion(CellhomError):
    pass


class NonZeroMeanSource(CellhomError):
    pass


class CgNoConvergence(CellhomError):
    def __init__(self, iterations, residual):
        super().__init__(f"CG did not converge after {iterations} iterations (residual {residual:.3e})")
        self.iterations = iterations
        self.residual = residual


class ProjectorSolveFailure(CellhomError):
    def __init__(self, residual):
        super().__init__(f"Neumann solve in Leray projector failed (residual {residual:.3e})")
        self.residual = residual


class LanczosStagnation(CellhomError):
    def __init__(self, converged_count, wanted, residuals=None):
        super().__init__(f"only {converged_count} of {wanted} eigenpairs converged")
        self.converged_count = converged_count
        self.wanted = wanted
        self.residuals = residuals


class ResonanceSingularity(CellhomError):
    def __init__(self, mode_index, lambda_over_d):
        super().__init__(
            f"lossless evaluation at lambda/d={lambda_over_d:.6g} sits on the pole of mode {mode_index + 1}"
        )
        self.mode_index = mode_index
        self.lambda_over_d = lambda_over_d


class NoClearPath(CellhomError):
    pass


class SubspaceTooLarge(CellhomError):
    pass


class ConfigError(Exception):
    """Invalid run configuration; ``field`` is a dotted path into the config."""

    def __init__(self, field, reason):
        super().__init__(f"{field}: {reason}")
        self.field = field
        self.reason = reason


class MissingFile(ConfigError):
    def __init__(self, path):
        super().__init__("config", f"file not found: {path}")
        self.path = path
