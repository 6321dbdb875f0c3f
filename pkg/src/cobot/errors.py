"""Exception types used across the stack."""


class CobotError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(CobotError):
    """Malformed or inconsistent configuration input."""


class SimulationDivergence(CobotError):
    """Plant state became non-finite during integration."""


class OrientationSingularity(CobotError):
    """Euler angle extraction attempted at a representation singularity."""


class JacobianSingular(CobotError):
    """Task Jacobian degenerate beyond what damping can recover."""


class QpInfeasible(CobotError):
    """Constraint rows admit no solution; carries the offending row indices."""

    def __init__(self, rows, message=None):
        self.rows = tuple(rows)
        super().__init__(message or f"infeasible constraint rows: {self.rows}")


class TrainingDiverged(CobotError):
    """Classifier training produced a non-finite loss even after retry."""
