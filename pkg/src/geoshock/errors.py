"""Exception hierarchy shared by the solver, geometry and oracle."""


class SolverError(RuntimeError):
    """Base class for failures that abort a time integration."""


class InitializationError(SolverError):
    pass


class FrameDegeneracyError(SolverError):
    """The torus frame {X, Theta_i} collapsed (not the mu -> 0 degeneracy)."""


class NaNGuardError(SolverError):
    pass


class DtUnderflowError(SolverError):
    pass


class ConsistencyError(SolverError):
    """Evolved V drifted away from stencil gradients of v."""


class MuFloorError(ValueError):
    pass
