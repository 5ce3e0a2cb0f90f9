"""Exception types shared across the package.

ParameterError covers violated type invariants and preconditions (a config
problem); SimulationError covers runtime numerical failures (overflow,
exhausted horizons). The CLI maps them to distinct exit codes.
"""


class ParameterError(ValueError):
    """A parameter container or operation precondition is invalid."""


class SimulationError(RuntimeError):
    """A Monte Carlo run failed at runtime (overflow, horizon too short)."""
