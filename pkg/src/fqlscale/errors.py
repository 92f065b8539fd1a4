"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration; the CLI exits 1 on this."""


class SimulationError(RuntimeError):
    """Misuse of the cluster simulator (bad times, double in-flight change)."""


class ConservationError(SimulationError):
    """Request conservation broke: arrived != completed + queued + in service."""
