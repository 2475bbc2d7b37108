"""Exception types shared across the package."""


class DiscofluxError(Exception):
    """Base class for all package-specific errors."""


class ClosureDomainError(DiscofluxError, ValueError):
    """A density or fugacity fell outside the closure's admissible range."""


class SeriesDivergenceError(DiscofluxError, ValueError):
    """A partition-function series could not be certified to converge."""


class SteadyStateInfeasibleError(DiscofluxError, ValueError):
    """No steady state exists at the requested flux level.

    Carries the offending position and the attainable flux interval there.
    """

    def __init__(self, alpha, x, attainable, cell=None):
        self.alpha = alpha
        self.x = x
        self.attainable = attainable
        self.cell = cell
        where = f"x={x!r}" if cell is None else f"x={x!r} (cell {cell})"
        super().__init__(
            f"no steady state with flux level alpha={alpha!r} at {where}; "
            f"attainable range is [{attainable[0]!r}, {attainable[1]!r}]"
        )


class CflViolationError(DiscofluxError, ValueError):
    """A requested time step exceeds the stable bound."""

    def __init__(self, dt, dt_max):
        self.dt = dt
        self.dt_max = dt_max
        super().__init__(f"dt={dt!r} violates the CFL bound; admissible dt <= {dt_max!r}")


class UnsupportedRegimeError(DiscofluxError, ValueError):
    """The requested setup falls outside the regimes the solver covers."""


class EventBudgetExceededError(DiscofluxError, RuntimeError):
    """An event-driven run hit its event cap before the time horizon.

    ``partial`` holds the configuration state at the moment the cap was hit.
    """

    def __init__(self, partial, events, t_target):
        self.partial = partial
        self.events = events
        self.t_target = t_target
        super().__init__(
            f"event budget of {events} exhausted at sim_time={partial.sim_time!r} "
            f"before reaching t={t_target!r}"
        )


class OrderingBrokenError(DiscofluxError, RuntimeError):
    """Sitewise order between coupled marginals was violated (coupling bug)."""

    def __init__(self, site, sim_time):
        self.site = site
        self.sim_time = sim_time
        super().__init__(f"eta <= xi violated at site {site} (t={sim_time!r})")


class ConfigError(DiscofluxError, ValueError):
    """An experiment configuration file is malformed or inconsistent."""
