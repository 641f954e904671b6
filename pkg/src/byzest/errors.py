"""Exception types shared across the package."""


class ByzestError(Exception):
    """Base class for package-specific failures."""


class ConfigError(ByzestError):
    """Invalid configuration (maps to CLI exit code 2)."""


class ShapeError(ByzestError, ValueError):
    """Dimension mismatch between vectors/matrices."""


class AggregationError(ByzestError):
    """Trimmed-mean aggregation cannot proceed (too few messages)."""


class BudgetExceededError(ByzestError):
    """An exact enumeration would exceed the configured budget."""


class MultipleSourceComponentsError(ByzestError):
    """A reduced graph has more than one source component.

    Consensus is then unachievable on the topology, so the incomplete-graph
    support condition is ill-posed rather than merely false.
    """

    def __init__(self, fault_set):
        self.fault_set = frozenset(fault_set)
        super().__init__(
            f"reduced graph for fault set {sorted(self.fault_set)} has "
            f"multiple source components"
        )


class DivergedError(ByzestError):
    """An agent estimate left the allowed magnitude window."""
