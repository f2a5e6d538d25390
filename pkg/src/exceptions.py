"""
Exception types for the CosDefense simulator.

Every concrete error also derives from ValueError so callers that only
know about invalid input keep working.
"""


class SimulationError(Exception):
    """Base class for all simulator errors."""


class ConfigurationError(SimulationError, ValueError):
    """Invalid experiment, model or defense parameters."""


class ShapeError(SimulationError, ValueError):
    """Dimension or parameter-layout mismatch."""


class LayoutQueryError(SimulationError, ValueError):
    """A layout selector matched no parameter segment."""


class IdxParseError(SimulationError, ValueError):
    """Malformed IDX file."""

    def __init__(self, field: str, message: str) -> None:
        self.field = field
        super().__init__(f"IDX {field}: {message}")


class AggregationError(SimulationError, ValueError):
    """Aggregation requested over an empty set of updates."""


class EmptyClientError(SimulationError, ValueError):
    """A client holds no local examples and must be skipped this round."""

    def __init__(self, client_id: int) -> None:
        self.client_id = client_id
        super().__init__(f"Client {client_id} has no local examples")
