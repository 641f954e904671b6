"""Good agent state machine: measure, gradient step, robust aggregate."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .aggregation import MessageSet, coordinate_trimmed_aggregate
from .errors import AggregationError
from .observation import (
    MeasurementAccumulator,
    ObservationModel,
    empirical_gradient,
    sample_measurement,
)


@dataclass
class AgentState:
    """One good agent: current estimate plus its measurement average."""

    agent_id: int
    x: np.ndarray
    model: ObservationModel
    acc: MeasurementAccumulator = field(default_factory=MeasurementAccumulator)


def local_step(state: AgentState, truth: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw this round's measurement and take one unit gradient step.

    Returns the value the agent broadcasts; the step size is fixed at 1,
    which the contraction analysis assumes.
    """
    y = sample_measurement(state.model, truth, rng)
    state.acc.update(y)
    return state.x - empirical_gradient(state.model, state.acc, state.x)


def finalize_round(state: AgentState, msgs: MessageSet, b: int) -> None:
    """Replace the estimate with the coordinate-wise trimmed aggregate."""
    if all(sender != state.agent_id for sender, _ in msgs.entries):
        raise AggregationError(f"agent {state.agent_id} must include its own value")
    state.x = coordinate_trimmed_aggregate(msgs, b)
