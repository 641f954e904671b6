"""Coordinate-wise trimmed-mean aggregation.

The robust heart of the protocol: per coordinate, discard the ``b``
largest and ``b`` smallest received values and average the rest.  Also
provides the capped-convex-weights feasibility oracle used to certify
that an aggregate is a legitimate convex combination of good values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AggregationError, ShapeError
from .linalg import as_vector


@dataclass(frozen=True)
class MessageSet:
    """Messages received by one agent in one round, including its own value.

    ``entries`` holds (sender_id, vector) pairs; vectors must share one
    dimension and be finite.  Trimming with parameter ``b`` additionally
    needs at least ``2b + 1`` entries, checked at aggregation time.
    """

    entries: tuple = field()

    def __init__(self, entries):
        pairs = []
        dim = None
        for sender, vec in entries:
            v = as_vector(vec, size=dim)
            dim = v.shape[0]
            pairs.append((int(sender), v))
        if not pairs:
            raise AggregationError("empty message set")
        object.__setattr__(self, "entries", tuple(pairs))

    @property
    def dim(self) -> int:
        return self.entries[0][1].shape[0]

    def __len__(self) -> int:
        return len(self.entries)


def trimmed_mean_scalar(values, b: int) -> tuple[float, set]:
    """Trimmed mean of (sender_id, value) pairs.

    Sorts stably by (value, sender_id), removes exactly ``b`` entries from
    each end positionally, and returns the mean of the rest together with
    the surviving sender ids.  Ties among equal values are broken by id so
    the surviving set is deterministic; the mean is unaffected.
    """
    if b < 0:
        raise ValueError("trim parameter must be nonnegative")
    pairs = [(float(v), int(i)) for i, v in values]
    n = len(pairs)
    if n < 2 * b + 1:
        raise AggregationError(f"need at least {2 * b + 1} values to trim {b} per side, got {n}")
    for v, _ in pairs:
        if not math.isfinite(v):
            raise ShapeError("non-finite value in trimmed mean input")
    pairs.sort()
    kept = pairs[b : n - b]
    mean = sum(v for v, _ in kept) / len(kept)
    return mean, {i for _, i in kept}


def coordinate_trimmed_aggregate(msgs: MessageSet, b: int) -> np.ndarray:
    """Apply the scalar trimmed mean independently to every coordinate.

    Surviving sender sets may differ across coordinates; only the means
    are returned.
    """
    out = np.empty(msgs.dim)
    for k in range(msgs.dim):
        out[k], _ = trimmed_mean_scalar(((i, v[k]) for i, v in msgs.entries), b)
    return out


def coordinate_survivors(msgs: MessageSet, b: int) -> list[set]:
    """Per-coordinate surviving sender sets (diagnostics and tests)."""
    return [
        trimmed_mean_scalar(((i, v[k]) for i, v in msgs.entries), b)[1]
        for k in range(msgs.dim)
    ]


def trimmed_mean_stack(values: np.ndarray, b: int) -> np.ndarray:
    """Vectorized trimmed mean over the rows of an (m, d) array.

    Batch equivalent of :func:`coordinate_trimmed_aggregate` used in the
    simulation hot loop; agrees with it up to floating-point summation
    order.
    """
    a = np.asarray(values, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"expected (m, d) stack, got shape {a.shape}")
    return trimmed_mean_batch(a[np.newaxis], b)[0]


def trimmed_mean_batch(values: np.ndarray, b: int) -> np.ndarray:
    """Trimmed mean along axis 1 of an (r, m, d) array, one row per receiver."""
    a = np.asarray(values, dtype=np.float64)
    if a.ndim != 3:
        raise ShapeError(f"expected (r, m, d) batch, got shape {a.shape}")
    m = a.shape[1]
    if b < 0:
        raise ValueError("trim parameter must be nonnegative")
    if m < 2 * b + 1:
        raise AggregationError(f"need at least {2 * b + 1} values to trim {b} per side, got {m}")
    if not np.all(np.isfinite(a)):
        raise ShapeError("non-finite value in trimmed mean input")
    if b == 0:
        return a.mean(axis=1)
    part = np.partition(a, (b, m - b - 1), axis=1)
    return part[:, b : m - b, :].mean(axis=1)


def feasible_mean_range(good_values, b: int) -> tuple[float, float]:
    """Range of means reachable by capped convex weights over good values.

    Weights are constrained to [0, 1/(phi - b)] and must sum to one, where
    phi is the number of good values.  The extremes pack the weight cap
    onto the (phi - b) smallest (resp. largest) values, so the reachable
    set is exactly [mean of the (phi - b) smallest, mean of the (phi - b)
    largest].
    """
    vals = sorted(float(v) for v in good_values)
    phi = len(vals)
    keep = phi - b
    if b < 0 or keep < 1:
        raise ValueError(f"need 0 <= b < len(values), got b={b}, len={phi}")
    lo = sum(vals[:keep]) / keep
    hi = sum(vals[phi - keep :]) / keep
    return lo, hi


def capped_convex_feasible(
    good_values, aggregate: float, phi: int, b: int, atol: float = 0.0
) -> bool:
    """Whether ``aggregate`` is a capped convex combination of good values.

    Decides existence of coefficients beta_j >= 0 with sum 1 and each
    beta_j <= 1/(phi - b) reproducing the aggregate.  ``atol`` widens the
    feasible interval to absorb floating-point summation error when the
    aggregate was itself computed in floating point.
    """
    vals = [float(v) for v in good_values]
    if len(vals) != phi:
        raise ValueError(f"expected {phi} good values, got {len(vals)}")
    lo, hi = feasible_mean_range(vals, b)
    return lo - atol <= float(aggregate) <= hi + atol
