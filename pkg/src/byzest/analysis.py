"""Contraction rates, observability checks, and finite-time error envelopes.

All quantities derive from the column norms of I - H^T H per agent: a
unit-step local gradient update moves coordinate k of the error by at
most that column's l1 norm (the "contraction defect").  Averaging the
defect over good agents with a trim correction gives the complete-graph
rate; incomplete graphs instead need every reduced graph's source
component to contain a well-supported node, and pay for generality with
a much weaker rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BudgetExceededError, ConfigError, MultipleSourceComponentsError
from .linalg import operator_norm
from .observation import ObservationModel
from .topology import Topology, count_reduced_graphs, has_multiple_source_components, isolatable_avoiding

# exp(-x) underflows float64 around x = 745; beyond that the closed forms
# round to their limits.
_EXP_UNDERFLOW = 745.0


def contraction_defect(model: ObservationModel) -> np.ndarray:
    """Column l1 norms of I - H^T H, one value per coordinate."""
    g = model.H.T @ model.H
    return np.abs(np.eye(model.dim) - g).sum(axis=0)


def complete_contraction_rate(models, b: int) -> float:
    """Worst coordinate's average contraction defect over good agents,
    normalized by (phi - b).  Below one, the complete-graph protocol
    contracts the worst-case error geometrically at this rate."""
    models = list(models)
    phi = len(models)
    if phi <= b:
        raise ConfigError(f"need more good agents ({phi}) than the fault budget b={b}")
    total = np.zeros(models[0].dim)
    for m in models:
        total += contraction_defect(m)
    return float(total.max() / (phi - b))


def check_complete_observability(models, b: int) -> bool:
    """Averaged-defect condition for complete-graph convergence."""
    return complete_contraction_rate(models, b) < 1.0


def strict_contraction_rate(models) -> float:
    """Largest defect among agents that strictly contract each coordinate.

    For every coordinate, only agents with defect < 1 count; raises if
    some coordinate has no such agent (the incomplete-graph rate is then
    undefined).
    """
    models = list(models)
    defects = np.stack([contraction_defect(m) for m in models])
    worst = 0.0
    for k in range(defects.shape[1]):
        strict = defects[defects[:, k] < 1.0, k]
        if strict.size == 0:
            raise ValueError(f"no agent strictly contracts coordinate {k}")
        worst = max(worst, float(strict.max()))
    return worst


def sparse_contraction_rate(strict_rate: float, n_reduced: int, n_good: int, b: int) -> float:
    """Incomplete-graph envelope rate 1 - (1 - r) / (2(phi - b))^(xi * phi).

    Exact for small exponents; rounds to 1.0 when the denominator
    overflows float64 (the true value is then closer to 1 than one ulp).
    """
    if not 0.0 <= strict_rate < 1.0:
        raise ConfigError(f"strict rate must be in [0, 1), got {strict_rate}")
    if n_reduced < 1:
        raise ConfigError("reduced-graph count must be at least 1")
    if n_good <= b:
        raise ConfigError("need more good agents than the fault budget")
    log_denom = n_reduced * n_good * math.log(2.0 * (n_good - b))
    if log_denom > _EXP_UNDERFLOW:
        return 1.0
    return 1.0 - (1.0 - strict_rate) * math.exp(-log_denom)


def sparse_decay_base(sparse_rate: float, n_reduced: int, n_good: int) -> float:
    """Per-round decay factor gamma^(1 / (xi * phi)) for the sparse envelope."""
    if not 0.0 < sparse_rate <= 1.0:
        raise ConfigError(f"sparse rate must be in (0, 1], got {sparse_rate}")
    exponent = n_reduced * n_good
    try:
        fe = float(exponent)
    except OverflowError:
        return 1.0
    return math.exp(math.log(sparse_rate) / fe)


def support_witnesses(models_by_id, topo: Topology, fault_set, b: int) -> frozenset:
    """Good nodes whose neighborhood-plus-self holds at least b+1 good
    strictly-contracting agents for every coordinate."""
    fault_set = frozenset(fault_set)
    good = [v for v in range(topo.n) if v not in fault_set]
    defects = {}
    for v in good:
        if v not in models_by_id:
            raise ConfigError(f"no observation model for good node {v}")
        defects[v] = contraction_defect(models_by_id[v])
    witnesses = set()
    for i in good:
        closed = [j for j in (*topo.in_neighbors(i), i) if j not in fault_set]
        counts = np.zeros(models_by_id[i].dim, dtype=int)
        for j in closed:
            counts += defects[j] < 1.0
        if np.all(counts >= b + 1):
            witnesses.add(i)
    return frozenset(witnesses)


def check_sparse_observability(models_by_id, topo: Topology, fault_sets, b: int) -> bool:
    """Support condition for convergence on incomplete graphs.

    For every given fault set: (a) every good agent's defect is at most 1
    on every coordinate, and (b) no reduced graph can confine its source
    component to nodes lacking b+1 strictly-contracting good neighbors
    (checked via the isolatable-set reformulation).  Raises
    MultipleSourceComponentsError when consensus itself is unachievable
    for a fault set, since the unique source component is then ill-defined.
    """
    for fault_set in fault_sets:
        fault_set = frozenset(fault_set)
        good = [v for v in range(topo.n) if v not in fault_set]
        for v in good:
            if v not in models_by_id:
                raise ConfigError(f"no observation model for good node {v}")
            if np.any(contraction_defect(models_by_id[v]) > 1.0):
                return False
        if has_multiple_source_components(topo, fault_set, b):
            raise MultipleSourceComponentsError(fault_set)
        witnesses = support_witnesses(models_by_id, topo, fault_set, b)
        if isolatable_avoiding(topo, fault_set, b, witnesses):
            return False
    return True


def discounted_noise_sum(norm_history, decay: float) -> float:
    """Geometrically discounted sum of running-average noise norms.

    ``norm_history[s-1]`` holds the norm of the average of the first s
    noise vectors; the result weights the latest value by decay^0, the
    previous by decay^1, and so on.
    """
    if not 0.0 < decay < 1.0:
        raise ConfigError(f"decay must be in (0, 1), got {decay}")
    hist = np.asarray(norm_history, dtype=np.float64)
    if hist.ndim != 1 or hist.size == 0:
        raise ConfigError("norm history must be a nonempty sequence")
    t = hist.size
    weights = decay ** np.arange(t)
    return float(weights @ hist[::-1])


def noise_drift_term(trace: float, decay: float, t: int) -> float:
    """Mean-side term sqrt(trace) * sum_{m=1..t-1} decay^m / sqrt(t-m)."""
    if t < 1:
        raise ConfigError("t must be at least 1")
    if t == 1:
        return 0.0
    m = np.arange(1, t)
    return float(math.sqrt(trace) * np.sum(decay**m / np.sqrt(t - m)))


def noise_tail_bound(
    trace: float, decay: float, t: int, slack: float, bound: float
) -> tuple[float, float]:
    """Drift term plus the probability bound for exceeding it by ``slack``.

    The tail is exp(-slack^2 (1-decay)^2 t / (8 bound^2)) where ``bound``
    caps the norm of every noise sample.
    """
    if not 0.0 < decay < 1.0:
        raise ConfigError(f"decay must be in (0, 1), got {decay}")
    if slack <= 0.0 or bound <= 0.0 or t < 1:
        raise ConfigError("need slack > 0, bound > 0, t >= 1")
    drift = noise_drift_term(trace, decay, t)
    tail = math.exp(-(slack**2) * (1.0 - decay) ** 2 * t / (8.0 * bound**2))
    return drift, tail


def error_envelope(
    decay: float,
    gain: float,
    noise_traces,
    t: int,
    init_err: float,
    n_good: int,
    slack: float,
) -> float:
    """Worst-case max-norm error bound after t rounds.

    Three terms: geometric decay of the initial error, the accumulated
    (time-averaged) noise weighted by the observation gain, and the
    confidence slack paid once per good agent.
    """
    if t < 0:
        raise ConfigError("t must be nonnegative")
    noise_sum = sum(math.sqrt(tr) for tr in noise_traces)
    drift = 0.0
    if t >= 2 and noise_sum:
        m = np.arange(1, t)
        drift = float(np.sum(decay**m / np.sqrt(t - m)))
    return decay**t * init_err + gain * noise_sum * drift + n_good * slack


def envelope_series(
    decay: float,
    gain: float,
    noise_traces,
    rounds: int,
    init_err: float,
    n_good: int,
    slack: float,
) -> np.ndarray:
    """Vectorized :func:`error_envelope` for t = 0..rounds."""
    if not math.isfinite(decay):
        return np.full(rounds + 1, np.nan)
    t_axis = np.arange(rounds + 1)
    with np.errstate(over="ignore"):
        head = decay**t_axis.astype(np.float64) * init_err
    noise_sum = sum(math.sqrt(tr) for tr in noise_traces)
    drift = np.zeros(rounds + 1)
    if noise_sum and rounds >= 2:
        powers = np.zeros(rounds + 1)
        powers[1:] = decay ** np.arange(1, rounds + 1, dtype=np.float64)
        inv_sqrt = np.zeros(rounds + 1)
        inv_sqrt[1:] = 1.0 / np.sqrt(np.arange(1, rounds + 1))
        drift = np.convolve(powers, inv_sqrt)[: rounds + 1]
    return head + gain * noise_sum * drift + n_good * slack


def observation_gain(models) -> float:
    """Largest observation-matrix spectral norm among good agents."""
    return max(operator_norm(m.H) for m in models)


@dataclass(frozen=True)
class RateReport:
    """Every computable rate and verdict for one configuration."""

    dim: int
    n_good: int
    b: int
    rho: float
    rho0: float | None
    gamma: float | None
    xi: int | None
    xi_exact: bool
    c0: float
    complete_ok: bool
    sparse_ok: bool | None
    note: str = ""

    def to_text(self) -> str:
        def fmt(v):
            if v is None:
                return "none"
            if isinstance(v, bool):
                return "true" if v else "false"
            return repr(v) if isinstance(v, float) else str(v)

        lines = [
            f"dim = {self.dim}",
            f"n_good = {self.n_good}",
            f"b = {self.b}",
            f"rho = {fmt(self.rho)}",
            f"rho0 = {fmt(self.rho0)}",
            f"gamma = {fmt(self.gamma)}",
            f"xi = {fmt(self.xi)}",
            f"xi_exact = {fmt(self.xi_exact)}",
            f"c0 = {fmt(self.c0)}",
            f"complete_observability_ok = {fmt(self.complete_ok)}",
            f"sparse_observability_ok = {fmt(self.sparse_ok)}",
        ]
        if self.note:
            lines.append(f"note = {self.note}")
        return "\n".join(lines)


def build_rate_report(models_by_id, topo: Topology, fault_set, b: int) -> RateReport:
    """Assemble a RateReport, degrading gracefully where pieces fail.

    Rates quantify over the good agents of ``fault_set``; the sparse
    support check runs for that fault set alone (callers wanting the
    universal check over all admissible fault sets use
    :func:`check_sparse_observability` directly).
    """
    fault_set = frozenset(fault_set)
    good_models = [m for i, m in sorted(models_by_id.items()) if i not in fault_set]
    if not good_models:
        raise ConfigError("no good agents")
    dim = good_models[0].dim
    rho = complete_contraction_rate(good_models, b)
    c0 = observation_gain(good_models)
    notes = []

    rho0 = None
    try:
        rho0 = strict_contraction_rate(good_models)
    except ValueError as exc:
        notes.append(str(exc))

    xi = None
    xi_exact = False
    try:
        xi = count_reduced_graphs(topo, fault_set, b)
        xi_exact = True
    except ConfigError as exc:
        notes.append(str(exc))

    gamma = None
    if rho0 is not None and rho0 < 1.0 and xi is not None:
        gamma = sparse_contraction_rate(rho0, xi, len(good_models), b)

    sparse_ok: bool | None
    try:
        sparse_ok = check_sparse_observability(models_by_id, topo, [fault_set], b)
    except MultipleSourceComponentsError as exc:
        sparse_ok = False
        notes.append(str(exc))
    except BudgetExceededError as exc:
        sparse_ok = None
        notes.append(str(exc))

    return RateReport(
        dim=dim,
        n_good=len(good_models),
        b=b,
        rho=rho,
        rho0=rho0,
        gamma=gamma,
        xi=xi,
        xi_exact=xi_exact,
        c0=c0,
        complete_ok=rho < 1.0,
        sparse_ok=sparse_ok,
        note="; ".join(notes),
    )
