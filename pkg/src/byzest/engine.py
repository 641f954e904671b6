"""Round-synchronous simulation loop.

Each round has three phases: every good agent takes its local gradient
step, messages are routed (the adversary writes the faulty agents'
per-receiver messages from an omniscient snapshot), and every good agent
trims and averages what it received.  Phases are barrier-separated, and
all randomness comes from named per-consumer streams, so a trace is a
pure function of its configuration.
"""

from __future__ import annotations

import dataclasses
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import seeding
from .adversary import AdversaryView, STRATEGY_NAMES, make_strategy
from .aggregation import feasible_mean_range, trimmed_mean_batch
from .analysis import (
    complete_contraction_rate,
    envelope_series,
    observation_gain,
    sparse_contraction_rate,
    sparse_decay_base,
    strict_contraction_rate,
)
from .errors import AggregationError, BudgetExceededError, ConfigError
from .observation import NoiseSpec, make_coordinate_selection_models
from .topology import Topology, count_reduced_graphs

_INTERVAL_ATOL = 1e-9


@dataclass(frozen=True)
class SimulationConfig:
    """Everything a run depends on; equal configs give identical traces."""

    dim: int
    n_good: int
    b: int
    rounds: int
    n_rows: int
    multiplicity: int
    fault_ids: tuple = ()
    topology: Topology | None = None  # None: complete over n_good + len(fault_ids)
    noise: NoiseSpec | None = None  # None: noiseless
    adversary: str = "none"
    adversary_params: dict | None = None
    init: str = "zero"
    init_radius: float = 1.0
    truth_radius: float = 1.0
    seed: int = 0
    slack: float = 0.0  # confidence slack in the logged envelope
    per_agent_every: int = 0
    feasibility_checks: bool = False
    divergence_limit: float = 1e12
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "fault_ids", tuple(sorted(int(v) for v in self.fault_ids)))
        if len(set(self.fault_ids)) != len(self.fault_ids):
            raise ConfigError("duplicate fault ids")
        if len(self.fault_ids) > self.b:
            raise ConfigError(
                f"fault budget exceeded: {len(self.fault_ids)} fault ids with b={self.b}"
            )
        n = self.n_total
        if self.b >= n:
            raise ConfigError(f"b={self.b} must be below the number of agents {n}")
        if self.rounds < 1:
            raise ConfigError("need at least one round")
        if self.n_good < 1:
            raise ConfigError("need at least one good agent")
        if self.topology is not None:
            if self.topology.n != self.n_good + len(self.fault_ids):
                raise ConfigError(
                    f"topology has {self.topology.n} nodes but config implies "
                    f"{self.n_good + len(self.fault_ids)}"
                )
        for v in self.fault_ids:
            if not 0 <= v < n:
                raise ConfigError(f"fault id {v} out of range")
        if self.init not in ("zero", "random"):
            raise ConfigError(f"unknown init kind {self.init!r}")
        if self.adversary != "none" and self.adversary not in STRATEGY_NAMES:
            raise ConfigError(f"unknown adversary strategy {self.adversary!r}")
        if self.fault_ids and self.adversary == "none":
            raise ConfigError("fault ids configured but no adversary strategy")
        if self.slack < 0.0:
            raise ConfigError("envelope slack must be nonnegative")

    @property
    def n_total(self) -> int:
        return self.topology.n if self.topology is not None else self.n_good + len(self.fault_ids)

    def resolved_topology(self) -> Topology:
        return self.topology if self.topology is not None else Topology.complete_graph(self.n_total)

    def resolved_noise(self) -> NoiseSpec:
        return self.noise if self.noise is not None else NoiseSpec.zero(self.n_rows)


@dataclass
class SimulationTrace:
    """Per-round metrics of one run (round 0 is the initial state)."""

    label: str
    seed: int
    n_good: int
    b: int
    diverged: bool
    envelope_kind: str
    decay: float
    errors_l2: np.ndarray
    errors_linf: np.ndarray
    envelope: np.ndarray
    noise_sums: np.ndarray
    per_agent: np.ndarray | None = None
    agent_ids: tuple = ()

    @property
    def rounds_completed(self) -> int:
        return len(self.errors_l2) - 1

    def to_csv(self, fileobj) -> None:
        headers = ["round", "error_mean_l2", "error_max_linf", "envelope", "diverged"]
        if self.per_agent is not None:
            headers += [f"err_{i}" for i in self.agent_ids]
        fileobj.write(",".join(headers) + "\n")
        last = self.rounds_completed
        for t in range(last + 1):
            row = [
                str(t),
                repr(float(self.errors_l2[t])),
                repr(float(self.errors_linf[t])),
                repr(float(self.envelope[t])),
                "1" if (self.diverged and t == last) else "0",
            ]
            if self.per_agent is not None:
                for col in range(self.per_agent.shape[1]):
                    v = self.per_agent[t, col]
                    row.append("" if np.isnan(v) else repr(float(v)))
            fileobj.write(",".join(row) + "\n")

    def csv_text(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()


def prepare_models(config: SimulationConfig) -> tuple:
    """Topology plus good agents' observation models, exactly as a run
    would build them (deterministic in the config seed); no simulation."""
    topo = config.resolved_topology()
    good = sorted(set(range(topo.n)) - frozenset(config.fault_ids))
    obs_rng = seeding.stream(config.seed, seeding.OBSERVATION)
    models = make_coordinate_selection_models(
        config.dim,
        len(good),
        config.n_rows,
        config.multiplicity,
        obs_rng,
        noise=config.resolved_noise(),
    )
    models_by_id = {g: models[i].with_agent_id(g) for i, g in enumerate(good)}
    return topo, models_by_id


def _initial_estimates(config: SimulationConfig, good: list) -> np.ndarray:
    x0 = np.zeros((len(good), config.dim))
    if config.init == "random":
        for idx, agent_id in enumerate(good):
            init_rng = seeding.stream(config.seed, seeding.INIT, agent_id)
            x0[idx] = init_rng.uniform(-config.init_radius, config.init_radius, config.dim)
    return x0


def _envelope_inputs(config, topo, models, fault_set):
    """Decay constant and kind for the logged theoretical envelope."""
    try:
        if topo.complete:
            return complete_contraction_rate(models, config.b), "complete"
        strict = strict_contraction_rate(models)
        xi = count_reduced_graphs(topo, fault_set, config.b)
        gamma = sparse_contraction_rate(strict, xi, len(models), config.b)
        return sparse_decay_base(gamma, xi, len(models)), "sparse"
    except (ValueError, ConfigError, BudgetExceededError, OverflowError):
        return float("nan"), "unavailable"


def run(config: SimulationConfig) -> SimulationTrace:
    """Execute one simulation and collect its trace."""
    topo = config.resolved_topology()
    n = topo.n
    fault_set = frozenset(config.fault_ids)
    good = sorted(set(range(n)) - fault_set)
    if len(good) != config.n_good:
        raise ConfigError(f"expected {config.n_good} good agents, topology gives {len(good)}")
    good_index = {v: i for i, v in enumerate(good)}

    # Receiver layouts: positions of good senders (incl. self) and faulty
    # senders in each agent's message stack.  Complete graphs share one
    # layout, so aggregation runs as a single batched operation.
    good_senders = {}
    faulty_senders = {}
    for i in good:
        closed = sorted(set(topo.in_neighbors(i)) | {i})
        gs = [j for j in closed if j not in fault_set]
        fs = [j for j in closed if j in fault_set]
        if len(closed) < 2 * config.b + 1:
            raise AggregationError(
                f"agent {i} has neighborhood of size {len(closed)}, "
                f"needs at least {2 * config.b + 1} to trim b={config.b}"
            )
        good_senders[i] = np.array([good_index[j] for j in gs], dtype=np.intp)
        faulty_senders[i] = fs

    truth = seeding.stream(config.seed, seeding.TRUTH).uniform(
        -config.truth_radius, config.truth_radius, config.dim
    )
    truth.setflags(write=False)
    _, models_by_id = prepare_models(config)
    models = [models_by_id[g] for g in good]
    noise_rngs = [seeding.stream(config.seed, seeding.NOISE, i) for i in good]
    strategy = None
    adv_rng = None
    if fault_set:
        strategy = make_strategy(config.adversary, config.adversary_params or {})
        adv_rng = seeding.stream(config.seed, seeding.ADVERSARY)
    faulty_sorted = tuple(sorted(fault_set))

    decay, env_kind = _envelope_inputs(config, topo, models, fault_set)
    gain = observation_gain(models)
    traces = [m.noise.trace for m in models]
    noise_decay = decay if 0.0 < decay < 1.0 else None

    # Batched agent state: the generator gives every agent the same number
    # of measurement rows, so local gradient steps run as stacked tensor
    # ops (agent order fixed by sorted id; noise streams stay per-agent).
    n_agents = len(good)
    h_stack = np.stack([m.H for m in models])  # (phi, n_rows, dim)
    y_truth = np.einsum("ank,k->an", h_stack, truth)  # noiseless measurement images
    noise_spec = config.resolved_noise()
    y_mean = np.zeros((n_agents, config.n_rows))
    noise_blocks = None
    if noise_spec.kind != "zero":
        # Pre-drawn per-agent noise; same streams and draw order as
        # sampling one vector per round.
        noise_blocks = np.stack(
            [noise_spec.sample_rounds(rng, config.rounds) for rng in noise_rngs], axis=1
        )  # (rounds, phi, n_rows)

    errors_l2, errors_linf, noise_sums = [], [], []
    per_agent_rows = [] if config.per_agent_every > 0 else None
    noise_running = np.zeros(n_agents)

    def record(x_stack: np.ndarray, t: int) -> None:
        diff = x_stack - truth
        l2s = np.linalg.norm(diff, axis=1)
        errors_l2.append(float(l2s.mean()))
        errors_linf.append(float(np.abs(diff).max()))
        if noise_decay is not None and t >= 1:
            avg_noise_norms = np.linalg.norm(y_mean - y_truth, axis=1)
            noise_running[:] = noise_decay * noise_running + avg_noise_norms
            noise_sums.append(float(noise_running.mean()))
        else:
            noise_sums.append(0.0 if t == 0 else float("nan"))
        if per_agent_rows is not None:
            if t % config.per_agent_every == 0 or t == config.rounds:
                per_agent_rows.append(l2s.copy())
            else:
                per_agent_rows.append(np.full(n_agents, np.nan))

    x_stack = _initial_estimates(config, good)
    record(x_stack, 0)
    init_linf = float(errors_linf[0])
    diverged = False

    z_buffers = None
    if not topo.complete:
        z_buffers = {
            i: np.empty((len(good_senders[i]) + len(faulty_senders[i]), config.dim))
            for i in good
        }
    faulty_pos = {a: i for i, a in enumerate(faulty_sorted)}

    for t in range(1, config.rounds + 1):
        # Phase 1: measure, then one unit gradient step per good agent.
        y = y_truth
        if noise_blocks is not None:
            y = y_truth + noise_blocks[t - 1]
        y_mean += (y - y_mean) / t
        residual = np.einsum("ank,ak->an", h_stack, x_stack) - y_mean
        z_stack = x_stack - np.einsum("ank,an->ak", h_stack, residual)

        # Phase 2: adversary messages from an immutable snapshot.
        block = None
        if strategy is not None:
            snapshot = z_stack.copy()
            snapshot.setflags(write=False)
            x_snapshot = x_stack.copy()
            x_snapshot.setflags(write=False)
            view = AdversaryView(
                truth=truth,
                good_z={i: snapshot[good_index[i]] for i in good},
                good_x={i: x_snapshot[good_index[i]] for i in good},
                round_index=t,
                topology=topo,
                b=config.b,
            )
            block = strategy.message_block(view, faulty_sorted, tuple(good), adv_rng)

        # Phase 3: coordinate-wise trimmed aggregation.
        if topo.complete:
            stack = np.empty((n_agents, n, config.dim))
            stack[:, :n_agents, :] = z_stack[np.newaxis]
            if block is not None:
                stack[:, n_agents:, :] = block.transpose(1, 0, 2)
            x_new = trimmed_mean_batch(stack, config.b)
            _check_interval(x_new, z_stack.min(axis=0), z_stack.max(axis=0))
            if config.feasibility_checks:
                _check_feasibility(x_new, z_stack, config.b)
        else:
            x_new = np.empty((n_agents, config.dim))
            for idx, i in enumerate(good):
                buf = z_buffers[i]
                n_good_senders = len(good_senders[i])
                np.take(z_stack, good_senders[i], axis=0, out=buf[:n_good_senders])
                for pos, a in enumerate(faulty_senders[i]):
                    buf[n_good_senders + pos] = block[faulty_pos[a], idx]
                x_new[idx] = trimmed_mean_batch(buf[np.newaxis], config.b)[0]
                good_vals = buf[:n_good_senders]
                _check_interval(
                    x_new[idx : idx + 1], good_vals.min(axis=0), good_vals.max(axis=0)
                )

        x_stack = x_new

        if not np.all(np.isfinite(x_stack)) or np.abs(x_stack).max() > config.divergence_limit:
            diverged = True
            x_stack = np.nan_to_num(
                x_stack, nan=config.divergence_limit, posinf=config.divergence_limit,
                neginf=-config.divergence_limit,
            )
            record(x_stack, t)
            break
        record(x_stack, t)

    completed = len(errors_l2) - 1
    envelope = envelope_series(
        decay, gain, traces, completed, init_linf, n_agents, config.slack
    )
    per_agent = None
    if per_agent_rows is not None:
        per_agent = np.stack(per_agent_rows)
    return SimulationTrace(
        label=config.label or f"seed{config.seed}",
        seed=config.seed,
        n_good=n_agents,
        b=config.b,
        diverged=diverged,
        envelope_kind=env_kind,
        decay=decay,
        errors_l2=np.array(errors_l2),
        errors_linf=np.array(errors_linf),
        envelope=envelope,
        noise_sums=np.array(noise_sums),
        per_agent=per_agent,
        agent_ids=tuple(good),
    )


def _check_interval(aggregates: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> None:
    """Aggregates must stay inside the good senders' value range.

    Holds whenever at most b senders are faulty; a violation means the
    trimming implementation is broken, so it is always on.
    """
    atol = _INTERVAL_ATOL * max(1.0, float(np.abs(lo).max()), float(np.abs(hi).max()))
    if np.any(aggregates < lo - atol) or np.any(aggregates > hi + atol):
        raise AggregationError("aggregate left the good senders' value interval")


def _check_feasibility(aggregates: np.ndarray, good_values: np.ndarray, b: int) -> None:
    """Debug assertion: every aggregate coordinate must be reachable by
    capped convex weights over the good agents' values (complete graphs)."""
    phi = good_values.shape[0]
    for k in range(good_values.shape[1]):
        lo, hi = feasible_mean_range(good_values[:, k], b)
        atol = _INTERVAL_ATOL * max(1.0, abs(lo), abs(hi))
        col = aggregates[:, k]
        if np.any(col < lo - atol) or np.any(col > hi + atol):
            raise AggregationError(
                f"aggregate coordinate {k} outside capped convex range"
            )


def run_grid(configs, jobs: int = 1) -> list:
    """Run independent configs, optionally in parallel; order preserved.

    Each run is a pure function of its config, so the worker count can
    never change any output byte.
    """
    configs = list(configs)
    if jobs <= 1 or len(configs) <= 1:
        return [run(c) for c in configs]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run, configs))


def complete_sweep_configs(
    base: SimulationConfig, fault_counts, seeds, multiplicities: dict | None = None
) -> list:
    """Complete-graph sweep over the number of adversarial agents.

    Good agents keep ids 0..n_good-1; each sweep point appends that many
    faulty agents, sets the trim parameter to match, and runs every seed.
    ``multiplicities`` optionally overrides the observation coverage per
    adversary count.
    """
    out = []
    for count in fault_counts:
        for seed in seeds:
            multiplicity = base.multiplicity
            if multiplicities and count in multiplicities:
                multiplicity = multiplicities[count]
            out.append(
                dataclasses.replace(
                    base,
                    fault_ids=tuple(range(base.n_good, base.n_good + count)),
                    b=count,
                    multiplicity=multiplicity,
                    topology=None,
                    seed=seed,
                    label=f"A{count}_seed{seed}",
                )
            )
    return out
