"""Linear observation model: noisy local measurements and their gradients.

Each agent i observes ``y_i(t) = H_i @ truth + w_i(t)`` with bounded,
zero-mean, i.i.d. noise.  The empirical least-squares cost over the first
t measurements depends on the history only through the running mean of
the y's, so agents keep O(n_i) state instead of the full history.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .linalg import as_matrix, as_vector

NOISE_KINDS = ("zero", "uniform_box", "truncated_gaussian")

# Rejection sampling for the truncated Gaussian gives up after this many
# consecutive misses; the bound is then too tight for the covariance.
_MAX_REJECTS = 100_000


@dataclass(frozen=True)
class NoiseSpec:
    """Bounded noise generator description.

    ``covariance_target`` is the covariance the samples should approach
    (diagonal for ``uniform_box``); ``bound`` is an almost-sure cap on the
    Euclidean norm of every sample.
    """

    kind: str
    covariance_target: np.ndarray
    bound: float

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ConfigError(f"unknown noise kind {self.kind!r}, expected one of {NOISE_KINDS}")
        cov = as_matrix(self.covariance_target)
        if cov.shape[0] != cov.shape[1]:
            raise ShapeError("covariance target must be square")
        object.__setattr__(self, "covariance_target", cov)
        object.__setattr__(self, "bound", float(self.bound))
        if self.kind == "zero":
            if cov.any() or self.bound != 0.0:
                raise ConfigError("zero noise requires zero covariance and bound")
            return
        if self.bound <= 0.0:
            raise ConfigError("bounded noise requires bound > 0")
        if self.kind == "uniform_box":
            if np.any(cov != np.diag(np.diagonal(cov))):
                raise ConfigError("uniform_box noise needs a diagonal covariance target")
            if self.bound + 1e-12 < float(np.sqrt(3.0 * np.trace(cov))):
                raise ConfigError("bound too small to realize the uniform_box covariance")

    @staticmethod
    def zero(dim: int) -> "NoiseSpec":
        return NoiseSpec("zero", np.zeros((dim, dim)), 0.0)

    @staticmethod
    def uniform(diag_variances, bound: float | None = None) -> "NoiseSpec":
        """Per-component uniform on [-a_k, a_k] with a_k set from the variances.

        Var of U[-a, a] is a^2/3, so a_k = sqrt(3 var_k); the norm of any
        sample is at most ||a||_2, which is the default bound.
        """
        d = np.atleast_1d(np.asarray(diag_variances, dtype=np.float64))
        if bound is None:
            bound = float(np.sqrt(3.0 * d.sum()))
        return NoiseSpec("uniform_box", np.diag(d), bound)

    @staticmethod
    def truncated_gaussian(cov, bound: float) -> "NoiseSpec":
        return NoiseSpec("truncated_gaussian", np.asarray(cov, dtype=np.float64), bound)

    @property
    def dim(self) -> int:
        return self.covariance_target.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.covariance_target))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """One noise vector; its Euclidean norm never exceeds ``bound``."""
        if self.kind == "zero":
            return np.zeros(self.dim)
        if self.kind == "uniform_box":
            half_widths = np.sqrt(3.0 * np.diagonal(self.covariance_target))
            return rng.uniform(-half_widths, half_widths)
        for _ in range(_MAX_REJECTS):
            w = rng.multivariate_normal(np.zeros(self.dim), self.covariance_target, method="cholesky")
            if np.dot(w, w) <= self.bound * self.bound:
                return w
        raise ConfigError("truncated_gaussian bound rejects essentially all samples")

    def sample_rounds(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """``count`` consecutive samples as a (count, dim) block.

        Identical to calling :meth:`sample` that many times on the same
        generator; uniform_box draws the block in one vectorized call,
        which consumes the stream in the same order.
        """
        if self.kind == "uniform_box":
            half_widths = np.sqrt(3.0 * np.diagonal(self.covariance_target))
            return rng.uniform(-half_widths, half_widths, size=(count, self.dim))
        return np.stack([self.sample(rng) for _ in range(count)])


@dataclass(frozen=True)
class ObservationModel:
    """One agent's measurement channel: matrix H (n_i x d) plus noise."""

    agent_id: int
    H: np.ndarray
    noise: NoiseSpec

    def __post_init__(self):
        h = as_matrix(self.H)
        if h.shape[0] < 1:
            raise ShapeError("observation matrix needs at least one row")
        if self.noise.kind != "zero" and self.noise.dim != h.shape[0]:
            raise ShapeError(
                f"noise dimension {self.noise.dim} does not match {h.shape[0]} measurement rows"
            )
        object.__setattr__(self, "H", h)

    @property
    def n_rows(self) -> int:
        return self.H.shape[0]

    @property
    def dim(self) -> int:
        return self.H.shape[1]

    def with_agent_id(self, agent_id: int) -> "ObservationModel":
        return ObservationModel(agent_id, self.H, self.noise)

    def with_noise(self, noise: NoiseSpec) -> "ObservationModel":
        return ObservationModel(self.agent_id, self.H, noise)


@dataclass
class MeasurementAccumulator:
    """Running mean of an agent's measurements (all the history it needs)."""

    count: int = 0
    mean: np.ndarray | None = None

    def update(self, y: np.ndarray) -> None:
        y = as_vector(y)
        if self.mean is None:
            self.mean = np.zeros_like(y)
        self.count += 1
        self.mean += (y - self.mean) / self.count


def sample_measurement(
    model: ObservationModel, truth: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Draw y = H @ truth + w for one round."""
    truth = as_vector(truth, size=model.dim)
    y = model.H @ truth
    if model.noise.kind != "zero":
        y = y + model.noise.sample(rng)
    return y


def empirical_gradient(
    model: ObservationModel, acc: MeasurementAccumulator, x: np.ndarray
) -> np.ndarray:
    """Gradient of the time-averaged least-squares cost at x.

    Equals H^T (H x - ybar) where ybar is the running measurement mean;
    algebraically identical to averaging per-measurement gradients over
    the full history.
    """
    if acc.count < 1 or acc.mean is None:
        raise ValueError("empirical gradient needs at least one measurement")
    x = as_vector(x, size=model.dim)
    return model.H.T @ (model.H @ x - acc.mean)


def make_coordinate_selection_models(
    dim: int,
    count: int,
    n_rows: int,
    multiplicity: int,
    rng: np.random.Generator,
    noise: NoiseSpec | None = None,
) -> list[ObservationModel]:
    """Generate ``count`` coordinate-selector observation matrices.

    Every coordinate is observed by exactly ``multiplicity`` distinct
    agents (one selector row e_k each); remaining rows are zero padding so
    each H_i keeps n_rows rows.  For such matrices the column norms of
    I - H^T H are exactly 0 on coordinates the agent observes and 1
    elsewhere, which makes the contraction-rate bookkeeping certifiable
    rather than probabilistic.

    The assignment deals a seeded cyclic coordinate sequence into
    near-equal consecutive chunks, so it is deterministic given ``rng``
    and never gives one agent the same coordinate twice.
    """
    if multiplicity < 1:
        raise ConfigError("multiplicity must be at least 1")
    if multiplicity > count:
        raise ConfigError(
            f"multiplicity {multiplicity} needs at least that many agents, got {count}"
        )
    if count * n_rows < multiplicity * dim:
        raise ConfigError(
            f"infeasible coverage: {count} agents x {n_rows} rows < "
            f"{multiplicity} x {dim} required selector slots"
        )
    if noise is None:
        noise = NoiseSpec.zero(n_rows)

    labels = rng.permutation(dim)
    total = multiplicity * dim
    sequence = [int(labels[s % dim]) for s in range(total)]
    base, extra = divmod(total, count)

    models = []
    start = 0
    for i in range(count):
        size = base + (1 if i < extra else 0)
        chunk = sequence[start : start + size]
        start += size
        h = np.zeros((n_rows, dim))
        for row, k in enumerate(chunk):
            h[row, k] = 1.0
        models.append(ObservationModel(i, h, noise))
    return models
