"""Omniscient Byzantine adversary strategies.

Faulty agents run no protocol of their own.  Each round the engine hands
the strategy a read-only snapshot of everything (the true parameter, all
good agents' pending gradient-step values and current estimates), and the
strategy produces one message per (faulty sender, good receiver) pair.
Messages may differ per receiver.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .topology import Topology


@dataclass(frozen=True)
class AdversaryView:
    """Read-only snapshot handed to a strategy once per round."""

    truth: np.ndarray
    good_z: dict
    good_x: dict
    round_index: int
    topology: Topology
    b: int

    @property
    def good_ids(self) -> tuple:
        return tuple(sorted(self.good_z))

    @property
    def faulty_ids(self) -> tuple:
        return tuple(v for v in range(self.topology.n) if v not in self.good_z)

    def good_z_stack(self) -> np.ndarray:
        return np.stack([self.good_z[i] for i in self.good_ids])


class AdversaryStrategy(abc.ABC):
    """Produces per-receiver messages for all faulty agents each round.

    ``message_block`` is the single source of randomness: it returns an
    array of shape (len(senders), len(receivers), dim) drawn in one fixed
    order, so the same seed always yields the same attack trace no matter
    how the messages are consumed afterwards.
    """

    name: str = "abstract"

    @abc.abstractmethod
    def message_block(self, view: AdversaryView, senders, receivers, rng) -> np.ndarray:
        raise NotImplementedError

    def messages(self, view: AdversaryView, rng) -> dict:
        """Messages keyed by (sender, receiver), covering exactly the
        faulty-to-good edges of the topology."""
        senders = view.faulty_ids
        receivers = view.good_ids
        if not senders:
            return {}
        block = self.message_block(view, senders, receivers, rng)
        recv_index = {r: j for j, r in enumerate(receivers)}
        out = {}
        for i, s in enumerate(senders):
            for r in view.topology.out_neighbors(s):
                if r in recv_index:
                    out[(s, r)] = block[i, recv_index[r]]
        return out


class GaussianNoiseAttack(AdversaryStrategy):
    """Fresh i.i.d. zero-mean Gaussian vector per (sender, receiver, round)."""

    name = "gaussian_noise"

    def __init__(self, sigma: float):
        if sigma <= 0.0:
            raise ConfigError("gaussian_noise attack needs sigma > 0")
        self.sigma = float(sigma)

    def message_block(self, view, senders, receivers, rng):
        dim = view.truth.shape[0]
        return rng.normal(0.0, self.sigma, size=(len(senders), len(receivers), dim))


class ExtremeCoordinateAttack(AdversaryStrategy):
    """Per coordinate, a value strictly beyond all good values by a margin.

    Sign +1 pushes above the maximum good value, -1 below the minimum.
    With at most b faulty senders these extremes are always trimmed away,
    which is exactly what the feasibility tests exercise.
    """

    name = "extreme_coordinate"

    def __init__(self, directions="alternating", margin: float = 1e6):
        if margin <= 0.0:
            raise ConfigError("extreme_coordinate attack needs margin > 0")
        self.directions = directions
        self.margin = float(margin)

    def _signs(self, dim: int) -> np.ndarray:
        if isinstance(self.directions, str):
            if self.directions == "alternating":
                signs = np.ones(dim)
                signs[1::2] = -1.0
                return signs
            if self.directions == "positive":
                return np.ones(dim)
            if self.directions == "negative":
                return -np.ones(dim)
            raise ConfigError(f"unknown direction spec {self.directions!r}")
        signs = np.asarray(self.directions, dtype=np.float64)
        if signs.shape != (dim,) or not np.all(np.abs(signs) == 1.0):
            raise ConfigError("directions must be +/-1 per coordinate")
        return signs

    def message_block(self, view, senders, receivers, rng):
        z = view.good_z_stack()
        dim = z.shape[1]
        signs = self._signs(dim)
        value = np.where(signs > 0, z.max(axis=0) + self.margin, z.min(axis=0) - self.margin)
        return np.broadcast_to(value, (len(senders), len(receivers), dim)).copy()


class PullTowardAttack(AdversaryStrategy):
    """Pull aggregates toward a target while surviving trimming.

    Sends, per coordinate, the admissible value closest to the target
    within the current good-value range; such messages are never extreme
    relative to the good values, so they survive trimming with positive
    probability and bias the mean as far as trimming allows.
    """

    name = "pull_toward"

    def __init__(self, target):
        self.target = target

    def message_block(self, view, senders, receivers, rng):
        z = view.good_z_stack()
        dim = z.shape[1]
        target = np.broadcast_to(np.asarray(self.target, dtype=np.float64), (dim,))
        value = np.clip(target, z.min(axis=0), z.max(axis=0))
        return np.broadcast_to(value, (len(senders), len(receivers), dim)).copy()


STRATEGY_NAMES = ("gaussian_noise", "extreme_coordinate", "pull_toward")


def make_strategy(name: str, params: dict) -> AdversaryStrategy:
    """Build a strategy from its config name and parameter table."""
    params = dict(params)
    if name == "gaussian_noise":
        return GaussianNoiseAttack(sigma=float(params.pop("sigma", 3.0)))
    if name == "extreme_coordinate":
        return ExtremeCoordinateAttack(
            directions=params.pop("direction", "alternating"),
            margin=float(params.pop("margin", 1e6)),
        )
    if name == "pull_toward":
        return PullTowardAttack(target=params.pop("target", 0.0))
    raise ConfigError(f"unknown adversary strategy {name!r}, expected one of {STRATEGY_NAMES}")
