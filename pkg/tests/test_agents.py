import numpy as np
import pytest

from byzest.aggregation import MessageSet
from byzest.agents import AgentState, finalize_round, local_step
from byzest.errors import AggregationError
from byzest.observation import NoiseSpec, ObservationModel


def noiseless_agent(h, x0):
    h = np.asarray(h, dtype=float)
    model = ObservationModel(0, h, NoiseSpec.zero(h.shape[0]))
    return AgentState(0, np.asarray(x0, dtype=float), model)


class TestLocalStep:
    def test_fixed_point_at_truth(self, rng):
        truth = np.array([1.0, -2.0])
        agent = noiseless_agent(np.eye(2), truth.copy())
        z = local_step(agent, truth, rng)
        assert np.allclose(z, truth, atol=1e-15)

    def test_identity_gram_one_step_exact(self, rng):
        truth = np.array([0.25, 0.75])
        agent = noiseless_agent(np.eye(2), truth + np.array([5.0, -4.0]))
        z = local_step(agent, truth, rng)
        assert np.allclose(z, truth, atol=1e-12)

    def test_unobserved_coordinate_unchanged(self, rng):
        truth = np.array([2.0, 3.0])
        agent = noiseless_agent([[1.0, 0.0]], truth + np.array([1.0, 1.0]))
        z = local_step(agent, truth, rng)
        assert np.allclose(z, truth + np.array([0.0, 1.0]), atol=1e-12)

    def test_accumulator_advances(self, rng):
        agent = noiseless_agent(np.eye(2), np.zeros(2))
        local_step(agent, np.ones(2), rng)
        local_step(agent, np.ones(2), rng)
        assert agent.acc.count == 2


class TestFinalizeRound:
    def test_single_agent_keeps_own_value(self):
        agent = noiseless_agent(np.eye(2), np.zeros(2))
        z = np.array([3.0, 4.0])
        finalize_round(agent, MessageSet([(0, z)]), 0)
        assert np.array_equal(agent.x, z)

    def test_consensus_fixed_point(self):
        agent = noiseless_agent(np.eye(2), np.zeros(2))
        z = np.array([1.5, -0.5])
        msgs = MessageSet([(i, z) for i in range(5)])
        finalize_round(agent, msgs, 1)
        assert np.allclose(agent.x, z, atol=1e-15)

    def test_three_values_median_like(self):
        agent = noiseless_agent(np.eye(1), np.zeros(1))
        msgs = MessageSet([(0, [0.0]), (1, [3.0]), (2, [6.0])])
        finalize_round(agent, msgs, 1)
        assert agent.x[0] == 3.0

    def test_must_include_own_message(self):
        agent = noiseless_agent(np.eye(1), np.zeros(1))
        with pytest.raises(AggregationError):
            finalize_round(agent, MessageSet([(1, [1.0]), (2, [2.0]), (3, [3.0])]), 1)


class TestRoundInvariants:
    def test_truth_is_network_fixed_point_under_any_attack(self, rng):
        # all good at truth, zero noise: one full round leaves them at truth
        # even with b adversarial messages at arbitrary extremes
        truth = rng.normal(size=3)
        b = 2
        agents = [
            AgentState(i, truth.copy(), ObservationModel(i, np.eye(3), NoiseSpec.zero(3)))
            for i in range(5)
        ]
        zs = {a.agent_id: local_step(a, truth, rng) for a in agents}
        for z in zs.values():
            assert np.allclose(z, truth, atol=1e-14)
        hostile = [(10 + j, rng.normal(size=3) * 1e6) for j in range(b)]
        for a in agents:
            msgs = MessageSet([(i, zs[i]) for i in zs] + hostile)
            finalize_round(a, msgs, b)
            assert np.allclose(a.x, truth, atol=1e-12)

    def test_shared_design_contracts_at_rate(self, rng):
        # b=0, no adversary, identical H everywhere: per-round max error
        # shrinks by at least the averaged-defect rate
        h = np.array([[1.0, 0.0], [0.0, np.sqrt(0.5)]])  # defects (0, 0.5)
        truth = rng.normal(size=2)
        agents = [
            AgentState(i, rng.normal(size=2), ObservationModel(i, h, NoiseSpec.zero(2)))
            for i in range(4)
        ]
        rate = 0.5
        for _ in range(10):
            err_before = max(np.abs(a.x - truth).max() for a in agents)
            zs = {a.agent_id: local_step(a, truth, rng) for a in agents}
            for a in agents:
                finalize_round(a, MessageSet(list(zs.items())), 0)
            err_after = max(np.abs(a.x - truth).max() for a in agents)
            assert err_after <= rate * err_before + 1e-12
