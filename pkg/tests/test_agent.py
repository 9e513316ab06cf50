"""Replay memory FIFO semantics, epsilon-greedy selection, and the Q update."""

import numpy as np
import pytest

from dvfsflow import agent as ag
from dvfsflow import nets
from dvfsflow.agent import AgentConfig, ReplayMemory, Transition
from dvfsflow.errors import DomainError, InsufficientDataError
from dvfsflow.simenv import EnvConfig, ProcessorState

# chi-squared upper 0.1% quantile at 11 degrees of freedom
CHI2_CRIT_DF11 = 31.264

ENV = EnvConfig()


def _state(x=50.0):
    return ProcessorState(fps=x, freq=0.5, power=5.0, temp=40.0)


def _transition(i, done=False, r=1.0, source="real"):
    return Transition(_state(float(i)), i % ENV.num_actions, r, _state(float(i + 1)),
                      done, source=source)


def test_push_fifo_and_counter():
    mem = ReplayMemory(capacity=2)
    assert mem.phi == 0 and len(mem) == 0
    for i in range(3):
        mem.push(_transition(i))
    assert mem.phi == 3
    assert len(mem) == 2
    assert [t.s.fps for t in mem.items] == [1.0, 2.0]   # oldest evicted first


def test_push_then_sample_single_element():
    mem = ReplayMemory(capacity=4)
    t = _transition(9)
    mem.push(t)
    got = mem.sample_batch(1, np.random.default_rng(0))
    assert got == [t]


def test_sample_full_size_is_permutation():
    mem = ReplayMemory(capacity=8)
    for i in range(6):
        mem.push(_transition(i))
    out = mem.sample_batch(6, np.random.default_rng(1))
    assert sorted(t.s.fps for t in out) == [float(i) for i in range(6)]


def test_sample_zero_and_insufficient():
    mem = ReplayMemory(capacity=4)
    mem.push(_transition(0))
    assert mem.sample_batch(0, np.random.default_rng(0)) == []
    with pytest.raises(InsufficientDataError):
        mem.sample_batch(2, np.random.default_rng(0))


def test_sample_uniformity_counting_oracle():
    mem = ReplayMemory(capacity=4)
    for i in range(4):
        mem.push(_transition(i))
    rng = np.random.default_rng(42)
    counts = np.zeros(4)
    n = 10_000
    for _ in range(n):
        t = mem.sample_batch(1, rng)[0]
        counts[int(t.s.fps)] += 1
    assert np.all(np.abs(counts / n - 0.25) < 0.02)


def test_memory_provenance_enforced():
    mem = ReplayMemory(capacity=4, allowed_sources=("real",))
    mem.push(_transition(0, source="real"))
    with pytest.raises(DomainError):
        mem.push(_transition(1, source="synth"))


def test_select_action_uniform_when_epsilon_one():
    qnet = ag.init_qnet(ENV, AgentConfig(), seed=0)
    rng = np.random.default_rng(5)
    n = 10_000
    counts = np.zeros(ENV.num_actions)
    for _ in range(n):
        counts[ag.select_action(qnet, _state(), 1.0, ENV, rng)] += 1
    expected = n / ENV.num_actions
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    assert chi2 < CHI2_CRIT_DF11


def test_select_action_greedy_argmax_and_tiebreak():
    qnet = nets.init_mlp([4, ENV.num_actions], seed=0)
    qnet.weights[0][:] = 0.0
    qnet.biases[0][:] = 0.0
    qnet.biases[0][1] = 3.0
    qnet.biases[0][2] = 1.0
    rng = np.random.default_rng(0)
    assert ag.select_action(qnet, _state(), 0.0, ENV, rng) == 1
    qnet.biases[0][:] = 0.0    # all equal -> lowest index
    assert ag.select_action(qnet, _state(), 0.0, ENV, rng) == 0


def test_decay_epsilon():
    cfg = AgentConfig()
    assert ag.decay_epsilon(1.0, cfg) == pytest.approx(0.99)
    assert ag.decay_epsilon(cfg.epsilon_floor, cfg) == cfg.epsilon_floor
    eps = 1.0
    for _ in range(500):
        eps = ag.decay_epsilon(eps, cfg)
    assert eps == cfg.epsilon_floor == 0.05
    assert max(cfg.epsilon_floor, 0.99 ** 500) == cfg.epsilon_floor


def test_sync_target_copy_semantics():
    qnet = ag.init_qnet(ENV, AgentConfig(), seed=1)
    target = ag.sync_target(qnet)
    s = _state()
    assert np.array_equal(ag.q_values(qnet, s, ENV), ag.q_values(target, s, ENV))
    qnet.weights[0][0, 0] += 1.0
    assert not np.array_equal(ag.q_values(qnet, s, ENV), ag.q_values(target, s, ENV))


def test_q_targets_terminal_and_zero_discount():
    cfg = AgentConfig(discount=0.99)
    qnet = ag.init_qnet(ENV, cfg, seed=2)
    target = ag.sync_target(qnet)
    adam = nets.adam_init(qnet, 0.0)   # lr 0 keeps params; inspect loss only
    done_batch = [_transition(3, done=True, r=1.5)]
    _, _, loss = ag.train_q_step(qnet, target, done_batch, cfg, ENV, adam)
    q_sa = ag.q_values(qnet, done_batch[0].s, ENV)[done_batch[0].a]
    assert loss == pytest.approx((q_sa - 1.5) ** 2)

    # gamma = 0 makes y = r even for non-terminal transitions
    zero = AgentConfig(discount=0.0)
    live_batch = [_transition(3, done=False, r=1.5)]
    _, _, loss0 = ag.train_q_step(qnet, target, live_batch, zero, ENV, adam)
    assert loss0 == pytest.approx((q_sa - 1.5) ** 2)


def test_single_transition_regression_to_fixed_target():
    # train to convergence on one transition: Q(s, a) -> r + gamma * max Q(s', .)
    cfg = AgentConfig(discount=0.9, learning_rate=0.01, hidden_sizes=[16, 16])
    qnet = ag.init_qnet(ENV, cfg, seed=3)
    target = ag.sync_target(qnet)
    adam = nets.adam_init(qnet, cfg.learning_rate)
    tr = _transition(5, r=2.0)
    y = tr.r + cfg.discount * float(np.max(ag.q_values(target, tr.s_next, ENV)))
    for _ in range(800):
        qnet, adam, _ = ag.train_q_step(qnet, target, [tr], cfg, ENV, adam)
    assert ag.q_values(qnet, tr.s, ENV)[tr.a] == pytest.approx(y, abs=1e-3)


def test_dqn_converges_to_value_iteration_on_two_state_mdp():
    """Desk-scale convergence check against an independent value-iteration oracle.

    MDP: states A, B encoded as distinct ProcessorStates; deterministic
    transitions A-(a0)->A r=1, A-(a1)->B r=0, B-(a0)->A r=0, B-(a1)->B r=2.
    """
    k2 = EnvConfig(num_actions=2)
    s_a = ProcessorState(fps=20.0, freq=0.3, power=3.0, temp=30.0)
    s_b = ProcessorState(fps=90.0, freq=0.9, power=12.0, temp=45.0)
    table = {  # (state, action) -> (reward, next_state)
        (0, 0): (1.0, 0), (0, 1): (0.0, 1),
        (1, 0): (0.0, 0), (1, 1): (2.0, 1),
    }
    states = [s_a, s_b]
    gamma = 0.9

    # oracle: value iteration on the tabular MDP
    q_star = np.zeros((2, 2))
    for _ in range(2_000):
        v = q_star.max(axis=1)
        q_new = np.array([[table[(s, a)][0] + gamma * v[table[(s, a)][1]]
                           for a in range(2)] for s in range(2)])
        q_star = q_new

    transitions = [Transition(states[s], a, r, states[nx], False)
                   for (s, a), (r, nx) in table.items()]
    cfg = AgentConfig(discount=gamma, learning_rate=0.02, hidden_sizes=[32, 32],
                      target_sync_period=25)
    qnet = ag.init_qnet(k2, cfg, seed=4)
    target = ag.sync_target(qnet)
    adam = nets.adam_init(qnet, cfg.learning_rate)
    for step in range(1, 5_001):
        qnet, adam, _ = ag.train_q_step(qnet, target, transitions, cfg, k2, adam)
        if step % cfg.target_sync_period == 0:
            target = ag.sync_target(qnet)
    learned = np.array([ag.q_values(qnet, s, k2) for s in states])
    assert np.max(np.abs(learned - q_star)) < 0.05
