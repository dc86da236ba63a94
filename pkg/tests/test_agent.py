import math
from dataclasses import replace

import numpy as np
import pytest

from gainsched import agent
from gainsched.agent import (
    Adam,
    AgentConfig,
    DwellState,
    NonFiniteLoss,
    QNetwork,
    ReplayBuffer,
    RewardWeights,
    default_observation_scales,
    epsilon_at,
    init_qnetwork,
    load_checkpoint,
    observe,
    reward,
    save_checkpoint,
    select_action,
    td_loss_and_grads,
    td_loss_and_update,
)
from gainsched.harness import build_library_from_config, default_run_config
from gainsched.plant import PlantParams, hover_state
from gainsched.reference import TrajectoryConfig, sample

P = PlantParams()
SCALES = default_observation_scales(P)


def small_cfg(**agent_overrides):
    cfg = default_run_config()
    overrides = {"hidden": (16, 16), "episodes": 2}
    overrides.update(agent_overrides)
    return replace(cfg, agent=replace(cfg.agent, **overrides))


# ---------------------------------------------------------------------------
# observation


def test_observe_phase():
    x = hover_state()
    assert observe(x, 0.0, 5.0, SCALES)[14] == 0.0
    assert observe(x, 2.5, 5.0, SCALES)[14] == 0.5
    assert observe(x, 5.0, 5.0, SCALES)[14] == 1.0
    assert observe(x, 50.0, 5.0, SCALES)[14] == 1.0


def test_observe_normalization():
    x = hover_state()
    x[0] = 2.5
    x[12] = P.m * P.g
    obs = observe(x, 0.0, 5.0, SCALES)
    assert obs[0] == 0.5
    assert obs[12] == 1.0
    assert len(obs) == 15


# ---------------------------------------------------------------------------
# network


def test_forward_zero_output_layer_gives_bias():
    rng = np.random.default_rng(0)
    net = init_qnetwork((15, 8, 8, 5), "tanh", rng)
    net.params[-2][:] = 0.0
    net.params[-1][:] = 3.25
    q = net.forward(rng.normal(size=15))
    assert np.array_equal(q, np.full(5, 3.25))


def test_forward_deterministic():
    rng = np.random.default_rng(1)
    obs = rng.normal(size=15)
    net = init_qnetwork((15, 32, 32, 7), "tanh", np.random.default_rng(42))
    net2 = init_qnetwork((15, 32, 32, 7), "tanh", np.random.default_rng(42))
    assert np.array_equal(net.forward(obs), net2.forward(obs))
    assert np.array_equal(net.forward(obs), net.forward(obs))


def test_forward_finite_directional_derivative():
    rng = np.random.default_rng(2)
    net = init_qnetwork((15, 16, 16, 4), "tanh", rng)
    obs = rng.normal(size=15)
    d1 = (net.forward(obs + 1e-4 * np.eye(15)[3]) - net.forward(obs)) / 1e-4
    d2 = (net.forward(obs + 1e-5 * np.eye(15)[3]) - net.forward(obs)) / 1e-5
    assert np.all(np.isfinite(d1))
    assert np.allclose(d1, d2, rtol=0.1, atol=1e-6)


def test_forward_batch_matches_single():
    rng = np.random.default_rng(3)
    net = init_qnetwork((15, 8, 8, 3), "relu", rng)
    batch = rng.normal(size=(6, 15))
    q = net.forward(batch)
    for i in range(6):
        assert np.allclose(q[i], net.forward(batch[i]), atol=1e-14)


# ---------------------------------------------------------------------------
# action selection


def test_select_action_greedy_lowest_index_tie_break():
    rng = np.random.default_rng(4)
    dwell = DwellState(0, 0)
    q = np.array([1.0, 3.0, 3.0, 0.0])
    assert select_action(q, 0.0, dwell, 10, rng) == 1


def test_select_action_dwell_holds():
    rng = np.random.default_rng(5)
    dwell = DwellState(current=2, steps_remaining=3)
    q = np.array([100.0, 0.0, -5.0])
    for expected_remaining in (2, 1, 0):
        assert select_action(q, 0.0, dwell, 10, rng) == 2
        assert dwell.steps_remaining == expected_remaining
    # dwell expired: now the argmax wins and the counter resets
    assert select_action(q, 0.0, dwell, 10, rng) == 0
    assert dwell.steps_remaining == 9


def test_select_action_switch_cadence():
    rng = np.random.default_rng(6)
    dwell = DwellState(0, 0)
    picks = [select_action(np.zeros(5), 1.0, dwell, 10, rng) for _ in range(100)]
    changes = [i for i in range(1, 100) if picks[i] != picks[i - 1]]
    assert changes and all(i % 10 == 0 for i in changes)


def test_select_action_uniform_exploration():
    rng = np.random.default_rng(7)
    n, draws = 15, 100_000
    dwell = DwellState(0, 0)
    counts = np.zeros(n)
    for _ in range(draws):
        counts[select_action(np.zeros(n), 1.0, dwell, 1, rng)] += 1
    p = 1.0 / n
    sigma = math.sqrt(draws * p * (1 - p))
    assert np.all(np.abs(counts - draws * p) < 3 * sigma)


# ---------------------------------------------------------------------------
# reward


def test_reward_perfect_hover():
    ref = sample(0.0, TrajectoryConfig(r0=(0, 0, 0), r_star=(0, 0, 0)))
    w = RewardWeights()
    assert reward(hover_state(), ref, np.zeros(4), np.zeros(3), False, w) == 0.0


def test_reward_switch_only():
    ref = sample(0.0, TrajectoryConfig(r0=(0, 0, 0), r_star=(0, 0, 0)))
    w = RewardWeights()
    assert reward(hover_state(), ref, np.zeros(4), np.zeros(3), True, w) == -w.w_s


def test_reward_failure_penalty():
    ref = sample(0.0, TrajectoryConfig(r0=(0, 0, 0), r_star=(0, 0, 0)))
    w = RewardWeights()
    base = reward(hover_state(), ref, np.zeros(4), np.zeros(3), False, w)
    failed = reward(hover_state(), ref, np.zeros(4), np.zeros(3), False, w, failed=True)
    assert failed == base - w.rho_fail


def test_reward_nonpositive_random():
    rng = np.random.default_rng(8)
    ref = sample(1.0, TrajectoryConfig())
    w = RewardWeights()
    for _ in range(100):
        x = hover_state()
        x[0:6] = rng.normal(size=6)
        x[6:9] = rng.uniform(-0.5, 0.5, size=3)
        x[9:12] = rng.normal(size=3)
        r = reward(x, ref, rng.normal(size=4), rng.normal(size=3),
                   rng.random() < 0.5, w, failed=rng.random() < 0.2)
        assert r <= 0.0


def test_reward_weights_validation():
    with pytest.raises(ValueError):
        RewardWeights(w_r=-1.0)


# ---------------------------------------------------------------------------
# replay buffer


def test_replay_fifo_and_capacity():
    buf = ReplayBuffer(capacity=4, obs_dim=2)
    for i in range(6):
        buf.push(np.array([i, i]), i, float(i), np.array([i + 1, i + 1]), False)
    assert len(buf) == 4
    # oldest two entries were overwritten
    assert set(buf.action.tolist()) == {2, 3, 4, 5}


def test_replay_sample_in_range():
    rng = np.random.default_rng(9)
    buf = ReplayBuffer(capacity=16, obs_dim=3)
    for i in range(5):
        buf.push(np.full(3, i), i, 0.0, np.full(3, i), False)
    for _ in range(50):
        obs, action, rew, nxt, done = buf.sample(8, rng)
        assert np.all(action < 5) and np.all(action >= 0)
        assert obs.shape == (8, 3)


# ---------------------------------------------------------------------------
# TD updates


def test_td_target_terminal():
    rng = np.random.default_rng(10)
    net = init_qnetwork((3, 2), "tanh", rng)
    obs = np.array([0.5, -0.2, 1.0])
    batch = (obs[None, :], np.array([1]), np.array([-2.0]), obs[None, :], np.array([1.0]))
    loss, _ = td_loss_and_grads(net, net, batch, gamma=0.9)
    q = net.forward(obs)
    assert abs(loss - (q[1] - (-2.0)) ** 2) < 1e-12


def test_td_target_gamma_zero_equals_reward():
    rng = np.random.default_rng(11)
    net = init_qnetwork((3, 4), "relu", rng)
    obs = rng.normal(size=3)
    nxt = rng.normal(size=3)
    batch = (obs[None, :], np.array([2]), np.array([-0.7]), nxt[None, :], np.array([0.0]))
    loss, _ = td_loss_and_grads(net, net, batch, gamma=1e-300)
    q = net.forward(obs)
    assert abs(loss - (q[2] - (-0.7)) ** 2) < 1e-10


def test_td_loss_hand_computed_linear_net():
    # 2-action linear net: q = obs @ W + b, everything by hand
    W = np.array([[0.5, -1.0], [2.0, 0.25]])
    b = np.array([0.1, -0.3])
    net = QNetwork((2, 2), "tanh", [W.copy(), b.copy()])
    obs = np.array([1.0, 2.0])
    nxt = np.array([-1.0, 0.5])
    gamma = 0.9
    r = -1.5
    q = obs @ W + b                      # [4.6, -0.8]
    q_next = nxt @ W + b                 # [0.6, 0.825]
    target = r + gamma * q_next.max()    # -1.5 + 0.9*0.825
    err = q[0] - target
    batch = (obs[None, :], np.array([0]), np.array([r]), nxt[None, :], np.array([0.0]))
    loss, grads = td_loss_and_grads(net, net, batch, gamma)
    assert abs(loss - err * err) < 1e-10
    dW_hand = np.outer(obs, [2 * err, 0.0])
    db_hand = np.array([2 * err, 0.0])
    assert np.allclose(grads[0], dW_hand, atol=1e-10)
    assert np.allclose(grads[1], db_hand, atol=1e-10)


@pytest.mark.parametrize("activation", ["tanh", "relu"])
def test_gradient_check_finite_differences(activation):
    rng = np.random.default_rng(12)
    net = init_qnetwork((5, 8, 8, 3), activation, rng)
    batch = (rng.normal(size=(6, 5)), rng.integers(3, size=6),
             rng.normal(size=6), rng.normal(size=(6, 5)),
             (rng.random(6) < 0.3).astype(float))
    target_net = net.copy()  # freeze bootstrap so the loss is smooth in params
    _, grads = td_loss_and_grads(net, target_net, batch, gamma=0.95)
    eps = 1e-5
    for pi, g in enumerate(grads):
        flat = net.params[pi].reshape(-1)
        g_flat = g.reshape(-1)
        idx = rng.choice(flat.size, size=min(20, flat.size), replace=False)
        for j in idx:
            old = flat[j]
            flat[j] = old + eps
            lp, _ = td_loss_and_grads(net, target_net, batch, gamma=0.95)
            flat[j] = old - eps
            lm, _ = td_loss_and_grads(net, target_net, batch, gamma=0.95)
            flat[j] = old
            fd = (lp - lm) / (2 * eps)
            denom = max(abs(fd), abs(g_flat[j]), 1e-8)
            assert abs(g_flat[j] - fd) / denom < 1e-4


def test_td_nonfinite_loss_raises():
    net = QNetwork((2, 2), "tanh", [np.full((2, 2), np.inf), np.zeros(2)])
    batch = (np.ones((1, 2)), np.array([0]), np.array([0.0]),
             np.ones((1, 2)), np.array([1.0]))
    with np.errstate(invalid="ignore"), pytest.raises(NonFiniteLoss):
        td_loss_and_grads(net, net, batch, gamma=0.9)


def test_adam_moves_parameters():
    rng = np.random.default_rng(13)
    net = init_qnetwork((3, 4), "tanh", rng)
    before = [p.copy() for p in net.params]
    opt = Adam(net.params, lr=1e-2)
    batch = (rng.normal(size=(4, 3)), rng.integers(4, size=4),
             rng.normal(size=4), rng.normal(size=(4, 3)), np.zeros(4))
    td_loss_and_update(net, net, batch, 0.9, opt)
    assert any(not np.array_equal(a, b) for a, b in zip(before, net.params))


# ---------------------------------------------------------------------------
# schedules, training, evaluation


def test_epsilon_schedule():
    ac = AgentConfig()
    total = 1000
    assert epsilon_at(0, total, ac) == 1.0
    assert abs(epsilon_at(300, total, ac) - (1.0 + (0.05 - 1.0) * 0.5)) < 1e-12
    assert abs(epsilon_at(600, total, ac) - 0.05) < 1e-12
    assert abs(epsilon_at(999, total, ac) - 0.05) < 1e-12


def test_train_lr_zero_keeps_parameters(library):
    cfg = small_cfg(lr=0.0, eps_start=1.0, eps_end=1.0, episodes=1)
    rng = np.random.default_rng(cfg.seed)
    ref_net = init_qnetwork((15, 16, 16, len(library)), "tanh", rng)
    result = agent.train(cfg, library)
    assert all(np.array_equal(a, b) for a, b in zip(result.net.params, ref_net.params))
    assert result.history[0].episode_return < 0.0


def test_train_deterministic(library):
    cfg = small_cfg()
    r1 = agent.train(cfg, library)
    r2 = agent.train(cfg, library)
    for a, b in zip(r1.history, r2.history):
        assert a.episode_return == b.episode_return
        assert a.mean_loss == b.mean_loss
        assert a.switches == b.switches
    assert all(np.array_equal(x, y) for x, y in zip(r1.net.params, r2.net.params))


def test_train_online_mode(library):
    cfg = small_cfg(mode="online", episodes=1)
    result = agent.train(cfg, library)
    assert len(result.history) == 1
    assert result.history[0].steps == 1000


def test_evaluate_zero_net_constant_lowest_action(library):
    cfg = small_cfg()
    net = QNetwork((15, len(library)),
                   "tanh", [np.zeros((15, len(library))), np.zeros(len(library))])
    log = agent.evaluate(net, cfg, library)
    assert len(log) == int(round(cfg.duration / cfg.plant.dt)) + 1
    assert np.all(log.action == 0)
    assert log.termination == "completed"


def test_evaluate_dwell_and_shield(library):
    cfg = small_cfg()
    rng = np.random.default_rng(99)
    net = init_qnetwork((15, 16, 16, len(library)), "tanh", rng)
    log = agent.evaluate(net, cfg, library)
    changes = np.nonzero(log.action[1:] != log.action[:-1])[0] + 1
    assert all(int(i) % cfg.agent.dwell_steps == 0 for i in changes)
    for i in range(len(log)):
        assert library.match_index(log.gains[i]) == log.action[i]


# ---------------------------------------------------------------------------
# checkpoints


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(14)
    net = init_qnetwork((15, 64, 64, 15), "tanh", rng)
    path = tmp_path / "ckpt.npz"
    save_checkpoint(path, net, seed=7, config_hash="abc123")
    loaded, meta = load_checkpoint(path)
    assert loaded.sizes == net.sizes
    assert loaded.activation == net.activation
    assert meta == {"seed": 7, "config_hash": "abc123"}
    for a, b in zip(net.params, loaded.params):
        assert np.array_equal(a, b)


def test_checkpoint_version_guard(tmp_path):
    rng = np.random.default_rng(15)
    net = init_qnetwork((3, 2), "tanh", rng)
    path = tmp_path / "ckpt.npz"
    save_checkpoint(path, net, seed=0, config_hash="x")
    data = dict(np.load(path, allow_pickle=False))
    data["version"] = np.array(99)
    np.savez(path, **data)
    with pytest.raises(ValueError):
        load_checkpoint(path)
