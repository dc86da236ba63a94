"""Online deep Q-learning over the certified gain library.

The action space is the library index set. Observations are the
normalized 14-dim physical state plus the phase variable min(t/Tf, 1).
The Q-network is a small MLP trained by temporal-difference learning
with manually derived backpropagation (no autograd dependency); the
default mode uses a replay buffer and a periodically synced target
copy, while "online" mode updates from the single freshest transition
with a live bootstrap.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .plant import ETA, ETA_DOT, POS, VEL, euler_rate_matrix


class NonFiniteLoss(Exception):
    """TD loss or its gradients stopped being finite."""


# ---------------------------------------------------------------------------
# observation


def default_observation_scales(p):
    """Per-component normalizers keeping observations O(1)."""
    mg = p.m * p.g
    return np.array([5.0, 5.0, 5.0, 5.0, 5.0, 5.0,
                     math.pi / 3, math.pi / 3, math.pi / 3,
                     5.0, 5.0, 5.0, mg, mg])


def observe(x, t, tf, scales):
    """Normalized state plus phase, the 15-dim network input."""
    obs = np.empty(15)
    obs[:14] = x / scales
    obs[14] = min(t / tf, 1.0)
    return obs


# ---------------------------------------------------------------------------
# Q-network (MLP with manual backprop)


def _act(h, kind):
    if kind == "tanh":
        return np.tanh(h)
    return np.maximum(h, 0.0)


def _act_grad(h_pre, h_post, kind):
    if kind == "tanh":
        return 1.0 - h_post * h_post
    return (h_pre > 0.0).astype(float)


class QNetwork:
    """15 -> hidden -> hidden -> N action-value network."""

    def __init__(self, sizes, activation, params):
        self.sizes = tuple(sizes)
        self.activation = activation
        self.params = params  # [W1, b1, W2, b2, ..., WL, bL]

    @property
    def n_actions(self):
        return self.sizes[-1]

    def copy(self):
        return QNetwork(self.sizes, self.activation, [p.copy() for p in self.params])

    def forward(self, obs):
        """Action values for a single observation or a batch (rows)."""
        h = np.atleast_2d(obs)
        L = len(self.params) // 2
        for i in range(L):
            W, b = self.params[2 * i], self.params[2 * i + 1]
            h = h @ W + b
            if i < L - 1:
                h = _act(h, self.activation)
        return h[0] if np.ndim(obs) == 1 else h

    def forward_cached(self, obs_batch):
        """Forward pass keeping the per-layer values needed by backprop."""
        h = obs_batch
        pre, post = [], [h]
        L = len(self.params) // 2
        for i in range(L):
            W, b = self.params[2 * i], self.params[2 * i + 1]
            a = h @ W + b
            pre.append(a)
            h = _act(a, self.activation) if i < L - 1 else a
            post.append(h)
        return h, (pre, post)

    def backward(self, cache, dout):
        """Gradients of a scalar loss wrt params given d(loss)/d(output)."""
        pre, post = cache
        L = len(self.params) // 2
        grads = [None] * len(self.params)
        delta = dout
        for i in reversed(range(L)):
            grads[2 * i] = post[i].T @ delta
            grads[2 * i + 1] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.params[2 * i].T) * _act_grad(
                    pre[i - 1], post[i], self.activation)
        return grads


def init_qnetwork(sizes, activation, rng):
    """He-style initialization drawn from the run's generator."""
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        params.append(rng.standard_normal((fan_in, fan_out)) * math.sqrt(2.0 / fan_in))
        params.append(np.zeros(fan_out))
    return QNetwork(sizes, activation, params)


class Adam:
    """Adaptive-moment first-order optimizer over a parameter list."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


# ---------------------------------------------------------------------------
# action selection under dwell time


@dataclass
class DwellState:
    current: int = 0
    steps_remaining: int = 0


def select_action(qvals, epsilon, dwell, dwell_steps, rng):
    """Epsilon-greedy pick shielded by the dwell-time constraint.

    While the dwell counter is positive the previous index is returned
    unconditionally and the generator is left untouched; at a decision
    point the counter resets to dwell_steps. Ties break to the lowest
    index.
    """
    if dwell.steps_remaining <= 0:
        if epsilon > 0.0 and rng.random() < epsilon:
            dwell.current = int(rng.integers(len(qvals)))
        else:
            dwell.current = int(np.argmax(qvals))
        dwell.steps_remaining = dwell_steps
    dwell.steps_remaining -= 1
    return dwell.current


# ---------------------------------------------------------------------------
# reward


@dataclass(frozen=True)
class RewardWeights:
    w_r: float = 1.0
    w_v: float = 0.1
    w_eta: float = 0.1
    w_omega: float = 0.01
    w_u: float = 1e-4
    w_s: float = 0.01
    rho_fail: float = 100.0

    def __post_init__(self):
        for name in ("w_r", "w_v", "w_eta", "w_omega", "w_u", "w_s", "rho_fail"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be nonnegative")


def reward(x, ref, u, tau, switched, weights, failed=False):
    """Per-step penalty: tracking, attitude, rates, effort, switching, failure.

    Always nonpositive. Body rates come from w = E^-1(phi, theta) eta_dot.
    """
    e_r = x[POS] - ref.pos
    e_v = x[VEL] - ref.vel
    eta = x[ETA]
    w = euler_rate_matrix(eta[0], eta[1])[1] @ x[ETA_DOT]
    r = -(weights.w_r * float(e_r @ e_r)
          + weights.w_v * float(e_v @ e_v)
          + weights.w_eta * float(eta @ eta)
          + weights.w_omega * float(w @ w))
    r -= weights.w_u * (u[0] * u[0] + float(tau @ tau))
    if switched:
        r -= weights.w_s
    if failed:
        r -= weights.rho_fail
    return r


# ---------------------------------------------------------------------------
# replay buffer


class ReplayBuffer:
    """Fixed-capacity FIFO ring over (obs, action, reward, next_obs, done)."""

    def __init__(self, capacity, obs_dim):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.action = np.zeros(capacity, dtype=np.int64)
        self.reward = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, obs_dim))
        self.done = np.zeros(capacity)
        self.pos = 0
        self.size = 0

    def __len__(self):
        return self.size

    def push(self, obs, action, rew, next_obs, done):
        i = self.pos
        self.obs[i] = obs
        self.action[i] = action
        self.reward[i] = rew
        self.next_obs[i] = next_obs
        self.done[i] = float(done)
        self.pos = (self.pos + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size, rng):
        idx = rng.integers(self.size, size=batch_size)
        return (self.obs[idx], self.action[idx], self.reward[idx],
                self.next_obs[idx], self.done[idx])


# ---------------------------------------------------------------------------
# TD update


def td_loss_and_grads(net, bootstrap_net, batch, gamma):
    """Mean squared TD error over the batch and its parameter gradients.

    bootstrap targets r + gamma (1 - d) max_a' Q(s', a') come from
    bootstrap_net (the target copy, or the live net itself in online mode).
    """
    obs, action, rew, next_obs, done = batch
    q_next = bootstrap_net.forward(np.atleast_2d(next_obs))
    targets = rew + gamma * (1.0 - done) * q_next.max(axis=1)

    q, cache = net.forward_cached(np.atleast_2d(obs))
    nb = q.shape[0]
    sel = q[np.arange(nb), action]
    err = sel - targets
    loss = float(err @ err) / nb

    dout = np.zeros_like(q)
    dout[np.arange(nb), action] = 2.0 * err / nb
    grads = net.backward(cache, dout)
    if not math.isfinite(loss):
        raise NonFiniteLoss(f"TD loss is {loss}")
    return loss, grads


def td_loss_and_update(net, bootstrap_net, batch, gamma, optimizer):
    """One TD step: loss, backprop, optimizer update. Returns the loss."""
    loss, grads = td_loss_and_grads(net, bootstrap_net, batch, gamma)
    optimizer.step(net.params, grads)
    return loss


# ---------------------------------------------------------------------------
# configuration and training loop


@dataclass(frozen=True)
class AgentConfig:
    hidden: tuple = (64, 64)
    activation: str = "tanh"      # "tanh" | "relu"
    gamma: float = 0.99
    lr: float = 1e-3
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_fraction: float = 0.6     # fraction of total steps to anneal over
    dwell_steps: int = 10
    mode: str = "replay"          # "replay" | "online" (no buffer, live bootstrap)
    capacity: int = 50_000
    batch_size: int = 64
    target_sync: int = 500        # updates between target-parameter syncs
    episodes: int = 200

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must be in (0, 1)")
        if self.activation not in ("tanh", "relu"):
            raise ValueError("activation must be 'tanh' or 'relu'")
        if self.mode not in ("replay", "online"):
            raise ValueError("mode must be 'replay' or 'online'")
        if self.dwell_steps < 1:
            raise ValueError("dwell_steps must be at least 1")
        if not 0.0 <= self.eps_start <= 1.0 or not 0.0 <= self.eps_end <= 1.0:
            raise ValueError("epsilon bounds must be in [0, 1]")


def epsilon_at(step, total_steps, ac):
    """Linear anneal from eps_start to eps_end over the first eps_fraction."""
    horizon = max(1.0, ac.eps_fraction * total_steps)
    frac = min(1.0, step / horizon)
    return ac.eps_start + (ac.eps_end - ac.eps_start) * frac


@dataclass
class EpisodeStats:
    episode: int
    episode_return: float
    steps: int
    mean_loss: float
    epsilon: float
    switches: int
    termination: str


@dataclass
class TrainResult:
    net: QNetwork
    history: list = field(default_factory=list)
    seed: int = 0


def train(cfg, library=None):
    """Run deep Q-learning episodes over the certified library.

    Deterministic given cfg.seed: environment stepping, exploration,
    replay sampling and updates interleave in a fixed order. Every
    applied gain is a library entry by construction (the action space
    is the library index set).
    """
    from .harness import Environment, build_library_from_config

    if library is None:
        library = build_library_from_config(cfg)
    if len(library) == 0:
        from .certification import EmptyLibrary
        raise EmptyLibrary("cannot train over an empty library")

    ac = cfg.agent
    rng = np.random.default_rng(cfg.seed)
    env = Environment(cfg, library)
    n_actions = len(library)
    net = init_qnetwork((15, *ac.hidden, n_actions), ac.activation, rng)
    bootstrap = net.copy() if ac.mode == "replay" else net
    optimizer = Adam(net.params, lr=ac.lr)
    buf = ReplayBuffer(ac.capacity, 15) if ac.mode == "replay" else None

    steps_per_ep = env.n_steps
    total_steps = ac.episodes * steps_per_ep
    global_step = 0
    updates = 0
    history = []

    for ep in range(ac.episodes):
        x = env.initial_state()
        dwell = DwellState(0, 0)
        prev_action = None
        ep_return = 0.0
        losses = []
        switches = 0
        termination = "completed"
        steps_done = 0

        for i in range(steps_per_ep):
            t = i * env.dt
            eps = epsilon_at(global_step, total_steps, ac)
            obs = observe(x, t, env.tf, env.scales)
            qvals = net.forward(obs)
            action = select_action(qvals, eps, dwell, ac.dwell_steps, rng)
            switched = prev_action is not None and action != prev_action
            if switched:
                switches += 1
            prev_action = action

            x_next, rew, done, cause = env.transition(x, t, action, switched)
            obs_next = observe(x_next, t + env.dt, env.tf, env.scales)
            ep_return += rew
            global_step += 1
            steps_done = i + 1

            if buf is not None:
                buf.push(obs, action, rew, obs_next, done)
                if len(buf) >= ac.batch_size:
                    batch = buf.sample(ac.batch_size, rng)
                    losses.append(td_loss_and_update(net, bootstrap, batch, ac.gamma, optimizer))
                    updates += 1
                    if updates % ac.target_sync == 0:
                        bootstrap = net.copy()
            else:
                batch = (obs[None, :], np.array([action]), np.array([rew]),
                         obs_next[None, :], np.array([float(done)]))
                losses.append(td_loss_and_update(net, net, batch, ac.gamma, optimizer))
                updates += 1

            x = x_next
            if done:
                termination = cause
                break

        history.append(EpisodeStats(
            episode=ep,
            episode_return=ep_return,
            steps=steps_done,
            mean_loss=float(np.mean(losses)) if losses else 0.0,
            epsilon=epsilon_at(global_step, total_steps, ac),
            switches=switches,
            termination=termination,
        ))
    return TrainResult(net=net, history=history, seed=cfg.seed)


def evaluate(net, cfg, library=None):
    """Greedy (epsilon = 0) shielded rollout with full logging."""
    from .harness import Environment, build_library_from_config

    if library is None:
        library = build_library_from_config(cfg)
    env = Environment(cfg, library)
    rng = np.random.default_rng(cfg.seed)

    def pick(i, x, t, dwell):
        qvals = net.forward(observe(x, t, env.tf, env.scales))
        return select_action(qvals, 0.0, dwell, cfg.agent.dwell_steps, rng)

    return env.rollout(pick, seed=cfg.seed)


# ---------------------------------------------------------------------------
# checkpointing

CHECKPOINT_VERSION = 1


def save_checkpoint(path, net, seed, config_hash):
    """Bit-exact dump of the network plus provenance fields."""
    payload = {
        "version": np.array(CHECKPOINT_VERSION),
        "sizes": np.array(net.sizes),
        "activation": np.array(net.activation),
        "seed": np.array(seed),
        "config_hash": np.array(config_hash),
    }
    for i, p in enumerate(net.params):
        payload[f"param_{i}"] = p
    np.savez(path, **payload)


def load_checkpoint(path):
    """Restore (net, meta) from a checkpoint written by save_checkpoint."""
    data = np.load(path, allow_pickle=False)
    version = int(data["version"])
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    sizes = tuple(int(s) for s in data["sizes"])
    n_params = 2 * (len(sizes) - 1)
    params = [data[f"param_{i}"] for i in range(n_params)]
    net = QNetwork(sizes, str(data["activation"]), params)
    meta = {"seed": int(data["seed"]), "config_hash": str(data["config_hash"])}
    return net, meta
