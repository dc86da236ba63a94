"""Configuration, closed-loop episode execution, CSV logs and audits.

The closed loop integrates x_{t+1} = Phi(x_t, k_t): the selected gain is
held over the sampling period while the feedback law itself is evaluated
at every RK4 stage, i.e. Phi is the RK4 discretization of the smooth
closed-loop vector field for a frozen gain.

Episode CSVs carry every quantity the analysis and the figures need,
one row per sampling instant, full float precision (17 significant
digits, bit-exact round trip). Config files are flat `key = value` text
with dotted section prefixes; unknown keys are rejected.
"""

import hashlib
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import agent as agent_mod
from .certification import build_library, certify, load_gain_bounds
from .controller import SingularInversion, as_gain_vector, control_terms
from .plant import (
    POS,
    NumericalBlowup,
    PlantParams,
    SingularAttitude,
    check_blowup,
    recover_torque,
)
from .reference import ReferenceSample, TrajectoryConfig, quintic_beta, ninth_beta, snap_sup_norm

SCHEMA_EPISODE = "episode-v1"
SCHEMA_TRAINING = "training-v1"

OUTDIR_ENV_VAR = "GAINSCHED_OUTDIR"

# safety-violation bounds applied during train/eval episodes
SAFETY_POS_ERR = 5.0      # [m]
SAFETY_TILT = 1.2         # [rad] on |phi| and |theta|


class ParseError(Exception):
    """Config file line could not be parsed."""


class ValidationError(Exception):
    """Config contents violate an invariant or name unknown keys."""


# ---------------------------------------------------------------------------
# run configuration


@dataclass(frozen=True)
class LibraryConfig:
    n_trans: int = 5
    n_yaw: int = 3
    bounds_file: str = ""     # empty -> packaged bounds table

    def __post_init__(self):
        if self.n_trans < 1:
            raise ValueError("n_trans must be at least 1")
        if self.n_yaw < 1:
            raise ValueError("n_yaw must be at least 1")


@dataclass(frozen=True)
class CertConfig:
    margin: float = 0.05      # required stability margin [1/s]
    q_scale: float = 1.0      # Q = q_scale * I
    rho_adm: float = 5.0      # admissible Lyapunov level for Z_adm

    def __post_init__(self):
        if self.margin < 0.0:
            raise ValueError("margin must be nonnegative")
        if self.q_scale <= 0.0:
            raise ValueError("q_scale must be positive")
        if self.rho_adm <= 0.0:
            raise ValueError("rho_adm must be positive")


@dataclass(frozen=True)
class RunConfig:
    plant: PlantParams = field(default_factory=PlantParams)
    traj: TrajectoryConfig = field(default_factory=TrajectoryConfig)
    duration: float = 10.0
    library: LibraryConfig = field(default_factory=LibraryConfig)
    cert: CertConfig = field(default_factory=CertConfig)
    reward: agent_mod.RewardWeights = field(default_factory=agent_mod.RewardWeights)
    agent: agent_mod.AgentConfig = field(default_factory=agent_mod.AgentConfig)
    seed: int = 0
    outdir: str = "runs"

    def __post_init__(self):
        if self.duration <= 0.0:
            raise ValueError("duration must be positive")


def default_run_config():
    return RunConfig()


def replace_seed(cfg, seed):
    return replace(cfg, seed=seed)


# key -> (section attr, field name, parser)
def _pfloat(v):
    return float(v)


def _pint(v):
    return int(v)


def _pstr(v):
    return v


def _pvec3(v):
    parts = [p for p in v.replace(",", " ").split() if p]
    if len(parts) != 3:
        raise ValueError(f"expected three numbers, got {v!r}")
    return tuple(float(p) for p in parts)


def _pints(v):
    parts = [p for p in v.replace(",", " ").split() if p]
    return tuple(int(p) for p in parts)


_KEYMAP = {
    "plant.m": ("plant", "m", _pfloat),
    "plant.g": ("plant", "g", _pfloat),
    "plant.inertia": ("plant", "inertia", _pvec3),
    "plant.dt": ("plant", "dt", _pfloat),
    "traj.r0": ("traj", "r0", _pvec3),
    "traj.r_star": ("traj", "r_star", _pvec3),
    "traj.tf": ("traj", "tf", _pfloat),
    "traj.smoothness": ("traj", "smoothness", _pstr),
    "episode.duration": (None, "duration", _pfloat),
    "library.n_trans": ("library", "n_trans", _pint),
    "library.n_yaw": ("library", "n_yaw", _pint),
    "library.bounds_file": ("library", "bounds_file", _pstr),
    "cert.margin": ("cert", "margin", _pfloat),
    "cert.q_scale": ("cert", "q_scale", _pfloat),
    "cert.rho_adm": ("cert", "rho_adm", _pfloat),
    "reward.w_r": ("reward", "w_r", _pfloat),
    "reward.w_v": ("reward", "w_v", _pfloat),
    "reward.w_eta": ("reward", "w_eta", _pfloat),
    "reward.w_omega": ("reward", "w_omega", _pfloat),
    "reward.w_u": ("reward", "w_u", _pfloat),
    "reward.w_s": ("reward", "w_s", _pfloat),
    "reward.rho_fail": ("reward", "rho_fail", _pfloat),
    "agent.hidden": ("agent", "hidden", _pints),
    "agent.activation": ("agent", "activation", _pstr),
    "agent.gamma": ("agent", "gamma", _pfloat),
    "agent.lr": ("agent", "lr", _pfloat),
    "agent.eps_start": ("agent", "eps_start", _pfloat),
    "agent.eps_end": ("agent", "eps_end", _pfloat),
    "agent.eps_fraction": ("agent", "eps_fraction", _pfloat),
    "agent.dwell_steps": ("agent", "dwell_steps", _pint),
    "agent.mode": ("agent", "mode", _pstr),
    "agent.capacity": ("agent", "capacity", _pint),
    "agent.batch_size": ("agent", "batch_size", _pint),
    "agent.target_sync": ("agent", "target_sync", _pint),
    "agent.episodes": ("agent", "episodes", _pint),
    "run.seed": (None, "seed", _pint),
    "run.outdir": (None, "outdir", _pstr),
}


def load_config(path):
    """Parse and validate a flat key = value config file.

    An empty file yields the full defaults. Unknown keys and invariant
    violations raise ValidationError naming the offender; malformed
    lines raise ParseError.
    """
    overrides = {}
    unknown = []
    with open(path) as fh:
        for ln, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError(f"{path}:{ln}: expected 'key = value', got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in _KEYMAP:
                unknown.append(key)
                continue
            section, fieldname, parser = _KEYMAP[key]
            try:
                overrides[(section, fieldname)] = parser(value)
            except ValueError as exc:
                raise ParseError(f"{path}:{ln}: bad value for {key}: {exc}") from exc
    if unknown:
        raise ValidationError("unknown keys: " + ", ".join(sorted(unknown)))
    return _assemble_config(overrides)


def _assemble_config(overrides):
    def section_kwargs(name):
        return {f: v for (s, f), v in overrides.items() if s == name}

    try:
        plant = PlantParams(**section_kwargs("plant"))
        traj = TrajectoryConfig(**section_kwargs("traj"))
        library = LibraryConfig(**section_kwargs("library"))
        cert = CertConfig(**section_kwargs("cert"))
        reward = agent_mod.RewardWeights(**section_kwargs("reward"))
        agent_cfg = agent_mod.AgentConfig(**section_kwargs("agent"))
        top = section_kwargs(None)
        return RunConfig(plant=plant, traj=traj, library=library, cert=cert,
                         reward=reward, agent=agent_cfg, **top)
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc


def dump_config(cfg):
    """Canonical text form of the config (the hash input)."""
    lines = []
    for key, (section, fieldname, _) in _KEYMAP.items():
        obj = cfg if section is None else getattr(cfg, section)
        val = getattr(obj, fieldname)
        if isinstance(val, tuple):
            val = ", ".join(f"{v:.17g}" if isinstance(v, float) else str(v) for v in val)
        elif isinstance(val, float):
            val = f"{val:.17g}"
        lines.append(f"{key} = {val}")
    return "\n".join(lines) + "\n"


def config_hash(cfg):
    return hashlib.sha256(dump_config(cfg).encode()).hexdigest()[:16]


def resolve_outdir(cfg, override=None):
    """Output directory: CLI flag beats env var beats config."""
    out = override or os.environ.get(OUTDIR_ENV_VAR) or cfg.outdir
    os.makedirs(out, exist_ok=True)
    return out


def build_library_from_config(cfg):
    """Certified library per the config; checks rho_adm covers every entry."""
    bounds = load_gain_bounds(cfg.library.bounds_file or None)
    rbar = snap_sup_norm(cfg.traj)
    Q = cfg.cert.q_scale * np.eye(14)
    lib = build_library(bounds, cfg.library.n_trans, cfg.library.n_yaw, rbar,
                        Q=Q, margin=cfg.cert.margin)
    worst = max(e.certificate.rho_star for e in lib.entries)
    if worst > cfg.cert.rho_adm:
        raise ValidationError(
            f"cert.rho_adm = {cfg.cert.rho_adm} is below the library's largest "
            f"invariance level rho_star = {worst:.4f}")
    return lib


# ---------------------------------------------------------------------------
# episode logs


EPISODE_COLUMNS = (
    ["t"]
    + ["rx", "ry", "rz", "vx", "vy", "vz", "phi", "theta", "psi",
       "phi_dot", "theta_dot", "psi_dot", "T", "T_dot"]
    + ["er_x", "er_y", "er_z", "ev_x", "ev_y", "ev_z", "ea_x", "ea_y", "ea_z",
       "ej_x", "ej_y", "ej_z", "e_psi", "e_psi_dot"]
    + ["s_x", "s_y", "s_z", "s_psi"]
    + ["u_T", "u_phi", "u_theta", "u_psi"]
    + ["tau_x", "tau_y", "tau_z"]
    + ["reward", "action"]
    + [f"k{i}" for i in range(1, 15)]
    + ["V"]
    + ["rd_x", "rd_y", "rd_z"]
)


@dataclass
class EpisodeLog:
    t: np.ndarray
    x: np.ndarray
    z: np.ndarray
    s: np.ndarray
    u: np.ndarray
    tau: np.ndarray
    reward: np.ndarray
    action: np.ndarray
    gains: np.ndarray
    V: np.ndarray
    r_d: np.ndarray
    seed: int = 0
    episode_return: float = 0.0
    termination: str = "completed"
    tf: float = 5.0
    dt: float = 0.01
    dwell_steps: int = 10

    def __len__(self):
        return len(self.t)


def write_episode_csv(log, path):
    """One row per step, metadata as leading comments, 17 significant digits."""
    with open(path, "w") as fh:
        fh.write(f"# schema = {SCHEMA_EPISODE}\n")
        fh.write(f"# seed = {log.seed}\n")
        fh.write(f"# return = {log.episode_return:.17g}\n")
        fh.write(f"# termination = {log.termination}\n")
        fh.write(f"# tf = {log.tf:.17g}\n")
        fh.write(f"# dt = {log.dt:.17g}\n")
        fh.write(f"# dwell_steps = {log.dwell_steps}\n")
        fh.write(",".join(EPISODE_COLUMNS) + "\n")
        for i in range(len(log)):
            row = [log.t[i], *log.x[i], *log.z[i], *log.s[i], *log.u[i],
                   *log.tau[i], log.reward[i]]
            cells = [f"{v:.17g}" for v in row]
            cells.append(str(int(log.action[i])))
            cells.extend(f"{v:.17g}" for v in log.gains[i])
            cells.append(f"{log.V[i]:.17g}")
            cells.extend(f"{v:.17g}" for v in log.r_d[i])
            fh.write(",".join(cells) + "\n")


def read_episode_csv(path):
    """Inverse of write_episode_csv; values round-trip bit-exactly."""
    meta = {}
    header = None
    data_start = 0
    with open(path) as fh:
        lines = fh.readlines()
    for i, line in enumerate(lines):
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            meta[key.strip()] = value.strip()
        else:
            header = line.strip().split(",")
            data_start = i + 1
            break
    if meta.get("schema") != SCHEMA_EPISODE or header != list(EPISODE_COLUMNS):
        raise ValidationError(f"{path}: not a {SCHEMA_EPISODE} episode CSV")
    rows = np.array([[float(c) for c in line.strip().split(",")]
                     for line in lines[data_start:] if line.strip()])
    if rows.ndim != 2 or rows.shape[1] != len(EPISODE_COLUMNS):
        raise ValidationError(f"{path}: wrong column count")
    return EpisodeLog(
        t=rows[:, 0],
        x=rows[:, 1:15],
        z=rows[:, 15:29],
        s=rows[:, 29:33],
        u=rows[:, 33:37],
        tau=rows[:, 37:40],
        reward=rows[:, 40],
        action=rows[:, 41].astype(int),
        gains=rows[:, 42:56],
        V=rows[:, 56],
        r_d=rows[:, 57:60],
        seed=int(meta["seed"]),
        episode_return=float(meta["return"]),
        termination=meta["termination"],
        tf=float(meta["tf"]),
        dt=float(meta["dt"]),
        dwell_steps=int(meta["dwell_steps"]),
    )


def write_training_csv(history, path, seed):
    with open(path, "w") as fh:
        fh.write(f"# schema = {SCHEMA_TRAINING}\n")
        fh.write(f"# seed = {seed}\n")
        fh.write("episode,return,steps,mean_loss,epsilon,switches,termination\n")
        for h in history:
            fh.write(f"{h.episode},{h.episode_return:.17g},{h.steps},"
                     f"{h.mean_loss:.17g},{h.epsilon:.17g},{h.switches},"
                     f"{h.termination}\n")


# ---------------------------------------------------------------------------
# environment


class Environment:
    """Closed-loop simulator over a certified gain library."""

    def __init__(self, cfg, library):
        self.cfg = cfg
        self.library = library
        self.p = cfg.plant
        self.dt = cfg.plant.dt
        self.tf = cfg.traj.tf
        self.duration = cfg.duration
        self.n_steps = int(round(cfg.duration / cfg.plant.dt))
        self.scales = agent_mod.default_observation_scales(cfg.plant)
        self.weights = cfg.reward
        self._r0 = np.asarray(cfg.traj.r0, dtype=float)
        self._disp = np.asarray(cfg.traj.r_star, dtype=float) - self._r0
        self._r_star = np.asarray(cfg.traj.r_star, dtype=float)
        self._beta = ninth_beta if cfg.traj.smoothness == "ninth" else quintic_beta
        self._zero3 = np.zeros(3)

    def initial_state(self):
        """Hover at the reference start (zero tracking error)."""
        x = np.zeros(14)
        x[POS] = self._r0
        return x

    def ref(self, t):
        if t >= self.tf:
            z = self._zero3
            return ReferenceSample(t, self._r_star, z, z, z, z)
        b0, b1, b2, b3, b4 = self._beta(t, self.tf)
        d = self._disp
        return ReferenceSample(t, self._r0 + b0 * d, b1 * d, b2 * d, b3 * d, b4 * d)

    def _deriv(self, x, ct):
        d = np.empty(14)
        d[0:3] = x[3:6]
        d[3:6] = ct.a
        d[6:9] = x[9:12]
        d[9:12] = ct.u[1:4]
        d[12] = x[13]
        d[13] = ct.u[0]
        return d

    def _rhs(self, t, x, k):
        return self._deriv(x, control_terms(x, self.ref(t), k, self.p))

    def step(self, x, t, k, first_ct=None):
        """One RK4 step of the closed loop with the gain frozen.

        first_ct, when given, must be control_terms(x, ref(t), k) and is
        reused as the first stage to avoid recomputation.
        """
        h = self.dt
        k1 = self._deriv(x, first_ct) if first_ct is not None else self._rhs(t, x, k)
        k2 = self._rhs(t + 0.5 * h, x + 0.5 * h * k1, k)
        k3 = self._rhs(t + 0.5 * h, x + 0.5 * h * k2, k)
        k4 = self._rhs(t + h, x + h * k3, k)
        x_next = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        check_blowup(x_next)
        return x_next

    def safety_violation(self, x, t):
        """Violated admissible bound name, or None."""
        ref = self.ref(t)
        if float(np.linalg.norm(x[POS] - ref.pos)) > SAFETY_POS_ERR:
            return "position error bound"
        if abs(x[6]) > SAFETY_TILT or abs(x[7]) > SAFETY_TILT:
            return "attitude bound"
        return None

    def eval_point(self, x, t, k):
        """(control terms, torque, reference) at one instant."""
        ref = self.ref(t)
        ct = control_terms(x, ref, k, self.p)
        tau = recover_torque(x, ct.u[1:4], self.p)
        return ct, tau, ref

    def transition(self, x, t, action, switched):
        """Advance one step for training: (x_next, reward, done, cause).

        The reward is evaluated at the pre-step state with the applied
        input; the failure penalty lands on the transition that exits
        the admissible set or breaks numerically.
        """
        k = self.library.gain(action)
        try:
            ct, tau, ref = self.eval_point(x, t, k)
            rew = agent_mod.reward(x, ref, ct.u, tau, switched, self.weights)
            x_next = self.step(x, t, k, first_ct=ct)
        except (SingularInversion, SingularAttitude, NumericalBlowup) as exc:
            return x, -self.weights.rho_fail, True, type(exc).__name__
        cause = self.safety_violation(x_next, t + self.dt)
        if cause is not None:
            return x_next, rew - self.weights.rho_fail, True, cause
        return x_next, rew, False, "completed"

    def rollout(self, pick_action, seed=0):
        """Full logged episode with per-step action selection."""
        n = self.n_steps
        log = _empty_log(n + 1, self.cfg, seed)
        dwell = agent_mod.DwellState(0, 0)
        x = self.initial_state()
        prev_action = None
        rows = 0
        termination = "completed"
        for i in range(n + 1):
            t = i * self.dt
            action = pick_action(i, x, t, dwell)
            switched = prev_action is not None and action != prev_action
            prev_action = action
            k = self.library.gain(action)
            cert = self.library.entries[action].certificate
            try:
                ct, tau, ref = self.eval_point(x, t, k)
            except (SingularInversion, SingularAttitude) as exc:
                termination = type(exc).__name__
                break
            _fill_row(log, i, t, x, ct, tau, ref, action, k, cert, switched, self.weights)
            rows = i + 1
            if i == n:
                break
            try:
                x = self.step(x, t, k, first_ct=ct)
            except NumericalBlowup:
                termination = "NumericalBlowup"
                log.reward[i] -= self.weights.rho_fail
                break
            cause = self.safety_violation(x, t + self.dt)
            if cause is not None:
                termination = cause
                log.reward[i] -= self.weights.rho_fail
                break
        return _finish_log(log, rows, termination)


def _empty_log(n, cfg, seed):
    return EpisodeLog(
        t=np.zeros(n), x=np.zeros((n, 14)), z=np.zeros((n, 14)),
        s=np.zeros((n, 4)), u=np.zeros((n, 4)), tau=np.zeros((n, 3)),
        reward=np.zeros(n), action=np.zeros(n, dtype=int),
        gains=np.zeros((n, 14)), V=np.zeros(n), r_d=np.zeros((n, 3)),
        seed=seed, tf=cfg.traj.tf, dt=cfg.plant.dt,
        dwell_steps=cfg.agent.dwell_steps,
    )


def _fill_row(log, i, t, x, ct, tau, ref, action, k, cert, switched, weights):
    log.t[i] = t
    log.x[i] = x
    log.z[i] = ct.z
    log.s[i] = ct.s
    log.u[i] = ct.u
    log.tau[i] = tau
    log.reward[i] = agent_mod.reward(x, ref, ct.u, tau, switched, weights)
    log.action[i] = action
    log.gains[i] = k
    log.V[i] = float(ct.z @ cert.P @ ct.z) if cert is not None and cert.P is not None else math.nan
    log.r_d[i] = ref.pos


def _finish_log(log, rows, termination):
    log.t = log.t[:rows]
    log.x = log.x[:rows]
    log.z = log.z[:rows]
    log.s = log.s[:rows]
    log.u = log.u[:rows]
    log.tau = log.tau[:rows]
    log.reward = log.reward[:rows]
    log.action = log.action[:rows]
    log.gains = log.gains[:rows]
    log.V = log.V[:rows]
    log.r_d = log.r_d[:rows]
    log.termination = termination
    log.episode_return = float(log.reward.sum())
    return log


def run_fixed_gain_episode(cfg, k, cert=None, x0=None, margin_override=None,
                           library_index=-1):
    """Simulate the closed loop with one constant gain and log everything.

    The gain must certify Hurwitz; pass margin_override=0.0 to admit a
    barely stable gain outside the library. x0 overrides the zero-error
    initial state (e.g. a state realizing a sampled error). Pass the
    entry's library_index when k comes from a library so the log's
    action column matches it; off-library gains keep the -1 marker.
    """
    k = as_gain_vector(k)
    rbar = snap_sup_norm(cfg.traj)
    if cert is None:
        margin = cfg.cert.margin if margin_override is None else margin_override
        Q = cfg.cert.q_scale * np.eye(14)
        cert = certify(k, rbar, Q=Q, margin=margin)
    if not cert.hurwitz:
        raise ValueError("gain does not certify Hurwitz at the requested margin")

    action = library_index
    env = Environment(cfg, _SingleGain(k, cert))
    n = env.n_steps
    log = _empty_log(n + 1, cfg, cfg.seed)
    x = env.initial_state() if x0 is None else np.asarray(x0, dtype=float).copy()
    rows = 0
    termination = "completed"
    for i in range(n + 1):
        t = i * env.dt
        try:
            ct, tau, ref = env.eval_point(x, t, k)
        except (SingularInversion, SingularAttitude) as exc:
            termination = type(exc).__name__
            break
        _fill_row(log, i, t, x, ct, tau, ref, action, k, cert, False, env.weights)
        rows = i + 1
        if i == n:
            break
        try:
            x = env.step(x, t, k, first_ct=ct)
        except NumericalBlowup:
            termination = "NumericalBlowup"
            log.reward[i] -= env.weights.rho_fail
            break
    return _finish_log(log, rows, termination)


class _SingleGain:
    """Minimal library stand-in for fixed-gain episodes."""

    def __init__(self, k, cert):
        self._k = k
        self._cert = cert

    def __len__(self):
        return 1

    def gain(self, index):
        return self._k

    @property
    def entries(self):
        entry = type("E", (), {"gain": self._k, "certificate": self._cert})
        return [entry]


# ---------------------------------------------------------------------------
# audits


def audit_episode_log(log, library):
    """Shield, dwell and V-consistency audit; returns violation messages."""
    problems = []
    for i in range(len(log)):
        idx = library.match_index(log.gains[i])
        if idx is None:
            problems.append(f"row {i}: applied gain not in the library")
        elif idx != log.action[i]:
            problems.append(f"row {i}: action {log.action[i]} does not match gain entry {idx}")
    changes = np.nonzero(log.action[1:] != log.action[:-1])[0] + 1
    for i in changes:
        if i % log.dwell_steps != 0:
            problems.append(f"row {i}: switch at a non-multiple of dwell_steps")
    for i in range(len(log)):
        a = int(log.action[i])
        if 0 <= a < len(library):
            P = library.entries[a].certificate.P
            v = float(log.z[i] @ P @ log.z[i])
            if abs(v - log.V[i]) > 1e-9 * max(1.0, abs(v)):
                problems.append(f"row {i}: V column inconsistent with z and P")
    return problems


def audit_episode_csv(path, library):
    return audit_episode_log(read_episode_csv(path), library)


# ---------------------------------------------------------------------------
# empirical invariance probe


def sample_error_state(P, rho, rng):
    """Random error state with V(z) = u * rho, u uniform on [0, 1]."""
    y = rng.standard_normal(14)
    level = rho * rng.uniform()
    return y * math.sqrt(level / float(y @ P @ y))


def invariance_probe(cfg, entry_index, n_samples=20, seed=0, library=None):
    """Empirically check the certificate of one library entry.

    Simulates full episodes from n_samples random initial errors with
    V(z0) <= rho_adm (redrawn when the flat map cannot realize them) and
    reports the worst excess of V over max(V(z0), rho_star), the worst
    post-tf monotonicity violation (relative), and any guard trips. The
    V trace reuses each step's first stage, so the probe costs exactly
    one closed-loop simulation per sample.
    """
    from .controller import realize_error_state

    if library is None:
        library = build_library_from_config(cfg)
    entry = library.entries[entry_index]
    cert = entry.certificate
    env = Environment(cfg, library)
    rng = np.random.default_rng(seed)

    worst_excess = -math.inf
    worst_mono = -math.inf
    failures = []
    for _ in range(n_samples):
        while True:
            z0 = sample_error_state(cert.P, cfg.cert.rho_adm, rng)
            try:
                x = realize_error_state(z0, env.ref(0.0), cfg.plant)
                break
            except (SingularInversion, SingularAttitude):
                continue
        cap = max(float(z0 @ cert.P @ z0), cert.rho_star)
        V_prev = None
        for i in range(env.n_steps + 1):
            t = i * env.dt
            try:
                ct = control_terms(x, env.ref(t), entry.gain, cfg.plant)
                V = float(ct.z @ cert.P @ ct.z)
                if i < env.n_steps:
                    x = env.step(x, t, entry.gain, first_ct=ct)
            except (SingularInversion, SingularAttitude, NumericalBlowup) as exc:
                failures.append(f"sample failed at t={t:.2f}: {type(exc).__name__}")
                break
            worst_excess = max(worst_excess, V - cap)
            if t > env.tf and V_prev is not None:
                worst_mono = max(worst_mono, V - V_prev * (1.0 + 1e-9))
            V_prev = V if t >= env.tf else None
    return {
        "entry": entry_index,
        "rho_star": cert.rho_star,
        "worst_excess": worst_excess,
        "worst_post_tf_violation": worst_mono,
        "failures": failures,
    }
