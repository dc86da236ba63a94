"""Figure rendering over gainsched episode CSVs.

Consumes only the documented episode-v1 CSV schema; nothing is
recomputed from dynamics, every plotted series is a CSV column. Output
is vector SVG with a fixed hash salt so repeated renders are
byte-identical.
"""

from dataclasses import dataclass

import matplotlib
import numpy as np

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "gainsched-figures"

import matplotlib.pyplot as plt  # noqa: E402

SCHEMA = "episode-v1"

FIGURE_IDS = ("gains", "errors", "position", "euler", "controls", "reward")

EXPECTED_COLUMNS = (
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

_SAVE_KW = {"format": "svg", "metadata": {"Date": None}}


class SchemaMismatch(Exception):
    """The CSV is not a well-formed episode-v1 file."""


@dataclass(frozen=True)
class FigureSpec:
    episode_csv: str
    figure_id: str
    out_path: str

    def __post_init__(self):
        if self.figure_id not in FIGURE_IDS:
            raise ValueError(f"unknown figure id {self.figure_id!r}; "
                             f"expected one of {FIGURE_IDS}")


class Episode:
    """Column-addressable episode data plus metadata."""

    def __init__(self, meta, columns, data):
        self.meta = meta
        self._index = {name: i for i, name in enumerate(columns)}
        self._data = data
        self.tf = float(meta["tf"])
        self.t = self["t"]

    def __getitem__(self, name):
        return self._data[:, self._index[name]]

    def stack(self, names):
        return np.column_stack([self[n] for n in names])


def load_episode(path):
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise FileNotFoundError(f"episode CSV not found: {path}") from exc
    meta = {}
    header = None
    start = 0
    for i, line in enumerate(lines):
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            meta[key.strip()] = value.strip()
        else:
            header = line.strip().split(",")
            start = i + 1
            break
    if meta.get("schema") != SCHEMA:
        raise SchemaMismatch(f"{path}: schema marker is {meta.get('schema')!r}, "
                             f"expected {SCHEMA!r}")
    if header != EXPECTED_COLUMNS:
        raise SchemaMismatch(f"{path}: header does not match the {SCHEMA} column list")
    if "tf" not in meta or "dt" not in meta:
        raise SchemaMismatch(f"{path}: missing tf/dt metadata")
    rows = []
    for ln, line in enumerate(lines[start:], start=start + 1):
        if not line.strip():
            continue
        cells = line.strip().split(",")
        if len(cells) != len(EXPECTED_COLUMNS):
            raise SchemaMismatch(f"{path}:{ln}: row has {len(cells)} cells, "
                                 f"expected {len(EXPECTED_COLUMNS)}")
        try:
            rows.append([float(c) for c in cells])
        except ValueError as exc:
            raise SchemaMismatch(f"{path}:{ln}: non-numeric cell") from exc
    if not rows:
        raise SchemaMismatch(f"{path}: no data rows")
    return Episode(meta, EXPECTED_COLUMNS, np.array(rows))


def _fig_gains(ep, ax):
    for col, label in (("k1", "jerk gain k1"), ("k4", "accel gain k4"),
                       ("k7", "velocity gain k7"), ("k10", "position gain k10")):
        ax.step(ep.t, ep[col], where="post", label=label)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("gain")
    ax.set_title("Selected translational gains (tied across axes)")
    ax.legend(loc="best", fontsize=8)
    return {}


def _fig_errors(ep, fig):
    groups = [
        (("er_x", "er_y", "er_z"), "position error [m]"),
        (("ev_x", "ev_y", "ev_z"), "velocity error [m/s]"),
        (("ea_x", "ea_y", "ea_z"), "acceleration error [m/s$^2$]"),
        (("ej_x", "ej_y", "ej_z"), "jerk error [m/s$^3$]"),
        (("e_psi", "e_psi_dot"), "yaw channel [rad, rad/s]"),
    ]
    axes = fig.subplots(3, 2).ravel()
    for ax, (cols, ylabel) in zip(axes, groups):
        for c in cols:
            ax.plot(ep.t, ep[c], label=c, linewidth=0.9)
        ax.set_ylabel(ylabel, fontsize=8)
        ax.legend(fontsize=6, loc="best")
    for ax in axes[len(groups):]:
        ax.axis("off")
    axes[4].set_xlabel("t [s]")
    fig.suptitle("Tracking-error state")
    return {}


def _fig_position(ep, ax):
    meta = {"tf_marker": ep.tf}
    for axis, (col, ref) in enumerate((("rx", "rd_x"), ("ry", "rd_y"), ("rz", "rd_z"))):
        line, = ax.plot(ep.t, ep[col], label=f"r_{'xyz'[axis]}")
        ax.plot(ep.t, ep[ref], linestyle="--", color=line.get_color(),
                linewidth=0.8, label=f"r_d,{'xyz'[axis]}")
    ax.axvline(ep.tf, linestyle=":", color="k", linewidth=1.2)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("position [m]")
    ax.set_title("Inertial position vs desired (dotted: transition end)")
    ax.legend(fontsize=7, ncol=2)
    return meta


def _fig_euler(ep, ax):
    for col, label in (("phi", r"$\phi$"), ("theta", r"$\theta$"), ("psi", r"$\psi$")):
        ax.plot(ep.t, ep[col], label=label)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("angle [rad]")
    ax.set_title("Euler angles")
    ax.legend()
    return {}


def _fig_controls(ep, fig):
    ax1, ax2 = fig.subplots(2, 1, sharex=True)
    ax1.plot(ep.t, ep["u_T"], color="C0")
    ax1.set_ylabel(r"$\ddot{T}$ command [N/s$^2$]")
    for col, label in (("tau_x", r"$\tau_x$"), ("tau_y", r"$\tau_y$"), ("tau_z", r"$\tau_z$")):
        ax2.plot(ep.t, ep[col], label=label, linewidth=0.9)
    ax2.set_ylabel("torque [N m]")
    ax2.set_xlabel("t [s]")
    ax2.legend(fontsize=8)
    fig.suptitle("Control inputs")
    return {}


def _fig_reward(ep, ax):
    ax.plot(ep.t, ep["reward"], linewidth=0.9)
    window = (ep.t >= ep.t[-1] - 2.0)
    mean_last = float(ep["reward"][window].mean())
    ax.axhline(mean_last, linestyle="--", color="C3", linewidth=0.8)
    ax.annotate(f"mean, final 2 s: {mean_last:.12g}",
                xy=(0.98, 0.05), xycoords="axes fraction",
                ha="right", fontsize=8, color="C3")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("reward per step")
    ax.set_title("Per-step reward")
    return {"annotation_mean": mean_last}


def render(spec):
    """Render one figure to SVG; returns metadata about what was drawn."""
    ep = load_episode(spec.episode_csv)
    single_axis = {"gains": _fig_gains, "position": _fig_position,
                   "euler": _fig_euler, "reward": _fig_reward}
    fig = plt.figure(figsize=(7.0, 4.4) if spec.figure_id != "errors" else (8.0, 6.0))
    try:
        if spec.figure_id in single_axis:
            meta = single_axis[spec.figure_id](ep, fig.subplots())
        elif spec.figure_id == "errors":
            meta = _fig_errors(ep, fig)
        else:
            meta = _fig_controls(ep, fig)
        fig.savefig(spec.out_path, **_SAVE_KW)
    finally:
        plt.close(fig)
    meta.update({"figure_id": spec.figure_id, "out_path": spec.out_path,
                 "rows": len(ep.t)})
    return meta


def render_all(episode_csv, out_dir, only=None):
    """Render every known figure (or a single id) into out_dir."""
    import os

    ids = [only] if only else list(FIGURE_IDS)
    os.makedirs(out_dir, exist_ok=True)
    results = []
    for fid in ids:
        spec = FigureSpec(episode_csv, fid, os.path.join(out_dir, f"{fid}.svg"))
        results.append(render(spec))
    return results
