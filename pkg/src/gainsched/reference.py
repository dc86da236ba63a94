"""Point-to-point reference trajectory with derivatives through snap.

The position reference blends the start and target positions with a
monotone time-scaling beta(t/Tf) and is held at the target afterward,
with all derivatives zeroed. The default quintic scaling matches the
stated method; it is C^2 at t = Tf (its third and fourth derivatives
jump to zero there). A ninth-order scaling with vanishing derivatives
through snap at both ends is available for true C^4 joins.
"""

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TrajectoryConfig:
    r0: tuple = (0.0, 0.0, 0.0)       # start position [m]
    r_star: tuple = (1.0, 1.0, 1.0)   # hover target [m]
    tf: float = 5.0                   # transition time [s]
    smoothness: str = "quintic"       # "quintic" | "ninth"

    def __post_init__(self):
        if self.tf <= 0.0:
            raise ValueError("tf must be positive")
        if self.smoothness not in ("quintic", "ninth"):
            raise ValueError("smoothness must be 'quintic' or 'ninth'")


@dataclass(frozen=True)
class ReferenceSample:
    t: float
    pos: np.ndarray
    vel: np.ndarray
    acc: np.ndarray
    jerk: np.ndarray
    snap: np.ndarray


def quintic_beta(t, tf):
    """beta(tau) = 10 tau^3 - 15 tau^4 + 6 tau^5 and time-derivatives 1..4.

    beta(0) = 0, beta(tf) = 1, first and second derivatives vanish at both
    endpoints; the third and fourth do not.
    """
    tau = t / tf
    b0 = tau * tau * tau * (10.0 + tau * (-15.0 + 6.0 * tau))
    b1 = tau * tau * (30.0 + tau * (-60.0 + 30.0 * tau)) / tf
    b2 = tau * (60.0 + tau * (-180.0 + 120.0 * tau)) / tf**2
    b3 = (60.0 + tau * (-360.0 + 360.0 * tau)) / tf**3
    b4 = (-360.0 + 720.0 * tau) / tf**4
    return b0, b1, b2, b3, b4


def ninth_beta(t, tf):
    """Ninth-order scaling with derivatives 1..4 vanishing at both endpoints.

    beta(tau) = 126 tau^5 - 420 tau^6 + 540 tau^7 - 315 tau^8 + 70 tau^9,
    equivalently beta'(tau) = 630 tau^4 (1 - tau)^4 / tf.
    """
    tau = t / tf
    b0 = tau**5 * (126.0 + tau * (-420.0 + tau * (540.0 + tau * (-315.0 + 70.0 * tau))))
    b1 = tau**4 * (630.0 + tau * (-2520.0 + tau * (3780.0 + tau * (-2520.0 + 630.0 * tau)))) / tf
    b2 = tau**3 * (2520.0 + tau * (-12600.0 + tau * (22680.0 + tau * (-17640.0 + 5040.0 * tau)))) / tf**2
    b3 = tau**2 * (7560.0 + tau * (-50400.0 + tau * (113400.0 + tau * (-105840.0 + 35280.0 * tau)))) / tf**3
    b4 = tau * (15120.0 + tau * (-151200.0 + tau * (453600.0 + tau * (-529200.0 + 211680.0 * tau)))) / tf**4
    return b0, b1, b2, b3, b4


def _beta(t, cfg):
    if cfg.smoothness == "ninth":
        return ninth_beta(t, cfg.tf)
    return quintic_beta(t, cfg.tf)


def sample(t, cfg):
    """Reference position through snap at time t; held at r_star past tf."""
    r0 = np.asarray(cfg.r0, dtype=float)
    r_star = np.asarray(cfg.r_star, dtype=float)
    if t >= cfg.tf:
        zero = np.zeros(3)
        return ReferenceSample(t, r_star.copy(), zero, zero.copy(), zero.copy(), zero.copy())
    d = r_star - r0
    b0, b1, b2, b3, b4 = _beta(t, cfg)
    return ReferenceSample(t, r0 + b0 * d, b1 * d, b2 * d, b3 * d, b4 * d)


def snap_sup_norm(cfg):
    """sup over t of ||r_d^(4)(t)||, the disturbance bound on the error dynamics.

    For the quintic scaling |beta''''| peaks at the endpoints with value
    360/tf^4, so the bound is (360/tf^4) ||r_star - r0||. The ninth-order
    peak is interior and located numerically.
    """
    d = float(np.linalg.norm(np.asarray(cfg.r_star, dtype=float) - np.asarray(cfg.r0, dtype=float)))
    if cfg.smoothness == "quintic":
        return 360.0 / cfg.tf**4 * d
    # |beta''''| for the ninth-order scaling, maximized on a fine grid with
    # local golden-section refinement
    def b4mag(t):
        return abs(ninth_beta(t, cfg.tf)[4])
    ts = np.linspace(0.0, cfg.tf, 4097)
    i = int(np.argmax([b4mag(t) for t in ts]))
    lo = ts[max(i - 1, 0)]
    hi = ts[min(i + 1, len(ts) - 1)]
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c1 = b - invphi * (b - a)
    c2 = a + invphi * (b - a)
    for _ in range(80):
        if b4mag(c1) < b4mag(c2):
            a = c1
            c1, c2 = c2, a + invphi * (b - a)
        else:
            b = c2
            c2, c1 = c1, b - invphi * (b - a)
    return b4mag(0.5 * (a + b)) * d
