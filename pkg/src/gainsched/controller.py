"""Snap-based tracking controller via exact nonlinear inversion.

The flat outputs (position, yaw) make the plant exactly linearizable at
the snap level: differentiating the translational dynamics twice gives

    snap = (u_T / m) b + 2 (T_dot / m) db/dt + ((m g + T) / m) d2b/dt2

with b = R(eta) e3, which is affine in the physical input u through
db/dt, d2b/dt2 (chain rule in eta with eta_dd = u_eta). Collecting the
input-dependent part as M(x) u and the rest as n(x) yields s = M u + n,
inverted as u = M^-1 (s - n). The external input s stacks the commanded
snap with the commanded yaw acceleration and is produced by a diagonal
gain law on the tracking-error state z.

Error-state layout: z = [e_r(3), e_v(3), e_a(3), e_j(3), psi, psi_dot].
Gain layout: k = [K_j diag(1..3), K_a(4..6), K_v(7..9), K_p(10..12),
k13 (yaw rate), k14 (yaw)].
"""

import math
from typing import NamedTuple

import numpy as np

from .plant import (
    E3,
    ETA,
    ETA_DOT,
    POS,
    THRUST,
    THRUST_DOT,
    VEL,
    check_pitch,
    thrust_axis_derivatives,
)

# slices into z
ERR_POS = slice(0, 3)
ERR_VEL = slice(3, 6)
ERR_ACC = slice(6, 9)
ERR_JERK = slice(9, 12)
ERR_PSI = 12
ERR_PSI_DOT = 13

# total thrust must stay above this fraction of hover thrust
EPS_THRUST_FRAC = 0.1

# reject the inversion when cond(M) exceeds this
COND_LIMIT = 1.0e8


class SingularInversion(Exception):
    """M(x) is ill-conditioned or the thrust direction lost authority."""


class FlatKinematics(NamedTuple):
    a: np.ndarray   # acceleration implied by the state [m/s^2]
    j: np.ndarray   # jerk implied by the state [m/s^3]


class InversionTerms(NamedTuple):
    M: np.ndarray   # 4x4, input-dependent part of [snap; psi_dd]
    n: np.ndarray   # 4, drift part


def as_gain_vector(values):
    """Validate and return a 14-entry positive gain vector."""
    k = np.asarray(values, dtype=float)
    if k.shape != (14,):
        raise ValueError(f"gain vector must have 14 entries, got shape {k.shape}")
    if not np.all(k > 0.0):
        raise ValueError("gain entries must all be positive")
    return k


def flat_kinematics(x, p):
    """Acceleration and jerk of the flat output implied by the state."""
    check_pitch(x[7])
    b, B, _ = thrust_axis_derivatives(x[ETA])
    thr = (p.m * p.g + x[THRUST]) / p.m
    a = -p.g * E3 + thr * b
    j = (x[THRUST_DOT] / p.m) * b + thr * (B @ x[ETA_DOT])
    return FlatKinematics(a, j)


def error_state(x, ref, p):
    """Tracking-error state z at the reference sample's instant."""
    a, j = flat_kinematics(x, p)
    z = np.empty(14)
    z[ERR_POS] = x[POS] - ref.pos
    z[ERR_VEL] = x[VEL] - ref.vel
    z[ERR_ACC] = a - ref.acc
    z[ERR_JERK] = j - ref.jerk
    z[ERR_PSI] = x[8]
    z[ERR_PSI_DOT] = x[11]
    return z


def external_feedback(z, k):
    """Gain-parameterized external input s = [s_r; s_psi].

    s_r = -K_j e_j - K_a e_a - K_v e_v - K_p e_r with diagonal gain
    blocks; s_psi = -k13 psi_dot - k14 psi.
    """
    s = np.empty(4)
    s[0:3] = -(k[0:3] * z[ERR_JERK] + k[3:6] * z[ERR_ACC]
               + k[6:9] * z[ERR_VEL] + k[9:12] * z[ERR_POS])
    s[3] = -k[12] * z[ERR_PSI_DOT] - k[13] * z[ERR_PSI]
    return s


def gain_regressor(z):
    """4x14 matrix H with H @ k == external_feedback(z, k) for every k."""
    H = np.zeros((4, 14))
    for ax in range(3):
        H[ax, ax] = -z[ERR_JERK][ax]
        H[ax, 3 + ax] = -z[ERR_ACC][ax]
        H[ax, 6 + ax] = -z[ERR_VEL][ax]
        H[ax, 9 + ax] = -z[ERR_POS][ax]
    H[3, 12] = -z[ERR_PSI_DOT]
    H[3, 13] = -z[ERR_PSI]
    return H


def _inversion_parts(x, p):
    """M, n plus the flat kinematics, in scalar form for the hot path.

    Same closed forms as thrust_axis_derivatives (a consistency test pins
    the two paths together); spelled out component-wise because this runs
    at every RK4 stage of every simulated step.
    """
    phi, theta, psi = x[6], x[7], x[8]
    ed0, ed1, ed2 = x[9], x[10], x[11]
    T, T_dot = x[12], x[13]
    sf, cf = math.sin(phi), math.cos(phi)
    st, ct = math.sin(theta), math.cos(theta)
    ss, cs = math.sin(psi), math.cos(psi)

    b0 = cs * st * cf + ss * sf
    b1 = ss * st * cf - cs * sf
    b2 = ct * cf
    # Jacobian of b wrt (phi, theta, psi)
    B00 = -cs * st * sf + ss * cf
    B01 = cs * ct * cf
    B02 = -b1
    B10 = -ss * st * sf - cs * cf
    B11 = ss * ct * cf
    B12 = b0
    B20 = -ct * sf
    B21 = -st * cf
    # Hessian quadratic forms h_i = eta_dot^T H_i eta_dot
    h0 = (-b0) * (ed0 * ed0 + ed2 * ed2) + (-cs * st * cf) * ed1 * ed1 + 2.0 * (
        (-cs * ct * sf) * ed0 * ed1 + (ss * st * sf + cs * cf) * ed0 * ed2
        + (-ss * ct * cf) * ed1 * ed2)
    h1 = (-b1) * (ed0 * ed0 + ed2 * ed2) + (-ss * st * cf) * ed1 * ed1 + 2.0 * (
        (-ss * ct * sf) * ed0 * ed1 + (-cs * st * sf + ss * cf) * ed0 * ed2
        + (cs * ct * cf) * ed1 * ed2)
    h2 = (-b2) * (ed0 * ed0 + ed1 * ed1) + 2.0 * (st * sf) * ed0 * ed1

    m = p.m
    thr = (m * p.g + T) / m
    td_m = T_dot / m
    Be0 = B00 * ed0 + B01 * ed1 + B02 * ed2
    Be1 = B10 * ed0 + B11 * ed1 + B12 * ed2
    Be2 = B20 * ed0 + B21 * ed1

    a = np.array((thr * b0, thr * b1, thr * b2 - p.g))
    j = np.array((td_m * b0 + thr * Be0, td_m * b1 + thr * Be1, td_m * b2 + thr * Be2))
    M = np.array((
        (b0 / m, thr * B00, thr * B01, thr * B02),
        (b1 / m, thr * B10, thr * B11, thr * B12),
        (b2 / m, thr * B20, thr * B21, 0.0),
        (0.0, 0.0, 0.0, 1.0),
    ))
    # d2b/dt2 = (eta_dot^T H_i eta_dot)_i + B eta_dd; the quadratic form
    # joins the drift n, the B eta_dd part lives in M
    n = np.array((
        2.0 * td_m * Be0 + thr * h0,
        2.0 * td_m * Be1 + thr * h1,
        2.0 * td_m * Be2 + thr * h2,
        0.0,
    ))
    return M, n, a, j


def inversion_terms(x, p):
    """State-dependent pair (M, n) with s = M u + n.

    Input ordering (u_T, phi_dd, theta_dd, psi_dd); output ordering
    (s_x, s_y, s_z, s_psi). Raises SingularInversion when total thrust
    drops to the guard or M is ill-conditioned.
    """
    check_pitch(x[7])
    if p.m * p.g + x[THRUST] <= EPS_THRUST_FRAC * p.m * p.g:
        raise SingularInversion("total thrust at or below the authority guard")
    M, n, _, _ = _inversion_parts(x, p)
    if np.linalg.cond(M) > COND_LIMIT:
        raise SingularInversion("cond(M) exceeds limit")
    return InversionTerms(M, n)


_RHS_TEMPLATE = np.hstack((np.zeros((4, 1)), np.eye(4)))


def invert_external(M, n, s):
    """Solve M u = s - n by a dense linear solve with condition monitoring."""
    # one LAPACK call yields both the solution and M^-1 for the estimate
    block = _RHS_TEMPLATE.copy()
    block[:, 0] = s - n
    try:
        sol = np.linalg.solve(M, block)
    except np.linalg.LinAlgError as exc:
        raise SingularInversion("M is singular") from exc
    M_inv = sol[:, 1:]
    cond_est = math.sqrt(float((M * M).sum()) * float((M_inv * M_inv).sum()))
    if not cond_est < COND_LIMIT:
        raise SingularInversion("cond(M) exceeds limit")
    return sol[:, 0]


class ControlTerms(NamedTuple):
    u: np.ndarray
    s: np.ndarray
    z: np.ndarray
    a: np.ndarray
    j: np.ndarray
    M: np.ndarray
    n: np.ndarray


def control_terms(x, ref, k, p):
    """Everything the closed loop and the logs need, computed once."""
    check_pitch(x[7])
    if p.m * p.g + x[THRUST] <= EPS_THRUST_FRAC * p.m * p.g:
        raise SingularInversion("total thrust at or below the authority guard")
    M, n, a, j = _inversion_parts(x, p)
    z = np.empty(14)
    z[ERR_POS] = x[POS] - ref.pos
    z[ERR_VEL] = x[VEL] - ref.vel
    z[ERR_ACC] = a - ref.acc
    z[ERR_JERK] = j - ref.jerk
    z[ERR_PSI] = x[8]
    z[ERR_PSI_DOT] = x[11]
    s = external_feedback(z, k)
    u = invert_external(M, n, s)
    return ControlTerms(u, s, z, a, j, M, n)


def control(x, ref, k, p):
    """Physical input u = M^-1 (s - n) realizing the external feedback law."""
    return control_terms(x, ref, k, p).u


def realize_error_state(z, ref, p):
    """Invert the flat map: build the plant state exhibiting error z at ref.

    Used to seed simulations at prescribed error states. Raises
    SingularAttitude / SingularInversion when the requested errors are not
    realizable inside the guards.
    """
    a = ref.acc + z[ERR_ACC]
    j = ref.jerk + z[ERR_JERK]
    psi = z[ERR_PSI]
    psi_dot = z[ERR_PSI_DOT]

    w = a + p.g * E3
    nw = float(np.linalg.norm(w))
    T = p.m * nw - p.m * p.g
    if p.m * p.g + T <= EPS_THRUST_FRAC * p.m * p.g:
        raise SingularInversion("requested acceleration needs thrust below guard")
    b_des = w / nw
    sp, cp = math.sin(psi), math.cos(psi)
    phi = math.asin(min(1.0, max(-1.0, sp * b_des[0] - cp * b_des[1])))
    theta = math.atan2(cp * b_des[0] + sp * b_des[1], b_des[2])
    check_pitch(theta)

    eta = np.array([phi, theta, psi])
    b, B, _ = thrust_axis_derivatives(eta)
    thr = (p.m * p.g + T) / p.m
    # jerk relation: j = (T_dot/m) b + thr * B @ eta_dot, psi_dot known
    A = np.column_stack((b / p.m, thr * B[:, 0], thr * B[:, 1]))
    rhs = j - thr * B[:, 2] * psi_dot
    try:
        T_dot, phi_dot, theta_dot = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularInversion("jerk relation is singular at the requested state") from exc

    x = np.empty(14)
    x[POS] = ref.pos + z[ERR_POS]
    x[VEL] = ref.vel + z[ERR_VEL]
    x[ETA] = eta
    x[ETA_DOT] = (phi_dot, theta_dot, psi_dot)
    x[THRUST] = T
    x[THRUST_DOT] = T_dot
    return x
