"""Nonlinear quadrotor plant: 14-state rigid-body model and RK4 stepping.

State layout (index constants below):
    x = [r(3), v(3), eta(3), eta_dot(3), T, T_dot]
with r, v the inertial position/velocity, eta = (phi, theta, psi) the ZYX
Euler angles, T the thrust deviation from hover and T_dot its rate.

Input layout:
    u = [u_T, phi_dd, theta_dd, psi_dd]
i.e. thrust snap command followed by Euler angular accelerations.

The rotational channel is simulated as the double integrator
eta_dd = u_eta; the body torque tau = I*w_dot + w x (I*w) is recovered
kinematically for diagnostics and the reward (recover_torque).
"""

import math
from dataclasses import dataclass

import numpy as np

# state slices
POS = slice(0, 3)
VEL = slice(3, 6)
ETA = slice(6, 9)
ETA_DOT = slice(9, 12)
THRUST = 12
THRUST_DOT = 13

E3 = np.array([0.0, 0.0, 1.0])

# pitch must stay this far away from +-pi/2 (keeps E, E^-1 well conditioned)
THETA_GUARD = 0.2

# any state component beyond this (or non-finite) counts as numerical blowup
BLOWUP_LIMIT = 1.0e6


class SingularAttitude(Exception):
    """Pitch angle inside the guard band around +-pi/2."""


class NumericalBlowup(Exception):
    """Integration produced a non-finite or absurdly large state."""


@dataclass(frozen=True)
class PlantParams:
    m: float = 1.5            # mass [kg]
    g: float = 9.81           # gravity [m/s^2]
    inertia: tuple = (0.02, 0.02, 0.04)  # diagonal body inertia [kg m^2]
    dt: float = 0.01          # sampling period [s]

    def __post_init__(self):
        if self.m <= 0.0:
            raise ValueError("m must be positive")
        if self.g <= 0.0:
            raise ValueError("g must be positive")
        if len(self.inertia) != 3 or any(i <= 0.0 for i in self.inertia):
            raise ValueError("inertia must be three positive entries")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")

    @property
    def hover_thrust(self):
        return self.m * self.g


def hover_state():
    """Hover equilibrium at the origin (all states zero)."""
    return np.zeros(14)


def check_pitch(theta):
    if abs(theta) >= math.pi / 2 - THETA_GUARD:
        raise SingularAttitude(f"pitch {theta:.3f} rad inside singularity guard")


def rotation_matrix(eta):
    """Body-to-inertial rotation, ZYX convention: R = Rz(psi) Ry(theta) Rx(phi)."""
    phi, theta, psi = eta
    sf, cf = math.sin(phi), math.cos(phi)
    st, ct = math.sin(theta), math.cos(theta)
    ss, cs = math.sin(psi), math.cos(psi)
    return np.array([
        [cs * ct, cs * st * sf - ss * cf, cs * st * cf + ss * sf],
        [ss * ct, ss * st * sf + cs * cf, ss * st * cf - cs * sf],
        [-st, ct * sf, ct * cf],
    ])


def euler_rate_matrix(phi, theta):
    """Return (E, E_inv) with eta_dot = E w for ZYX angles.

    Raises SingularAttitude when theta is inside the guard band, where
    tan(theta) blows up.
    """
    check_pitch(theta)
    sf, cf = math.sin(phi), math.cos(phi)
    st, ct = math.sin(theta), math.cos(theta)
    tt = st / ct
    E = np.array([
        [1.0, sf * tt, cf * tt],
        [0.0, cf, -sf],
        [0.0, sf / ct, cf / ct],
    ])
    E_inv = np.array([
        [1.0, 0.0, -st],
        [0.0, cf, sf * ct],
        [0.0, -sf, cf * ct],
    ])
    return E, E_inv


def thrust_axis_derivatives(eta):
    """Thrust direction b = R(eta) e3 with its first and second eta-derivatives.

    Returns (b, B, H) where B[:, j] = db/deta_j and H is a 3-tuple of
    symmetric 3x3 Hessians, H[i][l, m] = d^2 b_i / (deta_l deta_m).
    Closed forms from differentiating Rz Ry Rx e3; the chain rule with
    (eta_dot, eta_dd) then gives d/dt (R e3) and d^2/dt^2 (R e3).
    """
    phi, theta, psi = eta
    sf, cf = math.sin(phi), math.cos(phi)
    st, ct = math.sin(theta), math.cos(theta)
    ss, cs = math.sin(psi), math.cos(psi)

    b0 = cs * st * cf + ss * sf
    b1 = ss * st * cf - cs * sf
    b2 = ct * cf
    b = np.array([b0, b1, b2])

    # columns: d/dphi, d/dtheta, d/dpsi
    B = np.array([
        [-cs * st * sf + ss * cf, cs * ct * cf, -b1],
        [-ss * st * sf - cs * cf, ss * ct * cf, b0],
        [-ct * sf, -st * cf, 0.0],
    ])

    H0 = np.array([
        [-b0, -cs * ct * sf, ss * st * sf + cs * cf],
        [-cs * ct * sf, -cs * st * cf, -ss * ct * cf],
        [ss * st * sf + cs * cf, -ss * ct * cf, -b0],
    ])
    H1 = np.array([
        [-b1, -ss * ct * sf, -cs * st * sf + ss * cf],
        [-ss * ct * sf, -ss * st * cf, cs * ct * cf],
        [-cs * st * sf + ss * cf, cs * ct * cf, -b1],
    ])
    H2 = np.array([
        [-b2, st * sf, 0.0],
        [st * sf, -b2, 0.0],
        [0.0, 0.0, 0.0],
    ])
    return b, B, (H0, H1, H2)


def state_derivative(x, u, p):
    """Control-affine plant dynamics x_dot = f0(x) + G0(x) u."""
    b = thrust_axis_derivatives(x[ETA])[0]
    d = np.empty(14)
    d[POS] = x[VEL]
    d[VEL] = -p.g * E3 + ((p.m * p.g + x[THRUST]) / p.m) * b
    d[ETA] = x[ETA_DOT]
    d[ETA_DOT] = u[1:4]
    d[THRUST] = x[THRUST_DOT]
    d[THRUST_DOT] = u[0]
    return d


def rk4(f, t, y, dt):
    """One classical Runge-Kutta step for y_dot = f(t, y)."""
    k1 = f(t, y)
    k2 = f(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = f(t + dt, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def check_blowup(x):
    if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > BLOWUP_LIMIT:
        raise NumericalBlowup("state left the numerically sane region")


def rk4_step(x, u, p):
    """Advance the plant one sampling period with u held constant (ZOH)."""
    x_next = rk4(lambda t, y: state_derivative(y, u, p), 0.0, x, p.dt)
    check_blowup(x_next)
    return x_next


def recover_torque(x, u_eta, p):
    """Body torque consistent with the Euler-coordinate acceleration input.

    Uses w = E^-1(phi, theta) eta_dot and differentiates analytically,
    w_dot = d(E^-1)/dt eta_dot + E^-1 eta_dd with eta_dd = u_eta, then
    tau = I w_dot + w x (I w).
    """
    phi, theta = x[6], x[7]
    check_pitch(theta)
    sf, cf = math.sin(phi), math.cos(phi)
    st, ct = math.sin(theta), math.cos(theta)
    eta_dot = x[ETA_DOT]
    phi_dot, theta_dot = eta_dot[0], eta_dot[1]

    W = np.array([
        [1.0, 0.0, -st],
        [0.0, cf, sf * ct],
        [0.0, -sf, cf * ct],
    ])
    dW_dphi = np.array([
        [0.0, 0.0, 0.0],
        [0.0, -sf, cf * ct],
        [0.0, -cf, -sf * ct],
    ])
    dW_dtheta = np.array([
        [0.0, 0.0, -ct],
        [0.0, 0.0, -sf * st],
        [0.0, 0.0, -cf * st],
    ])
    W_dot = dW_dphi * phi_dot + dW_dtheta * theta_dot

    w = W @ eta_dot
    w_dot = W_dot @ eta_dot + W @ np.asarray(u_eta, dtype=float)
    inertia = np.asarray(p.inertia)
    return inertia * w_dot + np.cross(w, inertia * w)
