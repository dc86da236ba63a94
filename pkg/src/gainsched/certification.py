"""Stability certification and the finite admissible gain library.

The tracking-error dynamics are linear,

    z_dot = A_ext z + B_ext s + E_ext r_d^(4)(t),

and the diagonal gain law closes them as A_cl(k) = A_ext - B_ext K(k),
which splits into three single-axis quartic chains (characteristic
polynomial s^4 + k_j s^3 + k_a s^2 + k_v s + k_p) and a yaw quadratic
(s^2 + k13 s + k14). A gain is certified by checking A_cl Hurwitz,
solving the Lyapunov equation A_cl^T P + P A_cl = -Q for P > 0, and
computing the invariance level

    alpha = lambda_min(Q),  c = 2 ||P E_ext||,
    R = (c / alpha) rbar,   rho_star = lambda_max(P) R^2,

so every sublevel set {V = z^T P z <= rho} with rho >= rho_star is
forward invariant under the snap-bounded reference (bound rbar).

The library discretizes the componentwise gain bounds with translational
gains tied across axes (a single scale lambda for indices 1..12) and the
yaw pair scheduled separately (scale mu for indices 13..14).
"""

from dataclasses import dataclass
from importlib import resources
from typing import NamedTuple, Optional

import numpy as np

from .controller import as_gain_vector


class NotHurwitz(Exception):
    """Lyapunov solve requested for a matrix that is not Hurwitz."""


class EigenFailure(Exception):
    """The eigenvalue solver did not converge."""


class EmptyLibrary(Exception):
    """No candidate on the gain grid certified."""


class ExternalSystem(NamedTuple):
    A_ext: np.ndarray   # 14x14
    B_ext: np.ndarray   # 14x4
    E_ext: np.ndarray   # 14x3


def external_system():
    """Constant matrices of the external (tracking-error) dynamics."""
    A = np.zeros((14, 14))
    A[0:3, 3:6] = np.eye(3)
    A[3:6, 6:9] = np.eye(3)
    A[6:9, 9:12] = np.eye(3)
    A[12, 13] = 1.0
    B = np.zeros((14, 4))
    B[9:12, 0:3] = np.eye(3)
    B[13, 3] = 1.0
    E = np.zeros((14, 3))
    E[9:12, 0:3] = -np.eye(3)
    return ExternalSystem(A, B, E)


def gain_matrix(k):
    """Structured 4x14 feedback matrix K(k) with s = -K(k) z."""
    K = np.zeros((4, 14))
    for ax in range(3):
        K[ax, 0 + ax] = k[9 + ax]    # K_p on e_r
        K[ax, 3 + ax] = k[6 + ax]    # K_v on e_v
        K[ax, 6 + ax] = k[3 + ax]    # K_a on e_a
        K[ax, 9 + ax] = k[0 + ax]    # K_j on e_j
    K[3, 12] = k[13]
    K[3, 13] = k[12]
    return K


def build_a_cl(k):
    """Closed-loop error matrix A_cl(k) = A_ext - B_ext K(k)."""
    sys = external_system()
    return sys.A_ext - sys.B_ext @ gain_matrix(k)


def is_hurwitz(A, margin=0.0):
    """Return (flag, stability_margin) with flag = max Re lambda < -margin."""
    if margin < 0.0:
        raise ValueError("margin must be nonnegative")
    try:
        eigs = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure("eigenvalue computation failed") from exc
    measured = -float(np.max(eigs.real))
    return measured > margin, measured


def routh_quartic(kj, ka, kv, kp):
    """Routh-Hurwitz test for s^4 + kj s^3 + ka s^2 + kv s + kp.

    Independent oracle for the eigenvalue test on the axis blocks.
    """
    if kj <= 0.0 or ka <= 0.0 or kv <= 0.0 or kp <= 0.0:
        return False
    d = kj * ka - kv
    return d > 0.0 and d * kv - kj * kj * kp > 0.0


def routh_stable(k):
    """Routh check of the full gain vector: three axis quartics plus yaw."""
    return (
        all(routh_quartic(k[ax], k[3 + ax], k[6 + ax], k[9 + ax]) for ax in range(3))
        and k[12] > 0.0
        and k[13] > 0.0
    )


def solve_lyapunov(A, Q):
    """Solve A^T P + P A = -Q exactly via the Kronecker vectorization.

    The n = 14 problem is a 196x196 dense solve, trivially exact at this
    size. Raises NotHurwitz when the solution is not symmetric positive
    definite (which certifies the precondition failed).
    """
    A = np.asarray(A, dtype=float)
    Q = np.asarray(Q, dtype=float)
    n = A.shape[0]
    lhs = np.kron(np.eye(n), A.T) + np.kron(A.T, np.eye(n))
    try:
        P = np.linalg.solve(lhs, -Q.reshape(-1)).reshape(n, n)
    except np.linalg.LinAlgError as exc:
        raise NotHurwitz("Lyapunov operator is singular (eigenvalue pair sums to zero)") from exc
    P = 0.5 * (P + P.T)
    if not np.all(np.isfinite(P)):
        raise NotHurwitz("Lyapunov solve produced non-finite entries")
    if np.min(np.linalg.eigvalsh(P)) <= 0.0:
        raise NotHurwitz("Lyapunov solution is not positive definite")
    resid = np.linalg.norm(A.T @ P + P @ A + Q) / np.linalg.norm(Q)
    if resid > 1e-8:
        raise NotHurwitz(f"Lyapunov residual {resid:.2e} out of tolerance")
    return P


class InvarianceLevel(NamedTuple):
    alpha: float      # lambda_min(Q)
    c: float          # 2 ||P E_ext|| (induced 2-norm)
    R: float          # ultimate-bound radius (c / alpha) rbar
    rho_star: float   # invariance level lambda_max(P) R^2


def invariance_level(P, Q, E_ext, rbar):
    alpha = float(np.min(np.linalg.eigvalsh(Q)))
    c = 2.0 * float(np.linalg.norm(P @ E_ext, 2))
    R = (c / alpha) * rbar
    rho_star = float(np.max(np.linalg.eigvalsh(P))) * R * R
    return InvarianceLevel(alpha, c, R, rho_star)


@dataclass(frozen=True)
class Certificate:
    gain: np.ndarray
    hurwitz: bool
    stability_margin: float
    P: Optional[np.ndarray] = None
    alpha: Optional[float] = None
    c: Optional[float] = None
    R: Optional[float] = None
    rho_star: Optional[float] = None
    # diagnostic: smallest rho satisfying alpha * rho >= c^2 rbar^2, the
    # alternative sufficient condition stated alongside the main result
    rho_alt: Optional[float] = None


def certify(k, rbar, Q=None, margin=0.0):
    """Run the Hurwitz / Lyapunov / invariance pipeline for one gain vector."""
    k = np.asarray(k, dtype=float)
    if Q is None:
        Q = np.eye(14)
    A = build_a_cl(k)
    ok, measured = is_hurwitz(A, margin)
    if not ok:
        return Certificate(gain=k, hurwitz=False, stability_margin=measured)
    P = solve_lyapunov(A, Q)
    lvl = invariance_level(P, Q, external_system().E_ext, rbar)
    return Certificate(
        gain=k,
        hurwitz=True,
        stability_margin=measured,
        P=P,
        alpha=lvl.alpha,
        c=lvl.c,
        R=lvl.R,
        rho_star=lvl.rho_star,
        rho_alt=(lvl.c ** 2) * rbar * rbar / lvl.alpha,
    )


@dataclass(frozen=True)
class GainBounds:
    k_min: np.ndarray
    k_max: np.ndarray

    def __post_init__(self):
        as_gain_vector(self.k_min)
        as_gain_vector(self.k_max)
        if not np.all(self.k_min <= self.k_max):
            raise ValueError("k_min must not exceed k_max componentwise")


def load_gain_bounds(path=None):
    """Read the 14x2 bounds table (rows: gain index; columns: k_min k_max)."""
    if path is None:
        text = resources.files("gainsched").joinpath("data/gain_bounds.txt").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"bounds row needs two columns, got: {line!r}")
        rows.append((float(parts[0]), float(parts[1])))
    if len(rows) != 14:
        raise ValueError(f"bounds table needs 14 rows, got {len(rows)}")
    arr = np.array(rows)
    return GainBounds(k_min=arr[:, 0], k_max=arr[:, 1])


@dataclass(frozen=True)
class LibraryEntry:
    index: int
    lam: float             # translational scale in [0, 1]
    mu: float              # yaw scale in [0, 1]
    gain: np.ndarray
    certificate: Certificate


@dataclass(frozen=True)
class AdmissibleLibrary:
    entries: tuple
    bounds: GainBounds
    rbar: float
    margin: float
    rejected: tuple = ()

    def __len__(self):
        return len(self.entries)

    def gain(self, index):
        return self.entries[index].gain

    def gains(self):
        return np.array([e.gain for e in self.entries])

    def match_index(self, gain):
        """Index of the entry equal to `gain` bit-exactly, or None."""
        for e in self.entries:
            if np.array_equal(e.gain, gain):
                return e.index
        return None


def grid_gain(bounds, lam, mu):
    """Gain vector at translational scale lam and yaw scale mu."""
    k = bounds.k_min + 0.0
    k[:12] = bounds.k_min[:12] + lam * (bounds.k_max[:12] - bounds.k_min[:12])
    k[12:] = bounds.k_min[12:] + mu * (bounds.k_max[12:] - bounds.k_min[12:])
    return k


def build_library(bounds, n_trans, n_yaw, rbar, Q=None, margin=0.0):
    """Certify the (n_trans x n_yaw) grid over the gain bounds.

    Entry ordering is row-major over (lam, mu): index = i_lam * n_yaw + i_mu.
    Non-Hurwitz candidates are dropped and reported in `rejected`.
    """
    if n_trans < 1 or n_yaw < 1:
        raise ValueError("n_trans and n_yaw must be at least 1")
    lams = np.linspace(0.0, 1.0, n_trans) if n_trans > 1 else np.array([0.0])
    mus = np.linspace(0.0, 1.0, n_yaw) if n_yaw > 1 else np.array([0.0])
    entries = []
    rejected = []
    index = 0
    for lam in lams:
        for mu in mus:
            k = grid_gain(bounds, float(lam), float(mu))
            cert = certify(k, rbar, Q=Q, margin=margin)
            if cert.hurwitz:
                entries.append(LibraryEntry(index, float(lam), float(mu), k, cert))
                index += 1
            else:
                rejected.append(LibraryEntry(-1, float(lam), float(mu), k, cert))
    if not entries:
        raise EmptyLibrary("no gain on the grid certified as Hurwitz")
    return AdmissibleLibrary(
        entries=tuple(entries),
        bounds=bounds,
        rbar=rbar,
        margin=margin,
        rejected=tuple(rejected),
    )
