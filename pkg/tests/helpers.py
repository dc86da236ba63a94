import numpy as np


def random_guarded_eta(rng, margin=0.25):
    """Euler angles with pitch clear of the singularity guard."""
    phi = rng.uniform(-np.pi, np.pi)
    theta = rng.uniform(-(np.pi / 2 - margin), np.pi / 2 - margin)
    psi = rng.uniform(-np.pi, np.pi)
    return np.array([phi, theta, psi])
