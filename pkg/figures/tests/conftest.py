import numpy as np
import pytest

from gainsched_figures.render import EXPECTED_COLUMNS


def synth_episode_csv(path, n=60, dt=0.01, tf=0.3, seed=0):
    """Fabricate a schema-valid episode CSV with plausible series."""
    rng = np.random.default_rng(seed)
    t = np.arange(n) * dt
    data = {name: rng.normal(scale=0.1, size=n) for name in EXPECTED_COLUMNS}
    data["t"] = t
    data["action"] = np.repeat(np.arange(n // 10 + 1) % 3, 10)[:n].astype(float)
    for i in range(1, 15):
        data[f"k{i}"] = 10.0 + data["action"]
    data["reward"] = -np.abs(rng.normal(scale=0.5, size=n))
    with open(path, "w") as fh:
        fh.write("# schema = episode-v1\n")
        fh.write("# seed = 0\n")
        fh.write(f"# return = {data['reward'].sum():.17g}\n")
        fh.write("# termination = completed\n")
        fh.write(f"# tf = {tf:.17g}\n")
        fh.write(f"# dt = {dt:.17g}\n")
        fh.write("# dwell_steps = 10\n")
        fh.write(",".join(EXPECTED_COLUMNS) + "\n")
        for i in range(n):
            fh.write(",".join(f"{data[c][i]:.17g}" for c in EXPECTED_COLUMNS) + "\n")
    return path


@pytest.fixture
def episode_csv(tmp_path):
    return synth_episode_csv(tmp_path / "episode.csv")
