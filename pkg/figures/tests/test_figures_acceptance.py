"""Figures acceptance: render the six images from a default eval CSV.

The episode CSV is produced through the primary package's CLI (its
external interface); the figures package itself never imports it.
"""

import subprocess
import sys

import pytest

from gainsched_figures import FIGURE_IDS, FigureSpec, load_episode, render, render_all


@pytest.fixture(scope="module")
def default_eval_csv(tmp_path_factory):
    out = tmp_path_factory.mktemp("primary-out")
    proc = subprocess.run(
        [sys.executable, "-m", "gainsched", "export-figures-data",
         "--out", str(out)],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    path = out / "figures-data" / "eval_episode.csv"
    assert path.exists()
    return path


def test_acceptance_six_figures_render(default_eval_csv, tmp_path):
    results = render_all(str(default_eval_csv), str(tmp_path))
    assert len(results) == len(FIGURE_IDS)
    sizes = {r["figure_id"]: (tmp_path / f"{r['figure_id']}.svg").stat().st_size
             for r in results}
    assert all(s > 1000 for s in sizes.values())

    position_meta = next(r for r in results if r["figure_id"] == "position")
    ep = load_episode(str(default_eval_csv))
    assert position_meta["tf_marker"] == ep.tf
    assert b"stroke-dasharray" in (tmp_path / "position.svg").read_bytes()

    reward_meta = next(r for r in results if r["figure_id"] == "reward")
    t = ep["t"]
    recomputed = ep["reward"][t >= t[-1] - 2.0].mean()
    ok = abs(reward_meta["annotation_mean"] - recomputed) < 1e-9

    print(f"PASS figures: six images rendered ({min(sizes.values())}+ bytes each), "
          f"tf marker at {position_meta['tf_marker']} s, reward annotation "
          f"matches recomputation to {abs(reward_meta['annotation_mean'] - recomputed):.1e}",
          flush=True)
    assert ok
