"""PNG figures rendered from the tables of a run directory.

Uses the object-oriented matplotlib API with the Agg canvas only, so it never
touches a display or global pyplot state.
"""

from __future__ import annotations

import os

import numpy as np
from matplotlib.figure import Figure

from .tables import read_table

FIELD_TITLES = {
    "truth.csv": "hidden state",
    "estimate.csv": "posterior mean",
    "controls.csv": "committed control",
    "reference.csv": "reference state",
}


def load_field(path):
    """Tidy ``t, xi, value`` table -> ``(t, xi, values[t, xi])``."""
    _, data = read_table(path)
    t = np.unique(data[:, 0])
    xi = np.unique(data[:, 1])
    return t, xi, data[:, 2].reshape(len(t), len(xi))


def _save(fig, path):
    fig.savefig(path, dpi=120, metadata={"Software": None})
    return path


def plot_field(path, out, title):
    t, xi, v = load_field(path)
    fig = Figure(figsize=(6.0, 3.6), layout="constrained")
    ax = fig.add_subplot()
    if len(t) > 1:
        mesh = ax.pcolormesh(xi, t, v, shading="nearest", cmap="viridis")
        fig.colorbar(mesh, ax=ax)
        ax.set_ylabel("t")
    else:
        ax.plot(xi, v[0])
    ax.set_xlabel("xi")
    ax.set_title(title)
    return _save(fig, out)


def plot_profiles(run_dir, out):
    """Truth against estimate (and reference if present) at a few times."""
    t, xi, truth = load_field(os.path.join(run_dir, "truth.csv"))
    _, _, est = load_field(os.path.join(run_dir, "estimate.csv"))
    ref = None
    if os.path.exists(os.path.join(run_dir, "reference.csv")):
        ref = load_field(os.path.join(run_dir, "reference.csv"))[2]
    picks = sorted({0, len(t) // 2, len(t) - 1} & set(range(min(len(truth), len(est)))))
    fig = Figure(figsize=(4.0 * len(picks), 3.2), layout="constrained")
    axes = fig.subplots(1, len(picks), squeeze=False)[0]
    for ax, j in zip(axes, picks):
        ax.plot(xi, truth[j], label="truth")
        ax.plot(xi, est[j], "--", label="estimate")
        if ref is not None:
            ax.plot(xi, ref[j], ":", label="reference")
        ax.set_title(f"t = {t[j]:.3g}")
        ax.set_xlabel("xi")
    axes[0].legend(frameon=False)
    return _save(fig, out)


def plot_observations(path, out):
    header, data = read_table(path)
    fig = Figure(figsize=(5.0, 3.2), layout="constrained")
    ax = fig.add_subplot()
    for k, name in enumerate(header[1:], 1):
        ax.plot(data[:, 0], np.cumsum(data[:, k]), label=name.replace("dY", "Y"))
    ax.set_xlabel("t")
    ax.legend(frameon=False)
    ax.set_title("observation paths")
    return _save(fig, out)


def render_run(run_dir, out_dir=None):
    """Render every figure the run directory has tables for; returns the paths."""
    out_dir = out_dir or os.path.join(run_dir, "figures")
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for name, title in FIELD_TITLES.items():
        src = os.path.join(run_dir, name)
        if os.path.exists(src):
            written.append(plot_field(src, os.path.join(out_dir, name.replace(".csv", ".png")), title))
    if all(os.path.exists(os.path.join(run_dir, n)) for n in ("truth.csv", "estimate.csv")):
        written.append(plot_profiles(run_dir, os.path.join(out_dir, "profiles.png")))
    obs = os.path.join(run_dir, "observations.csv")
    if os.path.exists(obs):
        written.append(plot_observations(obs, os.path.join(out_dir, "observations.png")))
    return written
