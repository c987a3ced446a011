"""Optional PNG figures for command reports (matplotlib, Agg backend)."""

import numpy as np


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path):
    # fixed metadata keeps the files byte-stable across runs
    fig.savefig(path, dpi=100, metadata={"Software": None})
    fig.clf()


def surface_field(grid, values, path, title, label):
    """Color map of a nodal field over the surface parameters."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 3.5))
    a1, a2 = grid.axes
    mesh = ax.pcolormesh(a2, a1, np.asarray(values), shading="nearest", cmap="viridis")
    fig.colorbar(mesh, ax=ax, label=label)
    if grid.kind == "lat-long":
        ax.set_xlabel("phi")
        ax.set_ylabel("theta")
        ax.invert_yaxis()
    else:
        ax.set_xlabel("y")
        ax.set_ylabel("x")
    ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def radial_profile(r, values, roots, path, title):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(r, values, lw=1.2)
    ax.axhline(0.0, color="0.5", lw=0.8)
    for x in roots:
        ax.axvline(x, color="C3", ls="--", lw=0.8)
    ax.set_xlabel("r")
    ax.set_ylabel("theta - h")
    ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def jang_history(states, path):
    """``sup |u|`` and ``max |Du|`` along the tau schedule."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 3.5))
    taus = [s.tau for s in states]
    ax.loglog(taus, [max(s.sup_abs, 1e-16) for s in states], "o-", label="sup |u|")
    ax.loglog(taus, [max(float(s.grad_norm.max()), 1e-16) for s in states], "s-", label="max |Du|")
    ax.invert_xaxis()
    ax.set_xlabel("tau")
    ax.legend()
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def jang_section(r, u, path, title):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(r, u, lw=1.2)
    ax.set_xlabel("r")
    ax.set_ylabel("u (equatorial average)")
    ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def dec_margin(coords, margin, path):
    """Margin along the first chart axis: min and max over the other axes."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 3.5))
    m = np.asarray(margin)
    axes = tuple(range(1, m.ndim))
    x = coords[(slice(None),) + (0,) * (m.ndim - 1) + (0,)]
    ax.plot(x, m.min(axis=axes) if axes else m, label="min")
    ax.plot(x, m.max(axis=axes) if axes else m, label="max")
    ax.axhline(0.0, color="0.5", lw=0.8)
    ax.set_xlabel("first chart coordinate")
    ax.set_ylabel("modified DEC margin")
    ax.legend()
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)
