"""Figure rendering for benchmark reports; PNG files only, no display.

Consumed by the bench/CLI report path; the inference and planning core
never imports this module.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

plt.rcParams.update({
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
})


def save_curves(path, xs, series, xlabel, ylabel, title=None, logy=False):
    fig, ax = plt.subplots()
    for label, ys in series.items():
        ax.plot(xs, ys, marker="o", label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if logy:
        ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _bary2d(points):
    # barycentric projection of Delta^3 onto the plane
    pts = np.atleast_2d(points)
    x = pts[:, 1] + 0.5 * pts[:, 2]
    y = (np.sqrt(3.0) / 2.0) * pts[:, 2]
    return np.column_stack([x, y])


def _ordered_polygon(pts2d):
    center = pts2d.mean(axis=0)
    ang = np.arctan2(pts2d[:, 1] - center[1], pts2d[:, 0] - center[0])
    return pts2d[np.argsort(ang)]


def save_simplex_envelopes(path, envelopes, labels, title=None):
    """Barycentric plot of 3-outcome envelopes (polygon per envelope)."""
    fig, ax = plt.subplots(figsize=(5.5, 5.0))
    tri = _bary2d(np.eye(3))
    closed = np.vstack([tri, tri[:1]])
    ax.plot(closed[:, 0], closed[:, 1], color="k", lw=1.0, label="simplex")
    colors = plt.cm.tab10(np.linspace(0, 1, max(len(envelopes), 3)))
    for env, label, col in zip(envelopes, labels, colors):
        p2 = _bary2d(env.vertices)
        if p2.shape[0] >= 3:
            poly = _ordered_polygon(p2)
            poly = np.vstack([poly, poly[:1]])
            ax.plot(poly[:, 0], poly[:, 1], color=col, label=label)
            ax.fill(poly[:, 0], poly[:, 1], color=col, alpha=0.25)
        else:
            ax.plot(p2[:, 0], p2[:, 1], "o-", color=col, label=label)
    ax.set_aspect("equal")
    ax.set_axis_off()
    if title:
        ax.set_title(title)
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_segment_errors(path, rs_errors, rn_errors, ylabel, title=None):
    fig, ax = plt.subplots()
    t = np.arange(len(rs_errors))
    ax.plot(t, rs_errors, marker="o", ms=3, label="risk-sensitive")
    ax.plot(t, rn_errors, marker="s", ms=3, label="risk-neutral")
    ax.set_xlabel("segment")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_improvement_bars(path, improvements, ylabel, title=None):
    fig, ax = plt.subplots()
    t = np.arange(len(improvements))
    colors = ["tab:green" if v >= 0 else "tab:red" for v in improvements]
    ax.bar(t, improvements, color=colors)
    ax.axhline(0.0, color="k", lw=0.8)
    ax.set_xlabel("segment")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_offset_bounds(path, normals, offsets_list, labels, mode_names=None, title=None):
    """Per-mode probability intervals implied by basis-normal offsets."""
    fig, ax = plt.subplots()
    L = normals.shape[1]
    mode_names = mode_names or [f"mode {i}" for i in range(L)]
    width = 0.8 / len(offsets_list)
    colors = plt.cm.tab10(np.linspace(0, 1, max(len(offsets_list), 3)))
    for s, (r, label) in enumerate(zip(offsets_list, labels)):
        upper = 1.0 - np.asarray(r[:L])
        lower = np.asarray(r[L:])
        xs = np.arange(L) + s * width
        ax.bar(xs, upper - lower, bottom=lower, width=width * 0.9, color=colors[s], alpha=0.7, label=label)
    ax.set_xticks(np.arange(L) + 0.4 - width / 2)
    ax.set_xticklabels(mode_names)
    ax.set_ylabel("probability range")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
