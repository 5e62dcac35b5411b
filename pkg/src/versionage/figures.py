"""Matplotlib renderers for the report path.

Everything here draws to files (Agg backend, no display); each function
takes plain sequences so callers stay decoupled from plotting.
"""

from __future__ import annotations

import math
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

_DPI = 150


def _new_axes(nrows: int = 1, height: float = 3.2):
    fig, axes = plt.subplots(nrows, 1, figsize=(6.4, height * nrows), squeeze=False)
    for ax in axes[:, 0]:
        ax.grid(True, alpha=0.3)
    return fig, axes[:, 0]


def _save(fig, path: str) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def age_profile_figure(
    nodes: Sequence[int],
    analytic_ages: Sequence[float],
    sim_means: Sequence[float],
    sim_cis: Sequence[float],
    path: str,
) -> None:
    """Per-node expected ages: closed form as a line, Monte Carlo as error bars."""
    fig, (ax,) = _new_axes()
    ax.plot(nodes, analytic_ages, "o-", label="closed form", color="tab:blue")
    finite = [i for i, m in enumerate(sim_means) if math.isfinite(m)]
    ax.errorbar(
        [nodes[i] for i in finite],
        [sim_means[i] for i in finite],
        yerr=[sim_cis[i] for i in finite],
        fmt="s",
        color="tab:red",
        capsize=3,
        markersize=4,
        label="simulation (95% CI)",
    )
    ax.set_xlabel("node")
    ax.set_ylabel("expected version age")
    ax.legend()
    _save(fig, path)


def staircase_figure(
    betas: Sequence[float],
    spacings: Sequence[int],
    fractions: Sequence[float],
    path: str,
) -> None:
    """Subscription spacing and subscriber fraction versus sampling rate."""
    fig, (ax_k, ax_f) = _new_axes(nrows=2)
    ax_k.step(betas, spacings, where="post", color="tab:blue")
    ax_k.set_ylabel("spacing K")
    ax_f.step(betas, fractions, where="post", color="tab:green")
    ax_f.set_ylabel("subscriber fraction")
    ax_f.set_xlabel("sampling rate beta")
    _save(fig, path)


def comparison_figure(
    networks: Sequence[str],
    beta_stars: Sequence[float],
    fractions: Sequence[float],
    utilities: Sequence[float],
    path: str,
) -> None:
    """Optimal rate, induced fraction, and utility side by side per network."""
    fig, (ax_b, ax_f, ax_u) = _new_axes(nrows=3, height=2.4)
    x = range(len(networks))
    for ax, vals, label, color in (
        (ax_b, beta_stars, "optimal beta", "tab:blue"),
        (ax_f, fractions, "subscriber fraction", "tab:green"),
        (ax_u, utilities, "server utility", "tab:orange"),
    ):
        ax.bar(x, vals, color=color, width=0.5)
        ax.set_ylabel(label)
        ax.set_xticks(list(x))
        ax.set_xticklabels(networks)
    _save(fig, path)
