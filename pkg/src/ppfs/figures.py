"""Matplotlib figures written next to the JSON reports."""
from __future__ import annotations

import os

from matplotlib.figure import Figure

STYLE = {"figsize": (6.0, 3.6), "dpi": 120}


def _save(fig: Figure, directory: str, name: str) -> str:
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, name)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    return path


def gamma_trace(rounds, selected, directory: str, name: str = "gamma_trace.png") -> str:
    """Candidate degrees per round, with the selected attribute highlighted.

    ``rounds`` is a list of ``[(attribute_name, float_gamma), ...]`` and
    ``selected`` the attribute name picked in each round.
    """
    fig = Figure(**STYLE)
    ax = fig.add_subplot()
    for r, cands in enumerate(rounds, start=1):
        xs = [r] * len(cands)
        ax.scatter(xs, [g for _, g in cands], color="0.6", s=14, zorder=2)
    best = []
    for r, (cands, pick) in enumerate(zip(rounds, selected), start=1):
        g = dict(cands)[pick]
        best.append((r, g))
        ax.annotate(pick, (r, g), textcoords="offset points", xytext=(4, 4), fontsize=8)
    if best:
        ax.plot([r for r, _ in best], [g for _, g in best], marker="o", color="C0", zorder=3)
    ax.set_xlabel("round")
    ax.set_ylabel("dependency degree")
    ax.set_ylim(-0.05, 1.05)
    ax.set_xticks(range(1, max(len(rounds), 1) + 1))
    ax.grid(alpha=0.3)
    return _save(fig, directory, name)


def party_traffic(per_party: dict[int, dict[str, int]], directory: str, name: str = "party_traffic.png") -> str:
    fig = Figure(**STYLE)
    ax1 = fig.add_subplot(1, 2, 1)
    ax2 = fig.add_subplot(1, 2, 2)
    parties = sorted(per_party)
    ax1.bar([str(p) for p in parties], [per_party[p]["messages"] for p in parties], color="C0")
    ax2.bar([str(p) for p in parties], [per_party[p]["bytes"] for p in parties], color="C1")
    ax1.set_title("messages sent", fontsize=9)
    ax2.set_title("bytes sent", fontsize=9)
    for ax in (ax1, ax2):
        ax.set_xlabel("party")
    return _save(fig, directory, name)


def eigenvalues(selection, directory: str, name: str = "eigenvalues.png") -> str:
    fig = Figure(**STYLE)
    ax = fig.add_subplot()
    ranks = list(range(len(selection.corr_eigenvalues)))
    ax.plot(ranks, selection.corr_eigenvalues, marker="o", label="correlation")
    ax.plot(ranks, selection.cov_eigenvalues, marker="s", label="covariance")
    ax.bar(ranks, selection.differences, alpha=0.3, color="C2", label="difference")
    ax.axhline(selection.delta, color="k", ls="--", lw=0.8, label="delta")
    ax.set_xlabel("eigenvalue rank")
    ax.set_yscale("symlog")
    ax.legend(fontsize=8)
    return _save(fig, directory, name)
