"""Figure rendering for the report path. Everything is headless (Agg) and
written straight to files next to the delimited output."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_COLORS = {"pgd": "tab:red", "csp": "tab:blue"}


def _by_attack(rows):
    grouped: dict[str, list] = {}
    for row in rows:
        grouped.setdefault(row.attack, []).append(row)
    for rows_ in grouped.values():
        rows_.sort(key=lambda r: r.iterations)
    return grouped


def plot_invalid_rate(rows, path) -> None:
    """Rate of constraint-violating adversarial examples vs. iterations."""
    fig, ax = plt.subplots(figsize=(5.2, 3.4))
    for attack, group in _by_attack(rows).items():
        x = [r.iterations for r in group]
        y = np.array([r.invalid_rate for r in group])
        ci = np.array([r.invalid_rate_ci for r in group])
        color = _COLORS.get(attack)
        ax.plot(x, y, marker="o", label=attack.upper(), color=color)
        ax.fill_between(x, y - ci, y + ci, alpha=0.2, color=color)
    ax.set_xlabel("attack iterations")
    ax.set_ylabel("invalid rate")
    ax.set_ylim(-0.02, 1.02)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_accuracy(rows, path, clean_accuracy: float | None = None) -> None:
    """Model accuracy pre-projection and after constraint enforcement."""
    fig, ax = plt.subplots(figsize=(5.2, 3.4))
    for attack, group in _by_attack(rows).items():
        x = [r.iterations for r in group]
        color = _COLORS.get(attack)
        y = np.array([r.model_accuracy for r in group])
        ci = np.array([r.model_accuracy_ci for r in group])
        ax.plot(x, y, marker="o", label=attack.upper(), color=color)
        ax.fill_between(x, y - ci, y + ci, alpha=0.2, color=color)
        yc = np.array([r.constrained_accuracy for r in group])
        cic = np.array([r.constrained_accuracy_ci for r in group])
        ax.plot(x, yc, marker="s", linestyle="--", label=f"Constrained-{attack.upper()}", color=color)
        ax.fill_between(x, yc - cic, yc + cic, alpha=0.12, color=color)
    if clean_accuracy is not None:
        ax.axhline(clean_accuracy, color="gray", linewidth=0.8, linestyle=":", label="clean")
    ax.set_xlabel("attack iterations")
    ax.set_ylabel("model accuracy")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_clause_satisfaction(charts: dict, path) -> None:
    """Grouped bars of mean clauses satisfied per feature, with CI bars."""
    attacks = list(charts)
    names = charts[attacks[0]].feature_names
    x = np.arange(len(names))
    width = 0.8 / max(1, len(attacks))
    fig, ax = plt.subplots(figsize=(max(5.2, 0.7 * len(names)), 3.4))
    for j, attack in enumerate(attacks):
        chart = charts[attack]
        ax.bar(
            x + (j - (len(attacks) - 1) / 2) * width,
            chart.means,
            width,
            yerr=chart.ci_halfwidths,
            capsize=2,
            label=attack.upper(),
            color=_COLORS.get(attack),
        )
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel("mean clauses satisfied")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_bench(cells, path) -> None:
    """Learning time against the |E| x clause-space product, log-log."""
    fig, ax = plt.subplots(figsize=(5.2, 3.4))
    work = np.array([c.samples * c.space for c in cells], dtype=np.float64)
    secs = np.array([c.seconds for c in cells])
    order = np.argsort(work)
    ax.loglog(work[order], secs[order], marker="o", linestyle="-")
    ax.set_xlabel("samples x clause-space size")
    ax.set_ylabel("filter time [s]")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
