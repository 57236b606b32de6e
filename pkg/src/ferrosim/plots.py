"""Report figures rendered next to the delimited outputs.

Every CLI command that writes a CSV also renders the matching matplotlib
figure(s) to PNG files in the same output directory; the library never
opens interactive windows (Agg backend).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .diagnostics import DISSIPATION_TERMS, MARTINGALE_TERMS


def energy_figure(ledger, path, member: int = 0, title: str = "energy ledger"):
    """Total energy trace plus the dissipation budget of one trajectory."""
    dt = ledger.dt
    cols = {
        k: (v[member] if v.ndim == 2 else v) for k, v in ledger.columns.items()
    }
    steps = len(cols["e_tot"])
    t = np.arange(steps) * dt

    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    ax1.plot(t, cols["e_tot"], "k-", lw=1.5, label="E_tot")
    ax1.set_ylabel("total energy")
    ax1.legend(loc="best", fontsize=8)
    ax1.set_title(title)

    for name in DISSIPATION_TERMS:
        if np.any(cols[name] != 0.0):
            ax2.plot(t, cols[name], lw=0.9, label=name)
    ax2.set_xlabel("time")
    ax2.set_ylabel("dissipation terms")
    if ax2.lines:
        ax2.legend(loc="best", fontsize=7, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def ledger_balance_figure(ledger, path, member: int = 0):
    """Residual and martingale columns of the energy identity."""
    dt = ledger.dt
    cols = {
        k: (v[member] if v.ndim == 2 else v) for k, v in ledger.columns.items()
    }
    t = np.arange(len(cols["residual"])) * dt
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    ax1.plot(t, np.cumsum(cols["residual"]), "r-", lw=1.2)
    ax1.set_ylabel("cumulative residual")
    ax1.set_title("energy identity balance")
    for name in MARTINGALE_TERMS:
        if np.any(cols[name] != 0.0):
            ax2.plot(t, np.cumsum(cols[name]), lw=0.9, label=name)
    ax2.set_xlabel("time")
    ax2.set_ylabel("cumulative martingale terms")
    if ax2.lines:
        ax2.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def sweep_figure(table_rows, columns, bracket_roots, path):
    """Bracket values and audit outcomes across the diffusion sweep."""
    idx = {name: i for i, name in enumerate(columns)}
    lams = np.array([row[idx["lambda"]] for row in table_rows])
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    for name in ("br_grad_u", "br_grad_w", "br_curl_m", "br_curl_h", "br_div_m"):
        ax1.plot(lams, [row[idx[name]] for row in table_rows], "o-", ms=3, lw=1, label=name[3:])
    ax1.axhline(0.0, color="k", lw=0.8)
    for root in bracket_roots:
        ax1.axvline(root, color="gray", ls="--", lw=0.8)
    ax1.set_ylabel("energy brackets")
    ax1.legend(fontsize=7)
    ax1.set_title("diffusion-coefficient sweep")

    ax2.plot(lams, [row[idx["path_pass_rate"]] for row in table_rows], "ks-", ms=4, label="path pass rate")
    ax2.plot(lams, [row[idx["in_window"]] for row in table_rows], "b^--", ms=4, label="in admissible window")
    ax2.set_ylim(-0.05, 1.1)
    ax2.set_xlabel("lambda")
    ax2.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def estimate_figure(reports, path):
    """Bar chart of audit margins (rhs - lhs, clipped for display)."""
    names = [r.name for r in reports]
    margins = [r.margin for r in reports]
    colors = ["tab:green" if r.passed else "tab:red" for r in reports]
    fig, ax = plt.subplots(figsize=(7, 0.5 * len(names) + 1.5))
    ax.barh(range(len(names)), margins, color=colors)
    ax.set_yticks(range(len(names)))
    ax.set_yticklabels(names, fontsize=8)
    ax.axvline(0.0, color="k", lw=0.8)
    ax.set_xlabel("audit margin (rhs - lhs)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
