"""Figure rendering for the report paths (written next to the CSV outputs)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .certify import CertificationReport
from .recovery import ExperimentResult

__all__ = ["experiment_figures", "certificate_figure"]

_BOUNDS = [
    ("lhs_t3_tensor", "rhs_t3_tensor", "precond_t3", "tensor bound", "tab:blue"),
    ("lhs_t3_dp", "rhs_t3_dp", "precond_t3", "class bound", "tab:orange"),
    ("lhs_t7", "rhs_t7", "precond_t7", "network bound", "tab:green"),
]

_EPS_FLOOR = 1e-18  # log-scale placeholder for exact zeros


def experiment_figures(result: ExperimentResult, out_dir) -> list[Path]:
    """Render the sweep figures: bound scatter, residual vs noise, satisfaction."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [r for r in result.rows if not r.error]
    written = []

    fig, ax = plt.subplots(figsize=(6.0, 5.0))
    lo, hi = np.inf, -np.inf
    for lhs_key, rhs_key, pre_key, label, color in _BOUNDS:
        pts = [
            (max(getattr(r, lhs_key), _EPS_FLOOR), max(getattr(r, rhs_key), _EPS_FLOOR))
            for r in rows
            if getattr(r, pre_key) and np.isfinite(getattr(r, lhs_key))
        ]
        if not pts:
            continue
        x, y = zip(*pts)
        ax.scatter(y, x, s=12, alpha=0.6, label=label, color=color)
        lo = min(lo, min(x), min(y))
        hi = max(hi, max(x), max(y))
    if np.isfinite(lo):
        ref = np.array([lo, hi])
        ax.plot(ref, ref, "k--", linewidth=1, label="violation line")
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel("certified bound (rhs)")
    ax.set_ylabel("measured error (lhs)")
    ax.set_title("Recovery errors vs certified bounds")
    ax.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    path = out_dir / "bounds_scatter.png"
    fig.savefig(path, dpi=130)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    deltas = [max(r.delta, _EPS_FLOOR) for r in rows]
    etas = [max(r.eta, _EPS_FLOOR) for r in rows]
    ax.scatter(deltas, etas, s=12, alpha=0.6, color="tab:purple")
    if rows:
        ref = np.array([min(deltas + etas), max(deltas + etas)])
        ax.plot(ref, ref, "k--", linewidth=1, label="eta = delta")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.legend(fontsize=8)
    ax.set_xlabel("noise level delta")
    ax.set_ylabel("solver residual eta")
    ax.set_title("Residual vs injected noise")
    fig.tight_layout()
    path = out_dir / "residual_vs_noise.png"
    fig.savefig(path, dpi=130)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    grid = sorted({r.delta for r in rows})
    rates = []
    for d in grid:
        sub = [r for r in rows if r.delta == d]
        rates.append(sum(1 for r in sub if r.satisfied_all) / len(sub) if sub else 0.0)
    ax.bar(range(len(grid)), rates, color="tab:green", alpha=0.8)
    ax.set_xticks(range(len(grid)))
    ax.set_xticklabels([f"{d:g}" for d in grid])
    ax.set_ylim(0, 1.05)
    ax.set_xlabel("noise level delta")
    ax.set_ylabel("fraction of trials with all bounds satisfied")
    ax.set_title("Bound satisfaction by noise level")
    fig.tight_layout()
    path = out_dir / "satisfaction_by_delta.png"
    fig.savefig(path, dpi=130)
    plt.close(fig)
    written.append(path)
    return written


def certificate_figure(report: CertificationReport, out_path) -> Path:
    """Per-pair smallest nonzero singular values with the family and top lines."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    values = [ps.sigma_min_nonzero for ps in report.per_pair]
    labels = [f"{a},{b}" for a, b in report.pair_labels]
    colors = ["tab:red" if ps.indeterminate else "tab:blue" for ps in report.per_pair]
    ax.bar(range(len(values)), values, color=colors, alpha=0.8)
    ax.axhline(report.sigma_family, color="k", linestyle="--", linewidth=1,
               label=f"family lower bound = {report.sigma_family:.6g}")
    ax.axhline(report.sigma_max, color="gray", linestyle=":", linewidth=1,
               label=f"spectral norm = {report.sigma_max:.6g}")
    ax.set_xticks(range(len(values)))
    ax.set_xticklabels(labels, rotation=45, fontsize=7)
    ax.set_xlabel("support pair")
    ax.set_ylabel("smallest nonzero singular value")
    ax.set_title("Restricted-operator spectra per support pair")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=130)
    plt.close(fig)
    return out_path
