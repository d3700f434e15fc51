"""Figures for the CLI report path, written to files (Agg backend)."""
from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.4),
    "figure.dpi": 120,
    "font.size": 9,
    "axes.linewidth": 0.6,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.4,
    "legend.frameon": False,
    "savefig.bbox": "tight",
}

# fixed metadata keeps PNG bytes reproducible across runs
_META = {"Software": None}


def _save(fig, path) -> None:
    fig.savefig(path, metadata=_META)
    plt.close(fig)


def plot_threshold_curve(rows: list[dict], path, anchors=()) -> None:
    """eta* against the colored-noise parameter p."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        pts = [(r["p"], r["eta_star"]) for r in rows if r["eta_star"] is not None]
        if pts:
            p, e = zip(*pts)
            ax.plot(p, e, "o-", color="C0", label="optimized threshold")
        for i, (pa, ea) in enumerate(anchors):
            ax.errorbar(pa, ea, yerr=0.01, fmt="s", color="C3", capsize=3,
                        label="reference values" if i == 0 else None)
        ax.axhline(2 / 3, color="0.5", ls=":", lw=0.8)
        ax.set_xlabel("distinguishability $p$")
        ax.set_ylabel(r"critical efficiency $\eta^*$")
        ax.legend(loc="best")
        _save(fig, path)


def plot_rate_envelope(mu_values, heralded, coincidence, stated, path) -> None:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.loglog(mu_values, heralded, color="C0", label="heralded pairs")
        ax.loglog(mu_values, coincidence, color="C1", ls="--", label="detected coincidences")
        ax.axhspan(*stated, color="C2", alpha=0.15, label="stated estimate")
        ax.set_xlabel(r"splitting probability $\mu_C$")
        ax.set_ylabel("rate (1/s)")
        ax.legend(loc="best")
        _save(fig, path)


def plot_spacetime(events: list[dict], path, c: float = 299_792_458.0) -> None:
    """Event diagram with time in ns and the light cones of both setting choices."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        xs = [e["x_m"] for e in events]
        span = max(1.0, max(xs) - min(xs))
        for e in events:
            color = "C0" if e["label"].endswith("A") else "C1"
            if e["label"] == "PairEmission":
                color = "k"
            ax.plot(e["x_m"], e["t_s"] * 1e9, "o", ms=3, color=color)
            if e["label"].startswith("SettingChoice"):
                dx = np.array([-span, 0.0, span])
                ax.plot(e["x_m"] + dx, e["t_s"] * 1e9 + np.abs(dx) / c * 1e9,
                        color=color, lw=0.7, ls="--")
        t_max = max(e["t_s"] for e in events) * 1e9
        ax.set_ylim(-0.05 * t_max - 1, 1.2 * t_max + 1)
        ax.set_xlim(min(xs) - 0.2 * span, max(xs) + 0.2 * span)
        ax.set_xlabel("position (m)")
        ax.set_ylabel("time (ns)")
        _save(fig, path)


def plot_counts(rows: list[dict], path) -> None:
    """Heralded outcome counts per setting pair."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(2, 2, sharey=True, figsize=(5.5, 4.0))
        labels = [a + b for a in "+-0" for b in "+-0"]
        for x in range(2):
            for y in range(2):
                sel = {(r["a"] + r["b"]): r["count"] for r in rows if r["x"] == x and r["y"] == y}
                ax = axes[x, y]
                ax.bar(range(9), [sel.get(k, 0) for k in labels], color="C0")
                ax.set_xticks(range(9), labels, fontsize=7)
                ax.set_title(f"x={x}, y={y}", fontsize=8)
        _save(fig, path)


def plot_loss_independence(rows: list[dict], path) -> None:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        eta = [r["eta_t"] for r in rows]
        for side, color in (("a", "C0"), ("b", "C1")):
            v = [r[f"cond_eff_{side}"] for r in rows]
            e = [r[f"cond_eff_{side}_err"] for r in rows]
            v = [np.nan if (x is None or (isinstance(x, float) and math.isnan(x))) else x for x in v]
            e = [0.0 if (x is None or (isinstance(x, float) and math.isnan(x))) else x for x in e]
            ax.errorbar(eta, v, yerr=e, fmt="o", capsize=3, color=color,
                        label=f"side {side.upper()}")
        ax.set_xlabel(r"channel transmittance $\eta_t$")
        ax.set_ylabel("P(TES click | herald)")
        ax.legend(loc="best")
        _save(fig, path)
