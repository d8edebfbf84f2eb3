"""Static figures rendered from scenario records (Agg backend, files only)."""

from __future__ import annotations

import math
import os
from typing import List, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.6),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.fontsize": 8,
    "savefig.bbox": "tight",
}


def _f(rows, key) -> np.ndarray:
    return np.array([float(r[key]) if r[key] not in (None, "") else np.nan for r in rows])


def _group(rows, key) -> dict:
    out: dict = {}
    for r in rows:
        out.setdefault(r[key], []).append(r)
    return out


def plot_erd_roc(rows, ax):
    for n_t, grp in _group([r for r in rows if r["trial_id"] == "all"], "n_t").items():
        ax.semilogy(_f(grp, "gamma"), np.maximum(_f(grp, "p_f"), 1e-6), marker="o", ms=3, label=f"$N_T$={n_t}")
    ax.set_xlabel(r"threshold $\gamma$")
    ax.set_ylabel("false-alarm probability")
    ax.legend()


def plot_delta_f_grid(rows, ax):
    th1 = sorted({float(r["theta1"]) for r in rows})
    th2 = sorted({float(r["theta2"]) for r in rows})
    table = np.full((len(th1), len(th2)), np.nan)
    for r in rows:
        table[th1.index(float(r["theta1"])), th2.index(float(r["theta2"]))] = float(r["delta_f_mean"])
    im = ax.imshow(table, origin="lower", cmap="viridis")
    labels = [f"{t / math.pi:.2f}" for t in th1]
    ax.set_xticks(range(len(th2)), [f"{t / math.pi:.2f}" for t in th2])
    ax.set_yticks(range(len(th1)), labels)
    ax.set_xlabel(r"$\theta_2/\pi$")
    ax.set_ylabel(r"$\theta_1/\pi$")
    ax.grid(False)
    plt.colorbar(im, ax=ax, label=r"mean $\Delta f$")


def plot_nmse_cdf(rows, ax):
    for kind, grp in _group(rows, "kind").items():
        v = np.sort(_f(grp, "nmse_db"))
        ax.step(v, np.arange(1, v.size + 1) / v.size, where="post", label=kind)
    ax.set_xlabel("CIR NMSE (dB)")
    ax.set_ylabel("CDF")
    ax.legend()


def plot_nmse_vs_snr(rows, ax):
    for (est, snr), grp in _group([dict(r, key=(r["estimator"], r["snr_db"])) for r in rows], "key").items():
        ax.semilogx(_f(grp, "n_t"), _f(grp, "nmse_db"), marker="o", ms=3, base=2, label=f"{est} ({snr} dB)")
    ax.set_xlabel("antennas $N_T$")
    ax.set_ylabel("NMSE (dB)")
    ax.legend()


def plot_tradeoff_curve(rows, ax):
    for n_fft, grp in _group(rows, "n_fft").items():
        ax.plot(_f(grp, "p_i_x100"), _f(grp, "p_s_root4"), marker="o", ms=3, label=f"N={n_fft}")
    ax.set_xlabel(r"$P_I \times 10^2$")
    ax.set_ylabel(r"$P_s^{1/4}$")
    ax.legend()


def plot_iep_surface(rows, ax):
    for ss, grp in _group(rows, "s_star").items():
        ax.semilogy(_f(grp, "n_b"), _f(grp, "p_i_over_k"), marker="o", ms=3, label=f"s*={ss}")
    ax.set_xlabel("$N_B$")
    ax.set_ylabel("$P_I/K$")
    ax.legend(ncol=2)


def plot_rate_curve(rows, ax):
    for curve, grp in _group(rows, "curve").items():
        ax.plot(_f(grp, "k"), _f(grp, "rate"), marker=".", label=curve)
    ax.set_xlabel("k")
    ax.set_ylabel("code rate")
    ax.legend()


def plot_identification(rows, ax):
    names = [r["metric"] for r in rows]
    vals = _f(rows, "value")
    refs = _f(rows, "reference")
    cis = _f(rows, "ci")
    x = np.arange(len(rows))
    ax.bar(x - 0.2, vals, 0.4, label="empirical")
    ax.bar(x + 0.2, refs, 0.4, yerr=cis, label="reference")
    ax.set_xticks(x, names)
    ax.legend()


PLOTTERS = {
    "erd_roc": plot_erd_roc,
    "delta_f_grid": plot_delta_f_grid,
    "nmse_cdf": plot_nmse_cdf,
    "nmse_vs_snr": plot_nmse_vs_snr,
    "tradeoff_curve": plot_tradeoff_curve,
    "iep_surface": plot_iep_surface,
    "rate_curve": plot_rate_curve,
    "identification": plot_identification,
}


def render(scenario: str, rows: Sequence[dict], path: str) -> str:
    """Draw the scenario's figure into ``path`` (format from the extension)."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        try:
            if rows:
                PLOTTERS[scenario](list(rows), ax)
            else:
                ax.text(0.5, 0.5, "no records", ha="center", va="center", transform=ax.transAxes)
            ax.set_title(scenario.replace("_", " "))
            os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
            fig.savefig(path, metadata={"Software": None} if path.endswith(".png") else None)
        finally:
            plt.close(fig)
    return path
