"""Figures for CLI runs, rendered off-screen to PNG.

Files carry no timestamp or software metadata, so repeated runs write
identical bytes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)
    return path


def relaxation_figure(t, cov, s_vn, s_lin, path, tau=None) -> Path:
    """Second moments and both entropies against time."""
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6.4, 6.0), sharex=True)
    ax1.plot(t, cov[:, 0], label="V_xx")
    ax1.plot(t, cov[:, 1], label="V_pp")
    ax1.plot(t, cov[:, 2], label="V_xp")
    ax1.set_yscale("symlog", linthresh=1.0)
    ax1.set_ylabel("second moments")
    ax1.legend(loc="upper right")
    ax2.plot(t, s_vn, label="von Neumann S")
    ax2.plot(t, s_lin, label="linear s")
    ax2.set_ylabel("entropy (nats)")
    ax2.set_xlabel("time (1/omega)")
    ax2.legend(loc="upper right")
    if tau is not None and np.isfinite(tau):
        for ax in (ax1, ax2):
            ax.axvline(tau, color="0.6", lw=0.8, ls="--")
    fig.tight_layout()
    return _save(fig, path)


def trajectory_figure(t, mean, cov, path) -> Path:
    """Conditioned means with a one-sigma position band."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    sd = np.sqrt(cov[:, 0])
    ax.fill_between(t, mean[:, 0] - sd, mean[:, 0] + sd, color="C0", alpha=0.25, lw=0)
    ax.plot(t, mean[:, 0], color="C0", label="x mean")
    ax.plot(t, mean[:, 1], color="C1", label="p mean")
    ax.set_xlabel("time (1/omega)")
    ax.legend(loc="upper right")
    fig.tight_layout()
    return _save(fig, path)


def observers_figure(t, error, v_b, v_a, path, tau=None) -> Path:
    """Expected squared mean difference against the covariance gap."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.semilogy(t, np.maximum(error[:, 0], 1e-300), label="E[e_x^2]")
    ax.semilogy(t, np.maximum(error[:, 1], 1e-300), label="E[e_p^2]")
    ax.semilogy(t, v_b[:, 0], ls="--", label="V_xx (B)")
    gap = v_b[:, 0] - v_a[:, 0]
    ax.semilogy(t, np.where(gap > 0, gap, np.nan), ls=":", label="V_xx (B) - V_xx (A)")
    if tau is not None and np.isfinite(tau):
        ax.axvline(tau, color="0.6", lw=0.8, ls="--")
    ax.set_xlabel("time (1/omega)")
    ax.legend(loc="upper right")
    fig.tight_layout()
    return _save(fig, path)


def comparison_figure(t, diff, path) -> Path:
    """Max abs difference between two propagated paths."""
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    ax.semilogy(t, np.maximum(diff, 1e-18))
    ax.set_xlabel("time (1/omega)")
    ax.set_ylabel("max |quantum - classical|")
    fig.tight_layout()
    return _save(fig, path)
