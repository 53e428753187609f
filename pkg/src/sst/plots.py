"""Batch SVG figures for monitoring and evaluation outputs."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import IoFailure  # noqa: E402

# stable element ids so reruns produce identical files
plt.rcParams["svg.hashsalt"] = "sst"


def _save(fig, path):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, format="svg", metadata={"Date": None})
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    finally:
        plt.close(fig)
    return path


def plot_monitor(records, path):
    """Losses and similarity indices per generator iteration."""
    it = np.array([r.iteration for r in records])
    fig, axes = plt.subplots(3, 1, figsize=(7, 8), sharex=True)
    axes[0].plot(it, [r.total_generator_loss for r in records], label="generator")
    axes[0].plot(it, [r.total_critic_loss for r in records], label="critic")
    axes[0].set_ylabel("loss")
    axes[1].plot(it, [r.fid_alpha for r in records], label="alpha")
    axes[1].plot(it, [r.fid_beta for r in records], label="beta")
    axes[1].set_ylabel("FID")
    axes[2].plot(it, [r.mmsc_alpha for r in records], label="alpha")
    axes[2].plot(it, [r.mmsc_beta for r in records], label="beta")
    axes[2].set_ylabel("MMSC")
    axes[2].set_ylim(0, 1.05)
    axes[2].set_xlabel("generator iteration")
    for ax in axes:
        ax.legend(loc="best", fontsize="small")
        ax.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, path)


def plot_mmsc_bars(report, path):
    values = report.channel_mmsc
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.bar(np.arange(1, len(values) + 1), values, color="tab:blue")
    ax.axhline(report.average_mmsc, color="k", ls="--", lw=1, label=f"mean {report.average_mmsc:.3f}")
    ax.set_xlabel("channel")
    ax.set_ylabel("MMSC")
    ax.set_ylim(0, 1.05)
    ax.legend(loc="lower right")
    fig.tight_layout()
    return _save(fig, path)


def plot_singular_values(report, path, f_max=None):
    """First singular value of both records with the picked peaks."""
    svs_real, svs_syn = report.spectra
    fig, ax = plt.subplots(figsize=(7, 3.5))
    for svs, name, freqs in ((svs_real, "real", [p.f_real for p in report.pairs]),
                             (svs_syn, "synthetic", [p.f_synthetic for p in report.pairs
                                                     if p.f_synthetic is not None])):
        line, = ax.semilogy(svs.frequencies, svs.first, label=name, lw=1)
        idx = np.searchsorted(svs.frequencies, freqs)
        ax.plot(svs.frequencies[idx], svs.first[idx], "o", color=line.get_color(), ms=4)
    ax.set_xlim(0, f_max or svs_real.frequencies[-1])
    ax.set_xlabel("frequency [Hz]")
    ax.set_ylabel("first singular value")
    ax.legend(loc="best")
    ax.grid(alpha=0.3, which="both")
    fig.tight_layout()
    return _save(fig, path)


def plot_mode_shapes(report, path):
    pairs = [p for p in report.pairs if p.shape_real is not None]
    n = max(1, len(pairs))
    fig, axes = plt.subplots(1, n, figsize=(3.2 * n, 3.2), squeeze=False)
    for ax, p in zip(axes[0], pairs):
        dof = np.arange(1, p.shape_real.size + 1)
        ax.plot(dof, p.shape_real, "o-", label="real")
        if p.shape_synthetic is not None:
            syn = p.shape_synthetic * np.sign(np.dot(p.shape_real, p.shape_synthetic) or 1.0)
            ax.plot(dof, syn, "s--", label="synthetic")
            ax.set_title(f"mode {p.order}: MAC {p.mac:.3f}", fontsize="small")
        else:
            ax.set_title(f"mode {p.order}: unpaired", fontsize="small")
        ax.axhline(0, color="0.6", lw=0.5)
        ax.set_xlabel("channel")
    axes[0][0].legend(loc="best", fontsize="small")
    fig.tight_layout()
    return _save(fig, path)
