"""Report emission: delimited tables, PGM heatmaps, and rendered figures.

Every report lands as data first (CSV, PGM); alongside the delimited
output the same content is rendered to PNG with matplotlib so results can
be eyeballed without further tooling. CSV writing uses repr() for floats,
which round-trips exactly and keeps repeated runs byte identical.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: str | Path, header: list[str], rows: list[tuple]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(format_cell(v) for v in row) + "\n")


def write_pgm(path: str | Path, matrix: np.ndarray) -> None:
    """Binary PGM heatmap: [min, max] mapped linearly onto [0, 255]."""
    m = np.asarray(matrix, dtype=np.float64)
    lo, hi = float(m.min()), float(m.max())
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    bytes_img = np.clip(np.round((m - lo) * scale), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{m.shape[1]} {m.shape[0]}\n255\n".encode("ascii"))
        fh.write(bytes_img.tobytes())


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_heatmap(path: str | Path, matrix: np.ndarray, title: str = "") -> None:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(5.0, 4.2))
    im = ax.imshow(matrix, cmap="viridis", interpolation="nearest")
    fig.colorbar(im, ax=ax, fraction=0.046)
    if title:
        ax.set_title(title)
    ax.set_xlabel("sample index")
    ax.set_ylabel("sample index")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_sigma_scan(
    path: str | Path,
    scan: list[tuple[float, float]],
    sigma_psd: float | None = None,
) -> None:
    plt = _plt()
    sigmas = [s for s, _ in scan]
    lams = [l for _, l in scan]
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    ax.semilogx(sigmas, lams, marker="o", ms=3.5, lw=1.2)
    ax.axhline(0.0, color="0.4", lw=0.8, ls="--")
    if sigma_psd is not None:
        ax.axvline(sigma_psd, color="firebrick", lw=1.0, ls=":", label=f"PSD edge {sigma_psd:.3g}")
        ax.legend(frameon=False)
    ax.set_xlabel(r"bandwidth $\sigma$")
    ax.set_ylabel("minimum eigenvalue")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_error_bars(
    path: str | Path,
    labels: list[str],
    means: list[float],
    stds: list[float],
    ylabel: str = "test error (%)",
) -> None:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(max(4.0, 1.1 * len(labels)), 4.0))
    xs = np.arange(len(labels))
    ax.bar(xs, means, yerr=stds, capsize=4, color="#4878a8")
    ax.set_xticks(xs)
    ax.set_xticklabels(labels, rotation=20, ha="right")
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_sweep(
    path: str | Path,
    rows: list[tuple[int, float, float]],
    label: str,
) -> None:
    """Error-versus-training-size curve with standard-deviation bars."""
    plt = _plt()
    sizes = [r[0] for r in rows]
    means = [r[1] for r in rows]
    stds = [r[2] for r in rows]
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    ax.errorbar(sizes, means, yerr=stds, marker="o", ms=4, lw=1.2, capsize=4, label=label)
    ax.set_xlabel("training set size")
    ax.set_ylabel("mean test error (%)")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
