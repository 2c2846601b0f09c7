"""Matplotlib renderings of error maps and pipeline diagnostics.

Figures are written straight to files (Agg backend); the PPM color map uses
the same normalization so both artifacts agree visually.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib import cm, colors

from .metrics import ErrorReport
from .motion import RoundDiagnostics

_ERROR_CMAP = "coolwarm"


def _error_limits(error_map: np.ndarray, vmax: float | None) -> float:
    if vmax is not None:
        return vmax
    finite = error_map[np.isfinite(error_map)]
    if finite.size == 0:
        return 1.0
    limit = float(np.max(np.abs(finite)))
    return limit if limit > 0 else 1.0


def error_map_rgb(error_map: np.ndarray, vmax: float | None = None) -> np.ndarray:
    """Diverging color rendering of a signed error map as uint8 RGB.

    Invalid (NaN) pixels are black.
    """
    limit = _error_limits(error_map, vmax)
    norm = colors.Normalize(vmin=-limit, vmax=limit)
    mapper = cm.get_cmap(_ERROR_CMAP)
    finite = np.isfinite(error_map)
    rgba = mapper(norm(np.where(finite, error_map, 0.0)))
    rgb = (rgba[..., :3] * 255.0).round().astype(np.uint8)
    rgb[~finite] = 0
    return rgb


def save_error_map_figure(report: ErrorReport, path, title: str = "", vmax: float | None = None) -> None:
    """Error map with colorbar and summary statistics, written to ``path``."""
    limit = _error_limits(report.error_map, vmax)
    fig, ax = plt.subplots(figsize=(7.0, 4.8))
    im = ax.imshow(report.error_map, cmap=_ERROR_CMAP, vmin=-limit, vmax=limit)
    fig.colorbar(im, ax=ax, label="signed error (mm)")
    stats = (
        f"mean {report.mean:.3f} mm, std {report.std:.3f} mm, "
        f"rmse {report.rmse:.3f} mm, n={report.count}"
    )
    ax.set_title(f"{title}\n{stats}" if title else stats)
    ax.set_xlabel("camera column (px)")
    ax.set_ylabel("camera row (px)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_diagnostics_figure(diagnostics: list[RoundDiagnostics], path) -> None:
    """Round-by-round convergence plot of the correction pipeline."""
    rounds = [d.round_index for d in diagnostics]
    moved = [d.rmse_mm for d in diagnostics]
    discarded = [d.discarded_px for d in diagnostics]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.0, 3.6))
    ax1.plot(rounds, moved, marker="o")
    ax1.set_xlabel("round")
    ax1.set_ylabel("RMS point movement (mm)")
    ax1.set_title("convergence")
    ax2.plot(rounds, discarded, marker="s", color="tab:orange")
    ax2.set_xlabel("round")
    ax2.set_ylabel("discarded pixels")
    ax2.set_title("discards")
    for ax in (ax1, ax2):
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_phase_figure(phase: np.ndarray, path, title: str = "phase") -> None:
    """Quick-look rendering of a phase or depth map."""
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    im = ax.imshow(phase, cmap="twilight")
    fig.colorbar(im, ax=ax)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
