"""Figure rendering for the evaluation path (headless matplotlib).

Each helper writes one PNG to disk and returns the path. Figures
complement the delimited metric records: intensity profiles show depth
attenuation along x, spectra show frequency content of the central slice.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["save_profile_figure", "save_spectrum_figure", "save_slice_figure"]


def save_profile_figure(path, profiles: dict, title: str = "intensity profile") -> Path:
    """Overlay depth-integrated lateral profiles, one line per named volume."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6.0, 3.4))
    for name, series in profiles.items():
        ax.plot(np.asarray(series, dtype=float), label=str(name), linewidth=1.2)
    ax.set_xlabel("x [voxel]")
    ax.set_ylabel("z-integrated intensity")
    ax.set_title(title)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_spectrum_figure(path, spectra: dict, title: str = "intensity spectrum") -> Path:
    """Log-scaled Fourier magnitude panels, one per named volume."""
    path = Path(path)
    n = len(spectra)
    fig, axes = plt.subplots(1, n, figsize=(3.2 * n, 3.4), squeeze=False)
    for ax, (name, mag) in zip(axes[0], spectra.items()):
        ax.imshow(np.log1p(np.asarray(mag, dtype=float)), cmap="magma", aspect="auto")
        ax.set_title(str(name), fontsize=9)
        ax.set_xticks([])
        ax.set_yticks([])
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_slice_figure(path, volume, title: str = "central slice") -> Path:
    """Grayscale center xy slice of one volume, for quick inspection."""
    path = Path(path)
    data = np.asarray(volume.data, dtype=float)
    mid = data[data.shape[0] // 2]
    fig, ax = plt.subplots(figsize=(4.2, 4.2))
    ax.imshow(mid, cmap="gray")
    ax.set_title(title, fontsize=9)
    ax.set_xticks([])
    ax.set_yticks([])
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
