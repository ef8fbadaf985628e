"""Image-quality and segmentation-quality measures, plus frequency exports.

All pairwise measures treat the first argument as the reference: NRMSE
normalizes by the reference value range, and the SSIM stabilizers use the
reference range as the dynamic range.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np
from scipy import ndimage

from .volume import LabelVolume, VoxelVolume, dilate

__all__ = [
    "QualityReport",
    "SegEvalConfig",
    "nrmse",
    "ssim",
    "zncc",
    "tolerant_iou",
    "instance_iou",
    "segmentation_scores",
    "intensity_profile",
    "intensity_spectrum",
    "quality_report",
]


def _paired(a: VoxelVolume, b: VoxelVolume):
    x = np.asarray(a.data, dtype=np.float64)
    y = np.asarray(b.data, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"volume shapes differ: {x.shape} vs {y.shape}")
    return x, y


def nrmse(reference: VoxelVolume, other: VoxelVolume) -> float:
    """Root-mean-square error normalized by the reference value range."""
    x, y = _paired(reference, other)
    rng = x.max() - x.min()
    if rng == 0:
        raise ValueError("reference volume is constant, NRMSE is undefined")
    return float(np.sqrt(np.mean((x - y) ** 2)) / rng)


def ssim(reference: VoxelVolume, other: VoxelVolume, window: int = 7, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean local structural similarity over a cubic sliding window.

    Local means, variances and covariance come from uniform filters of the
    given odd window size (sample-normalized, N - 1); the dynamic range is
    the reference range. The window margin is cropped before averaging so
    border effects do not bias the score.
    """
    if window < 2 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 3, got {window}")
    x, y = _paired(reference, other)
    if min(x.shape) < window:
        raise ValueError(f"volume dims {x.shape} are smaller than the window {window}")

    drange = x.max() - x.min()
    if drange == 0:
        drange = 1.0
    c1 = (k1 * drange) ** 2
    c2 = (k2 * drange) ** 2

    size = (window, window, window)
    mu_x = ndimage.uniform_filter(x, size=size)
    mu_y = ndimage.uniform_filter(y, size=size)
    xx = ndimage.uniform_filter(x * x, size=size)
    yy = ndimage.uniform_filter(y * y, size=size)
    xy = ndimage.uniform_filter(x * y, size=size)

    n = window ** 3
    norm = n / (n - 1.0)
    var_x = norm * (xx - mu_x * mu_x)
    var_y = norm * (yy - mu_y * mu_y)
    cov = norm * (xy - mu_x * mu_y)

    s = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / (
        (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    )
    pad = window // 2
    core = s[pad:-pad, pad:-pad, pad:-pad]
    return float(core.mean())


def zncc(a: VoxelVolume, b: VoxelVolume) -> float:
    """Pearson correlation of the flattened volumes."""
    x, y = _paired(a, b)
    x = x.reshape(-1)
    y = y.reshape(-1)
    # the range test catches constant volumes whose float std is a rounding
    # residue rather than an exact zero
    if x.max() == x.min() or y.max() == y.min():
        raise ValueError("zero-variance volume, correlation is undefined")
    sx = x.std()
    sy = y.std()
    if sx == 0 or sy == 0:
        raise ValueError("zero-variance volume, correlation is undefined")
    return float(np.mean((x - x.mean()) * (y - y.mean())) / (sx * sy))


def tolerant_iou(
    prediction: VoxelVolume,
    truth: VoxelVolume,
    threshold: float,
    tolerance_voxels: int,
) -> float:
    """Overlap score forgiving boundary misplacement up to a voxel tolerance.

    The prediction is binarized at ``threshold`` (values >= threshold are
    positive). Each side is matched against the other side dilated by the
    tolerance radius:

        (|P & dilate(T)| + |T & dilate(P)|) / (|P| + |T|)

    Perfectly aligned masks score 1 at any tolerance; a wall shifted by no
    more than the tolerance still scores 1. Two empty masks score 1; an
    empty truth against a nonempty prediction scores 0.
    """
    if tolerance_voxels < 0:
        raise ValueError(f"tolerance must be >= 0, got {tolerance_voxels}")
    p = np.asarray(prediction.data, dtype=np.float64) >= threshold
    t = np.asarray(truth.data) > 0
    if p.shape != t.shape:
        raise ValueError(f"volume shapes differ: {p.shape} vs {t.shape}")
    n_p = int(p.sum())
    n_t = int(t.sum())
    if n_p == 0 and n_t == 0:
        return 1.0
    if n_t == 0 or n_p == 0:
        return 0.0
    spacing = truth.spacing
    t_dil = dilate(VoxelVolume(t.astype(np.uint8), spacing=spacing), tolerance_voxels).data.astype(bool)
    p_dil = dilate(VoxelVolume(p.astype(np.uint8), spacing=spacing), tolerance_voxels).data.astype(bool)
    hits = int((p & t_dil).sum()) + int((t & p_dil).sum())
    return float(hits / (n_p + n_t))


@dataclass
class SegEvalConfig:
    """Per-class binarization thresholds and misplacement tolerances.

    Probability maps for the background, membrane, and centroid classes are
    binarized at their own thresholds; overlap scoring then forgives
    misplacement up to the class tolerance (tight for area-like classes,
    loose for point-like centroids).
    """

    t_background: float = 0.1
    t_membrane: float = 0.4
    t_centroid: float = 0.2
    tol_background: int = 1
    tol_membrane: int = 1
    tol_centroid: int = 5

    def __post_init__(self):
        for name in ("t_background", "t_membrane", "t_centroid"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must be in (0, 1), got {v}")
        for name in ("tol_background", "tol_membrane", "tol_centroid"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def for_class(self, name: str):
        """(threshold, tolerance) for a class name."""
        if name not in ("background", "membrane", "centroid"):
            raise ValueError(f"unknown class {name!r}")
        return getattr(self, f"t_{name}"), getattr(self, f"tol_{name}")


def segmentation_scores(
    predictions: dict, truths: dict, config: SegEvalConfig = None
) -> dict:
    """Tolerant IoU per class for matching prediction/truth volume dicts.

    Both dicts are keyed by class name (any subset of background, membrane,
    centroid); each prediction is scored against its truth with the class's
    threshold and tolerance.
    """
    if config is None:
        config = SegEvalConfig()
    scores = {}
    for name, pred in predictions.items():
        if name not in truths:
            raise ValueError(f"no truth volume for class {name!r}")
        threshold, tolerance = config.for_class(name)
        scores[name] = tolerant_iou(pred, truths[name], threshold, tolerance)
    return scores


def instance_iou(prediction: LabelVolume, truth: LabelVolume) -> float:
    """Mean IoU of greedily matched instances.

    Truth instances are visited largest first (ties by lower label) and
    each claims the unclaimed prediction instance with the highest IoU;
    truth instances left without a positive-overlap partner contribute 0.
    An empty truth labeling is an error.
    """
    p = np.asarray(prediction.data).reshape(-1).astype(np.int64)
    t = np.asarray(truth.data).reshape(-1).astype(np.int64)
    if p.shape != t.shape:
        raise ValueError("label volumes differ in size")
    t_labels, t_sizes = np.unique(t[t > 0], return_counts=True)
    if t_labels.size == 0:
        raise ValueError("truth labeling is empty")
    p_labels, p_sizes = np.unique(p[p > 0], return_counts=True)
    p_size = dict(zip(p_labels.tolist(), p_sizes.tolist()))

    both = (t > 0) & (p > 0)
    pair_keys, pair_counts = np.unique(
        t[both] * (p.max() + 1) + p[both], return_counts=True
    )
    overlap = {}
    for key, count in zip(pair_keys.tolist(), pair_counts.tolist()):
        tl, pl = divmod(key, int(p.max() + 1))
        overlap.setdefault(tl, {})[pl] = count

    order = sorted(
        zip(t_labels.tolist(), t_sizes.tolist()), key=lambda kv: (-kv[1], kv[0])
    )
    claimed = set()
    total = 0.0
    for tl, t_sz in order:
        best_iou = 0.0
        best_pl = None
        for pl, inter in sorted(overlap.get(tl, {}).items()):
            if pl in claimed:
                continue
            iou = inter / (t_sz + p_size[pl] - inter)
            if iou > best_iou:
                best_iou = iou
                best_pl = pl
        if best_pl is not None:
            claimed.add(best_pl)
            total += best_iou
    return float(total / t_labels.size)


def intensity_profile(volume: VoxelVolume) -> np.ndarray:
    """Depth-integrated lateral profile of the central slice.

    Takes the xz plane at the central y index and sums it over z, giving a
    series of length nx. Useful for judging depth attenuation along x.
    """
    data = np.asarray(volume.data, dtype=np.float64)
    ny = data.shape[1]
    xz = data[:, ny // 2, :]
    return xz.sum(axis=0)


def intensity_spectrum(volume: VoxelVolume) -> np.ndarray:
    """2D Fourier magnitude of the central xz slice, zero frequency centered.

    The linear magnitude is returned (Parseval-testable); exports should
    apply a log transform for display.
    """
    data = np.asarray(volume.data, dtype=np.float64)
    ny = data.shape[1]
    xz = data[:, ny // 2, :]
    return np.abs(np.fft.fftshift(np.fft.fft2(xz)))


@dataclass
class QualityReport:
    """Pairwise image-quality summary for one (reference, candidate) pair."""

    nrmse: float
    ssim: float
    zncc: float

    def as_dict(self) -> dict:
        return asdict(self)


def quality_report(reference: VoxelVolume, other: VoxelVolume, window: int = 7) -> QualityReport:
    return QualityReport(
        nrmse=nrmse(reference, other),
        ssim=ssim(reference, other, window=window),
        zncc=zncc(reference, other),
    )
