"""Planar-curve primitives: resampling, Gaussian scale space, corner response, peak picking."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage


@dataclass(frozen=True, eq=False)
class PlanarCurve:
    """Ordered 2D point sequence in pixel units; closed curves wrap implicitly."""

    points: np.ndarray
    closed: bool = False

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError(f"expected an (n, 2) point array, got shape {pts.shape}")
        if pts.shape[0] < 3:
            raise ValueError("curve needs at least 3 points")
        if not np.isfinite(pts).all():
            raise ValueError("curve contains non-finite coordinates")
        if (pts[1:] == pts[:-1]).all(axis=1).any():
            raise ValueError("curve has consecutive duplicate points")
        if self.closed and (pts[0] == pts[-1]).all():
            raise ValueError("closed curve must not repeat its first point at the end")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def length(self) -> float:
        """Total polyline arc length, including the wrap segment when closed."""
        return float(self.cumulative_arc()[-1])

    def cumulative_arc(self) -> np.ndarray:
        """Arc length at each vertex; closed curves get one extra entry for the wrap."""
        pts = self.points
        if self.closed:
            pts = np.vstack([pts, pts[:1]])
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(seg)])

    def reverse(self) -> "PlanarCurve":
        return PlanarCurve(self.points[::-1].copy(), self.closed)


@dataclass(frozen=True)
class ScaleSpaceParams:
    """Band-pass parameters: base smoothing sigma, the coarse/fine sigma ratio,
    and the resolution the curve is resampled to before filtering."""

    sigma: float
    sigma_ratio: float
    resample_len: int

    def __post_init__(self):
        if self.sigma <= 0 or self.sigma_ratio <= 0:
            raise ValueError("sigma and sigma_ratio must be positive")
        if self.resample_len < 3:
            raise ValueError("resample_len must be at least 3")


@dataclass(frozen=True)
class Keypoint:
    """A salient sample on a filtered curve, ranked by peak prominence."""

    index: int
    response: float
    prominence: float


def resample(curve: PlanarCurve, n: int) -> PlanarCurve:
    """Resample to n points uniformly spaced in arc length.

    Open curves keep their endpoints exactly; closed curves keep the first
    vertex as the starting sample and omit the duplicate wrap point.
    """
    if n < 3:
        raise ValueError("resample target must be at least 3 points")
    arc = curve.cumulative_arc()
    total = arc[-1]
    if total <= 0.0:
        raise ValueError("cannot resample a zero-length curve")
    pts = curve.points
    if curve.closed:
        pts = np.vstack([pts, pts[:1]])
        targets = np.arange(n, dtype=np.float64) * (total / n)
    else:
        targets = np.linspace(0.0, total, n)
    out = np.column_stack([
        np.interp(targets, arc, pts[:, 0]),
        np.interp(targets, arc, pts[:, 1]),
    ])
    if not curve.closed:
        out[0] = curve.points[0]
        out[-1] = curve.points[-1]
    return PlanarCurve(out, curve.closed)


def _gaussian_kernel(sigma: float) -> tuple[np.ndarray, int]:
    # Truncated at 4*sigma and renormalised to unit sum for determinism.
    radius = max(1, int(4.0 * sigma + 0.5))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (x / sigma) ** 2)
    return kernel / kernel.sum(), radius


def _pad_rows(rows: np.ndarray, radius: int, closed: bool) -> np.ndarray:
    n = rows.shape[1]
    if closed:
        idx = np.arange(-radius, n + radius) % n
        return rows[:, idx]
    if radius >= n:
        raise ValueError(f"kernel radius {radius} too large for open signal of length {n}")
    # Point-symmetric (odd) extension about the endpoint values: straight
    # segments stay straight, so open ends contribute no spurious response.
    left = 2.0 * rows[:, :1] - rows[:, radius:0:-1]
    right = 2.0 * rows[:, -1:] - rows[:, -2:-radius - 2:-1]
    return np.concatenate([left, rows, right], axis=1)


def smooth_rows(rows: np.ndarray, sigma: float, closed: bool) -> np.ndarray:
    """Gaussian-smooth each row of a 2D array along axis 1."""
    kernel, radius = _gaussian_kernel(sigma)
    padded = _pad_rows(np.asarray(rows, dtype=np.float64), radius, closed)
    out = ndimage.convolve1d(padded, kernel, axis=1, mode="constant")
    return out[:, radius:radius + rows.shape[1]]


def gaussian_smooth(signal: np.ndarray, sigma: float, closed: bool = False) -> np.ndarray:
    """Smooth a 1D signal with a unit-sum Gaussian kernel.

    Closed signals are convolved circularly; open signals are extended by
    point reflection about their end values before convolution.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    sig = np.asarray(signal, dtype=np.float64)
    if sig.ndim != 1:
        raise ValueError("expected a 1D signal")
    return smooth_rows(sig[None, :], sigma, closed)[0]


def dog_response(curve: PlanarCurve, params: ScaleSpaceParams) -> np.ndarray:
    """Difference-of-Gaussians corner response along the curve.

    Per-sample squared difference between the coarse- and fine-smoothed
    coordinates, summed over x and y. The curve is expected to already be
    resampled to params.resample_len.
    """
    coords = curve.points.T  # (2, n)
    fine = smooth_rows(coords, params.sigma, curve.closed)
    coarse = smooth_rows(coords, params.sigma * params.sigma_ratio, curve.closed)
    diff = coarse - fine
    return diff[0] ** 2 + diff[1] ** 2


def prominence_peaks(signal: np.ndarray, n: int) -> list[Keypoint]:
    """Interior local maxima ranked by prominence, strongest first, at most n.

    The prominence of a peak is its height above the higher of the two
    interval minima found by walking out to the nearest strictly higher
    sample on each side; an interval that runs off the end of the signal
    has its minimum replaced by zero. Ties are broken by lower index.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    sig = np.asarray(signal, dtype=np.float64)
    if sig.ndim != 1:
        raise ValueError("expected a 1D signal")
    size = sig.shape[0]
    peaks: list[Keypoint] = []
    for i in range(1, size - 1):
        h = sig[i]
        if not (h > sig[i - 1] and h > sig[i + 1]):
            continue
        min_left = np.inf
        j = i - 1
        while j >= 0 and sig[j] <= h:
            min_left = min(min_left, sig[j])
            j -= 1
        if j < 0:
            min_left = 0.0
        min_right = np.inf
        j = i + 1
        while j < size and sig[j] <= h:
            min_right = min(min_right, sig[j])
            j += 1
        if j >= size:
            min_right = 0.0
        peaks.append(Keypoint(i, float(h), float(h - max(min_left, min_right))))
    peaks.sort(key=lambda kp: (-kp.prominence, kp.index))
    return peaks[:n]


def detect_keypoints(
    curve: PlanarCurve,
    n: int,
    params: ScaleSpaceParams,
    include_endpoints: bool = False,
    min_prominence_ratio: float = 1e-9,
) -> list[Keypoint]:
    """Resample, filter, and return the n most prominent corner keypoints.

    Indices refer to the resampled curve. Peaks whose prominence falls below
    min_prominence_ratio times the maximum response are treated as numerical
    noise (a flat response otherwise sprouts spurious one-ulp maxima). With
    include_endpoints, the first and last samples of an open curve are
    appended after the ranked peaks.
    """
    sampled = resample(curve, params.resample_len)
    response = dog_response(sampled, params)
    peaks = prominence_peaks(response, n)
    # A flat response still produces a "global max" whose end-zeroed intervals
    # give it full-height prominence; require genuine variation as well.
    floor = min_prominence_ratio * float(response.max())
    spread = float(response.max() - response.min())
    peaks = [kp for kp in peaks if kp.prominence > floor and spread > floor]
    if include_endpoints and not curve.closed:
        last = params.resample_len - 1
        peaks.append(Keypoint(0, float(response[0]), 0.0))
        peaks.append(Keypoint(last, float(response[last]), 0.0))
    return peaks


def map_to_source_index(sample_index: int, n_samples: int, source: PlanarCurve) -> int:
    """Nearest source vertex, by arc length, of a sample on the resampled grid."""
    arc = source.cumulative_arc()
    total = arc[-1]
    if source.closed:
        target = sample_index * total / n_samples
    else:
        target = sample_index * total / (n_samples - 1)
    idx = int(np.argmin(np.abs(arc[: len(source)] - target)))
    return idx
