"""Biometric contour encoding: combinatorial subsections and two descriptor
families, the multi-scale DoG magnitude and endpoint-aligned boundary normals.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .curves import (
    PlanarCurve,
    ScaleSpaceParams,
    detect_keypoints,
    resample,
    smooth_rows,
)

log = logging.getLogger(__name__)

DOG = "dog"
NORMAL = "normal"

ENCODING_PARAMS = ScaleSpaceParams(sigma=2.0, sigma_ratio=8.0, resample_len=1024)
INTERIOR_KEYPOINTS = 48
DESCRIPTOR_SCALES = (1.0, 2.0, 4.0, 8.0)
DESCRIPTOR_SAMPLES = 256
DOG_DESCRIPTOR_RATIO = 2.0
DEGENERATE_ENERGY = 1e-12

REFERENCE = "reference"
QUERY = "query"


@dataclass(frozen=True)
class EncodingSettings:
    """Everything that determines the descriptor set of a fin."""

    n_interior: int = INTERIOR_KEYPOINTS
    sigma: float = 2.0
    sigma_ratio: float = 8.0
    resample_len: int = 1024
    scales: tuple[float, ...] = DESCRIPTOR_SCALES
    descriptor_samples: int = DESCRIPTOR_SAMPLES
    dog_ratio: float = DOG_DESCRIPTOR_RATIO

    @property
    def params(self) -> ScaleSpaceParams:
        return ScaleSpaceParams(self.sigma, self.sigma_ratio, self.resample_len)

    def to_dict(self) -> dict:
        return {
            "n_interior": self.n_interior,
            "sigma": self.sigma,
            "sigma_ratio": self.sigma_ratio,
            "resample_len": self.resample_len,
            "scales": list(self.scales),
            "descriptor_samples": self.descriptor_samples,
            "dog_ratio": self.dog_ratio,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EncodingSettings":
        d = dict(d)
        d["scales"] = tuple(float(s) for s in d["scales"])
        return cls(**d)


@dataclass(frozen=True, eq=False)
class FinContour:
    """Open fin outline running leading edge -> tip -> trailing edge."""

    curve: PlanarCurve
    tip_index: int
    source_quality: float | None = None

    def __post_init__(self):
        if self.curve.closed:
            raise ValueError("fin contour must be an open curve")
        if not 0 < self.tip_index < len(self.curve) - 1:
            raise ValueError("tip_index must be strictly interior")


def locate_tip(curve: PlanarCurve) -> int:
    """Sample of maximum perpendicular distance from the endpoint chord."""
    pts = curve.points
    chord = pts[-1] - pts[0]
    norm = np.linalg.norm(chord)
    if norm < 1e-12:
        raise ValueError("cannot locate tip: endpoints coincide")
    d = pts - pts[0]
    dist = np.abs(d[:, 0] * chord[1] - d[:, 1] * chord[0]) / norm
    return int(np.clip(np.argmax(dist), 1, len(pts) - 2))


@dataclass(frozen=True)
class Subsection:
    """Arc between two keypoints on the canonical resampled fin contour."""

    start_kp: int
    end_kp: int
    length_fraction: float
    direction: str = "forward"

    def __post_init__(self):
        if not self.start_kp < self.end_kp:
            raise ValueError("subsection requires start_kp < end_kp")
        if not 0.0 < self.length_fraction <= 1.0:
            raise ValueError("length_fraction must be in (0, 1]")


@dataclass(frozen=True, eq=False)
class BiometricDescriptor:
    vector: np.ndarray
    kind: str                  # DOG or NORMAL
    scale: float
    subsection: Subsection
    class_label: str | None = None
    degenerate: bool = False


@dataclass(eq=False)
class DescriptorBlock:
    """All descriptors of one (kind, scale) for one fin, rows aligned across scales."""

    vectors: np.ndarray      # (n_rows, dim) unit rows unless degenerate
    sub_index: np.ndarray    # (n_rows,) index into FinEncoding.subsections
    reversed_dir: np.ndarray # (n_rows,) bool
    degenerate: np.ndarray   # (n_rows,) bool


@dataclass(eq=False)
class FinEncoding:
    curve: PlanarCurve          # canonical uniformly resampled open contour
    tip_index: int              # on the canonical grid
    keypoints: np.ndarray       # sorted sample indices
    subsections: list[Subsection]
    blocks: dict[tuple[str, float], DescriptorBlock]
    role: str

    @property
    def descriptors(self) -> list[BiometricDescriptor]:
        out = []
        for (kind, scale), block in self.blocks.items():
            for row in range(block.vectors.shape[0]):
                sub = self.subsections[block.sub_index[row]]
                if block.reversed_dir[row]:
                    sub = Subsection(sub.start_kp, sub.end_kp, sub.length_fraction, "reverse")
                out.append(
                    BiometricDescriptor(
                        vector=block.vectors[row],
                        kind=kind,
                        scale=scale,
                        subsection=sub,
                        degenerate=bool(block.degenerate[row]),
                    )
                )
        return out


def canonical_form(fin: FinContour, params: ScaleSpaceParams = ENCODING_PARAMS) -> tuple[PlanarCurve, int]:
    """Resample to the encoding resolution; map the tip index by arc length."""
    sampled = resample(fin.curve, params.resample_len)
    arc = fin.curve.cumulative_arc()
    frac = arc[fin.tip_index] / arc[-1]
    tip = int(round(frac * (params.resample_len - 1)))
    return sampled, int(np.clip(tip, 1, params.resample_len - 2))


def contour_keypoints(
    fin: FinContour,
    n_interior: int = INTERIOR_KEYPOINTS,
    params: ScaleSpaceParams = ENCODING_PARAMS,
) -> np.ndarray:
    """Sorted keypoint sample indices: n most prominent maxima plus both ends."""
    kps = detect_keypoints(fin.curve, n_interior, params, include_endpoints=True)
    idx = np.unique([kp.index for kp in kps])
    if len(idx) < n_interior + 2:
        log.info("contour yields %d keypoints (%d requested)", len(idx), n_interior + 2)
    return idx


def generate_subsections(
    fin: FinContour,
    n_interior: int = INTERIOR_KEYPOINTS,
    params: ScaleSpaceParams = ENCODING_PARAMS,
) -> list[Subsection]:
    """Every unordered keypoint pair as a forward arc; C(K, 2) subsections."""
    idx = contour_keypoints(fin, n_interior, params)
    span = params.resample_len - 1
    subs = []
    for a in range(len(idx)):
        for b in range(a + 1, len(idx)):
            subs.append(Subsection(int(idx[a]), int(idx[b]), (int(idx[b]) - int(idx[a])) / span))
    return subs


def _aligned_subsection(curve: PlanarCurve, sub: Subsection, reverse: bool,
                        n_samples: int = DESCRIPTOR_SAMPLES) -> np.ndarray:
    """Slice, resample to fixed length, and rigidly align start->origin,
    end->positive x-axis. Returns (n_samples, 2)."""
    pts = curve.points[sub.start_kp:sub.end_kp + 1]
    if reverse:
        pts = pts[::-1]
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.linspace(0.0, arc[-1], n_samples)
    out = np.column_stack([
        np.interp(targets, arc, pts[:, 0]),
        np.interp(targets, arc, pts[:, 1]),
    ])
    return _align(out)


def _align(pts: np.ndarray) -> np.ndarray:
    shifted = pts - pts[0]
    end = shifted[-1]
    norm = np.hypot(end[0], end[1])
    if norm < 1e-12:
        raise ValueError("cannot align subsection: endpoints coincide")
    c, s = end[0] / norm, end[1] / norm
    rot = np.array([[c, s], [-s, c]])
    return shifted @ rot.T


def _dog_vectors(x_fine, x_coarse, y_fine, y_coarse):
    d = (x_coarse - x_fine) ** 2 + (y_coarse - y_fine) ** 2
    energy = np.linalg.norm(d, axis=1)
    degenerate = energy < DEGENERATE_ENERGY
    safe = np.where(degenerate, 1.0, energy)
    return d / safe[:, None], degenerate


def _normal_vectors(xs, ys):
    tx = np.gradient(xs, axis=1)
    ty = np.gradient(ys, axis=1)
    norms = np.hypot(tx, ty)
    degenerate = (norms < 1e-12).any(axis=1)
    norms = np.where(norms < 1e-12, 1.0, norms)
    nx = -ty / norms
    ny = tx / norms
    vec = np.concatenate([nx, ny], axis=1)
    length = np.linalg.norm(vec, axis=1)
    degenerate |= length < DEGENERATE_ENERGY
    safe = np.where(degenerate, 1.0, length)
    return vec / safe[:, None], degenerate


def encode_fin_full(
    fin: FinContour,
    role: str = QUERY,
    settings: EncodingSettings = EncodingSettings(),
) -> FinEncoding:
    """Full combinatorial encoding of one fin.

    Reference fins encode every subsection in both traversal directions so
    queries (encoded forward only) can match regardless of extraction order.
    """
    if role not in (REFERENCE, QUERY):
        raise ValueError(f"unknown role {role!r}")
    params = settings.params
    curve, tip = canonical_form(fin, params)
    idx = contour_keypoints(fin, settings.n_interior, params)
    span = params.resample_len - 1
    subs = [
        Subsection(int(idx[a]), int(idx[b]), (int(idx[b]) - int(idx[a])) / span)
        for a in range(len(idx))
        for b in range(a + 1, len(idx))
    ]
    directions = (False, True) if role == REFERENCE else (False,)
    aligned = np.stack([
        _aligned_subsection(curve, sub, rev, settings.descriptor_samples)
        for rev in directions
        for sub in subs
    ])
    sub_index = np.tile(np.arange(len(subs)), len(directions))
    reversed_dir = np.repeat([bool(r) for r in directions], len(subs))
    xs = aligned[:, :, 0]
    ys = aligned[:, :, 1]
    need = sorted({float(s) for s in settings.scales}
                  | {float(s) * settings.dog_ratio for s in settings.scales})
    sx = {s: smooth_rows(xs, s, closed=False) for s in need}
    sy = {s: smooth_rows(ys, s, closed=False) for s in need}
    blocks: dict[tuple[str, float], DescriptorBlock] = {}
    for s in settings.scales:
        s = float(s)
        dog, dog_degen = _dog_vectors(sx[s], sx[s * settings.dog_ratio], sy[s], sy[s * settings.dog_ratio])
        blocks[(DOG, s)] = DescriptorBlock(dog, sub_index, reversed_dir, dog_degen)
        nrm, nrm_degen = _normal_vectors(sx[s], sy[s])
        blocks[(NORMAL, s)] = DescriptorBlock(nrm, sub_index, reversed_dir, nrm_degen)
    return FinEncoding(curve, tip, idx, subs, blocks, role)


def encode_fin(
    fin: FinContour,
    role: str = QUERY,
    settings: EncodingSettings = EncodingSettings(),
) -> list[BiometricDescriptor]:
    """Descriptor list for a fin; see encode_fin_full for the heavy lifting."""
    return encode_fin_full(fin, role, settings).descriptors


def encode_dogn(
    sub: Subsection,
    fin: FinContour,
    settings: EncodingSettings = EncodingSettings(),
) -> list[BiometricDescriptor]:
    """Multi-scale DoG magnitude descriptors for one subsection."""
    curve, _ = canonical_form(fin, settings.params)
    aligned = _aligned_subsection(curve, sub, sub.direction == "reverse", settings.descriptor_samples)[None]
    out = []
    for s in settings.scales:
        x_f = smooth_rows(aligned[:, :, 0], s, closed=False)
        x_c = smooth_rows(aligned[:, :, 0], s * settings.dog_ratio, closed=False)
        y_f = smooth_rows(aligned[:, :, 1], s, closed=False)
        y_c = smooth_rows(aligned[:, :, 1], s * settings.dog_ratio, closed=False)
        vec, degen = _dog_vectors(x_f, x_c, y_f, y_c)
        out.append(BiometricDescriptor(vec[0], DOG, float(s), sub, degenerate=bool(degen[0])))
    return out


def encode_normal(
    sub: Subsection,
    fin: FinContour,
    settings: EncodingSettings = EncodingSettings(),
) -> list[BiometricDescriptor]:
    """Endpoint-aligned boundary-normal descriptors (twice the sample count wide)."""
    curve, _ = canonical_form(fin, settings.params)
    aligned = _aligned_subsection(curve, sub, sub.direction == "reverse", settings.descriptor_samples)[None]
    out = []
    for s in settings.scales:
        xs = smooth_rows(aligned[:, :, 0], s, closed=False)
        ys = smooth_rows(aligned[:, :, 1], s, closed=False)
        vec, degen = _normal_vectors(xs, ys)
        out.append(BiometricDescriptor(vec[0], NORMAL, float(s), sub, degenerate=bool(degen[0])))
    return out
