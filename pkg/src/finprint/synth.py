"""Deterministic synthetic fin populations with ground truth for every stage.

Individuals share a common leading-edge/tip silhouette (with slight shape
jitter) and differ by a trailing-edge jag signature: localized bumps and
notches whose positions, depths, and widths identify the animal. Observations
perturb the base contour by rotation, scale, band-limited boundary noise, and
leading-end occlusion.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .curves import PlanarCurve, gaussian_smooth, resample
from .encoding import FinContour, locate_tip
from .finspace import IdentificationDataset
from .strokes import RegionContour

log = logging.getLogger(__name__)

CONTOUR_SAMPLES = 1024
PIXEL_SCALE = 400.0
JAG_SEPARATION = 0.07
SIGNATURE_GRID = 256
MIN_SIGNATURE_RMS = 0.004  # rms offset-profile separation, in base-shape units
# Band-limited noise components (smoothing sigma in samples, mixture weight):
# fine ripple degrades small filter scales, the near-contour-length component
# flexes the global shape that large filter scales rely on.
NOISE_MIXTURE = ((6.0, 0.3), (24.0, 0.2), (150.0, 0.5))
SHAPE_JITTER = 0.004       # per-individual silhouette control jitter
JAG_DEPTH_RANGE = (0.010, 0.022)
JAG_WIDTH_RANGE = (0.012, 0.03)


@dataclass(eq=False)
class SyntheticIndividual:
    individual_id: str
    leading_ctrl: np.ndarray   # (3, 2) quadratic Bezier control points
    trailing_ctrl: np.ndarray  # (4, 2) cubic Bezier control points
    jags: np.ndarray           # (n, 3) rows of (position, depth, width)

    def signature_profile(self, grid: int = SIGNATURE_GRID) -> np.ndarray:
        """Trailing-edge offset profile; the identity-bearing signal."""
        t = np.linspace(0.0, 1.0, grid)
        return _jag_offsets(t, self.jags)


@dataclass(frozen=True)
class PerturbationConfig:
    rotation: float = 0.0
    scale: float = 1.0
    point_noise: float = 0.0   # std of smooth boundary displacement, fraction of length
    occlusion: float = 0.0     # fraction of samples removed from the leading end
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.occlusion < 0.75:
            raise ValueError("occlusion must stay below 0.75")
        if self.scale <= 0.0:
            raise ValueError("scale must be positive")
        if self.point_noise < 0.0:
            raise ValueError("point_noise must be non-negative")

    def to_dict(self) -> dict:
        return {
            "rotation": self.rotation,
            "scale": self.scale,
            "point_noise": self.point_noise,
            "occlusion": self.occlusion,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class PerturbationRanges:
    """Sampling ranges for query observations."""

    max_rotation: float = np.deg2rad(15.0)
    scale_low: float = 0.9
    scale_high: float = 1.15
    min_noise: float = 0.001
    max_noise: float = 0.003
    min_occlusion: float = 0.0
    max_occlusion: float = 0.2

    def sample(self, rng: np.random.Generator, seed: int) -> PerturbationConfig:
        return PerturbationConfig(
            rotation=float(rng.uniform(-self.max_rotation, self.max_rotation)),
            scale=float(rng.uniform(self.scale_low, self.scale_high)),
            point_noise=float(rng.uniform(self.min_noise, self.max_noise)),
            occlusion=float(rng.uniform(self.min_occlusion, self.max_occlusion)),
            seed=seed,
        )


def _bezier(ctrl: np.ndarray, t: np.ndarray) -> np.ndarray:
    n = len(ctrl) - 1
    out = np.zeros((len(t), 2))
    from math import comb

    for k, p in enumerate(ctrl):
        out += comb(n, k) * ((1 - t) ** (n - k) * t**k)[:, None] * p
    return out


def _jag_offsets(t: np.ndarray, jags: np.ndarray) -> np.ndarray:
    off = np.zeros_like(t)
    for pos, depth, width in jags:
        off += depth * np.exp(-0.5 * ((t - pos) / width) ** 2)
    return off


JAG_SLOTS = np.linspace(0.15, 0.85, 8)  # population-level candidate positions


def _draw_individual(ident: str, rng: np.random.Generator) -> SyntheticIndividual:
    # Global silhouette is nearly common across the population (small control
    # jitter) and jags sit in shared slots, so coarse shape confuses
    # individuals; identity concentrates in the trailing-edge micro-structure.
    leading = np.array([[0.0, 0.0], [0.22, 0.62], [0.52, 1.0]])
    trailing = np.array([[0.52, 1.0], [0.72, 0.62], [0.80, 0.28], [1.0, 0.02]])
    j = SHAPE_JITTER
    leading = leading + np.vstack([[0, 0], rng.uniform(-j, j, (2, 2))])
    trailing = trailing + np.vstack([rng.uniform(-j, j, (3, 2)), [0, 0]])
    trailing[0] = leading[-1]  # shared tip
    # Every individual notches the same slots: the population shares its
    # coarse trailing-edge layout, identity lives in depth sign and size.
    n_jags = len(JAG_SLOTS)
    pos = JAG_SLOTS + rng.uniform(-0.004, 0.004, n_jags)
    depth = rng.uniform(*JAG_DEPTH_RANGE, n_jags) * rng.choice([-1.0, 1.0], n_jags)
    width = rng.uniform(*JAG_WIDTH_RANGE, n_jags)
    return SyntheticIndividual(ident, leading, trailing, np.column_stack([pos, depth, width]))


def generate_population(
    n_individuals: int,
    seed: int,
    min_signature_rms: float = MIN_SIGNATURE_RMS,
) -> list[SyntheticIndividual]:
    """Individuals with pairwise-distinct jag signatures, deterministic per seed."""
    if n_individuals < 2:
        raise ValueError("population needs at least 2 individuals")
    population: list[SyntheticIndividual] = []
    profiles: list[np.ndarray] = []
    for i in range(n_individuals):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(i,)))
        while True:
            ind = _draw_individual(f"ind_{i:03d}", rng)
            prof = ind.signature_profile()
            rms = [np.sqrt(np.mean((prof - p) ** 2)) for p in profiles]
            if all(d >= min_signature_rms for d in rms):
                break
        population.append(ind)
        profiles.append(prof)
    return population


def base_contour(ind: SyntheticIndividual, n_samples: int = CONTOUR_SAMPLES) -> FinContour:
    """Canonical unperturbed observation, uniformly sampled in arc length."""
    half = n_samples // 2
    t = np.linspace(0.0, 1.0, 4 * half)
    lead = _bezier(ind.leading_ctrl, t)
    trail = _bezier(ind.trailing_ctrl, t)
    # Jags displace the trailing edge along its outward normal.
    tangent = np.gradient(trail, axis=0)
    tangent /= np.linalg.norm(tangent, axis=1)[:, None]
    outward = np.column_stack([-tangent[:, 1], tangent[:, 0]])
    trail = trail + outward * _jag_offsets(t, ind.jags)[:, None]
    raw = np.vstack([lead, trail[1:]]) * PIXEL_SCALE
    curve = resample(PlanarCurve(raw), n_samples)
    return FinContour(curve, tip_index=locate_tip(curve))


def render_observation(ind: SyntheticIndividual, cfg: PerturbationConfig) -> FinContour:
    """Perturbed observation: occlusion, rigid motion, scale, smooth noise."""
    fin = base_contour(ind)
    pts = fin.curve.points.copy()
    tip = fin.tip_index
    if cfg.occlusion > 0.0:
        cut = int(round(cfg.occlusion * len(pts)))
        if cut >= tip:
            raise ValueError("occlusion would remove the fin tip")
        pts = pts[cut:]
    if cfg.rotation != 0.0 or cfg.scale != 1.0:
        centre = pts.mean(axis=0)
        c, s = np.cos(cfg.rotation), np.sin(cfg.rotation)
        rot = np.array([[c, -s], [s, c]])
        pts = (pts - centre) @ rot.T * cfg.scale + centre
    if cfg.point_noise > 0.0:
        rng = np.random.default_rng(cfg.seed)
        length = PlanarCurve(pts).length
        # Band-limited displacement mixing fine and coarse wavelengths, so
        # every analysis scale sees some disturbance.
        smooth = np.zeros_like(pts)
        for sigma, weight in NOISE_MIXTURE:
            sigma = min(sigma, (len(pts) - 1) / 4.1)  # keep the kernel inside the contour
            raw = rng.normal(size=pts.shape)
            comp = np.column_stack([
                gaussian_smooth(raw[:, 0], sigma),
                gaussian_smooth(raw[:, 1], sigma),
            ])
            smooth += weight * comp / max(comp.std(), 1e-12)
        spread = smooth.std()
        if spread > 0:
            pts = pts + smooth * (cfg.point_noise * length / spread)
    curve = PlanarCurve(pts)
    return FinContour(curve, tip_index=locate_tip(curve))


@dataclass(eq=False)
class DatasetEntry:
    name: str
    individual_id: str
    fin: FinContour
    perturbation: PerturbationConfig | None  # None marks the reference


@dataclass(eq=False)
class SyntheticDataset:
    seed: int
    references: list[DatasetEntry]
    queries: list[DatasetEntry]

    def identification(self) -> IdentificationDataset:
        return IdentificationDataset(
            references=[(e.fin, e.individual_id) for e in self.references],
            queries=[(e.fin, e.individual_id) for e in self.queries],
        )


def build_dataset(
    population: list[SyntheticIndividual],
    per_individual: int,
    ranges: PerturbationRanges,
    seed: int,
) -> SyntheticDataset:
    """One exact reference plus per_individual - 1 perturbed queries each."""
    if per_individual < 2:
        raise ValueError("need at least two observations per individual")
    references, queries = [], []
    for i, ind in enumerate(population):
        references.append(DatasetEntry(f"{ind.individual_id}_ref", ind.individual_id,
                                       base_contour(ind), None))
        for q in range(per_individual - 1):
            rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(i, q)))
            cfg = ranges.sample(rng, seed=int(rng.integers(0, 2**31 - 1)))
            queries.append(DatasetEntry(f"{ind.individual_id}_q{q}", ind.individual_id,
                                        render_observation(ind, cfg), cfg))
    return SyntheticDataset(seed, references, queries)


def emit_dataset(
    population: list[SyntheticIndividual],
    per_individual: int,
    ranges: PerturbationRanges,
    seed: int,
    out_dir,
) -> str:
    """Write one contour file per observation plus a manifest; returns its path.

    Layout and bytes are fully determined by (population, per_individual,
    ranges, seed): regenerating produces identical files.
    """
    import os

    from .io_utils import ContourRecord, write_contours, write_manifest

    os.makedirs(out_dir, exist_ok=True)
    dataset = build_dataset(population, per_individual, ranges, seed)
    references, queries = [], []
    for side, entries in (("references", dataset.references), ("queries", dataset.queries)):
        for entry in entries:
            fname = f"{entry.name}.contour.json"
            write_contours(
                os.path.join(out_dir, fname),
                [ContourRecord(
                    name=entry.name,
                    curve=entry.fin.curve,
                    tip_index=entry.fin.tip_index,
                    class_label=entry.individual_id,
                )],
            )
            record = {"name": entry.name, "file": fname, "class_label": entry.individual_id}
            if entry.perturbation is not None:
                record["perturbation"] = entry.perturbation.to_dict()
            (references if side == "references" else queries).append(record)
    manifest_path = os.path.join(out_dir, "manifest.json")
    write_manifest(manifest_path, {
        "seed": seed,
        "per_individual": per_individual,
        "individuals": [ind.individual_id for ind in population],
        "references": references,
        "queries": queries,
    })
    return manifest_path


def _ellipse_arc(a: np.ndarray, b: np.ndarray, sag: float, n: int) -> np.ndarray:
    """Lower half-ellipse from b back to a (exclusive of both endpoints)."""
    centre = 0.5 * (a + b)
    span = b - a
    phi = np.linspace(0.0, np.pi, n + 2)[1:-1]
    across = 0.5 * span
    down = np.array([-span[1], span[0]])
    down = -sag * down / np.linalg.norm(down)
    return centre + np.outer(np.cos(phi), across) + np.outer(np.sin(phi), down) * np.linalg.norm(span)


def make_region_pool(
    fin: FinContour,
    seed: int,
    n_distractors: int = 3,
) -> tuple[list[RegionContour], PlanarCurve]:
    """Wrap the fin into a fin+body region and add distractor blobs.

    Mimics the segmentation failure mode the stroke model exists for: the fin
    is visually fused with the body, so no region equals the fin alone. The
    open fin curve itself is the detection ground truth.
    """
    rng = np.random.default_rng(seed)
    pts = fin.curve.points
    # The arc runs trailing base -> leading base below the fin, closing the loop.
    body = _ellipse_arc(pts[0], pts[-1], sag=0.45, n=400)
    region_pts = np.vstack([pts, body])
    regions = [RegionContour(PlanarCurve(region_pts, closed=True), 0)]
    width = pts[:, 0].max() - pts[:, 0].min()
    for d in range(n_distractors):
        t = np.linspace(0, 2 * np.pi, 260, endpoint=False)
        r = width * rng.uniform(0.25, 0.5)
        wobble = 1.0 + 0.18 * np.sin(3 * t + rng.uniform(0, 2 * np.pi)) \
            + 0.1 * np.sin(7 * t + rng.uniform(0, 2 * np.pi))
        centre = pts.mean(axis=0) + np.array([
            (d + 2.2) * width * rng.choice([-1.0, 1.0]),
            width * rng.uniform(-0.8, 0.8),
        ])
        blob = centre + (r * wobble)[:, None] * np.column_stack([np.cos(t), np.sin(t)])
        regions.append(RegionContour(PlanarCurve(blob, closed=True), d + 1))
    order = rng.permutation(len(regions))
    regions = [RegionContour(regions[i].boundary, int(rank)) for rank, i in enumerate(order)]
    return regions, fin.curve
