"""Flat run configuration: every tunable of the pipeline with paper defaults."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields

from .curves import ScaleSpaceParams
from .encoding import EncodingSettings
from .finspace import FinSpaceConfig
from .forest import TrainConfig


@dataclass(frozen=True)
class RunConfig:
    # region filtering
    region_min_boundary: float = 70.0
    region_overlap: float = 0.95
    region_top_k: int = 12
    # stroke detection keypointing
    detect_keypoints: int = 7
    detect_sigma: float = 1.0
    detect_sigma_ratio: float = 4.0
    detect_resample_len: int = 128
    # stroke scoring
    nms_overlap: float = 0.2
    match_tolerance: float = 2.0
    # biometric encoding
    encode_keypoints: int = 48  # interior maxima; contour endpoints are added
    encode_sigma: float = 2.0
    encode_sigma_ratio: float = 8.0
    encode_resample_len: int = 1024
    descriptor_scales: tuple[float, ...] = (1.0, 2.0, 4.0, 8.0)
    descriptor_samples: int = 256
    descriptor_dog_ratio: float = 2.0
    # fin space
    partitions_per_edge: int = 5
    scale_bins: int = 5
    min_length_fraction: float = 0.01
    # forests
    forest_trees: int = 100
    forest_max_depth: int | None = None
    forest_min_leaf_regression: int = 1
    forest_min_leaf_classification: int = 5
    negatives_per_query: int = 5
    # nearest neighbours
    exact_index: bool = True
    # evaluation
    detection_threshold_count: int = 21
    # randomness
    seed: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["descriptor_scales"] = list(self.descriptor_scales)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        if "descriptor_scales" in data:
            data["descriptor_scales"] = tuple(float(s) for s in data["descriptor_scales"])
        return cls(**data)

    @property
    def detection_params(self) -> ScaleSpaceParams:
        return ScaleSpaceParams(self.detect_sigma, self.detect_sigma_ratio, self.detect_resample_len)

    @property
    def encoding_settings(self) -> EncodingSettings:
        return EncodingSettings(
            n_interior=self.encode_keypoints,
            sigma=self.encode_sigma,
            sigma_ratio=self.encode_sigma_ratio,
            resample_len=self.encode_resample_len,
            scales=self.descriptor_scales,
            descriptor_samples=self.descriptor_samples,
            dog_ratio=self.descriptor_dog_ratio,
        )

    @property
    def finspace_config(self) -> FinSpaceConfig:
        return FinSpaceConfig.create(
            self.encoding_settings,
            partitions_per_edge=self.partitions_per_edge,
            n_scale_bins=self.scale_bins,
            min_length_fraction=self.min_length_fraction,
        )

    def forest_config(self, task: str) -> TrainConfig:
        min_leaf = (
            self.forest_min_leaf_regression
            if task == "regression"
            else self.forest_min_leaf_classification
        )
        return TrainConfig(
            n_trees=self.forest_trees,
            max_depth=self.forest_max_depth,
            min_leaf=min_leaf,
            seed=self.seed,
        )

    def encoding_hash(self) -> str:
        """Digest of everything that shapes descriptors and fin-space bins."""
        payload = {
            "encoding": self.encoding_settings.to_dict(),
            "finspace": self.finspace_config.to_dict(),
        }
        canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return RunConfig.from_dict(json.load(fh))


def save_config(config: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2)
        fh.write("\n")
