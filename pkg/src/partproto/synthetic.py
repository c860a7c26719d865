"""Synthetic episode generation.

Desk-scale stand-in for real feature exports: every class (and the
background) gets a mean vector in feature space, images are rectangular
class blobs on a background canvas, and each cell's feature is its
class mean plus Gaussian jitter. Separation between class means must
exceed the jitter so episodes stay learnable by construction.
"""

from dataclasses import dataclass, fields

import numpy as np

from .episodes import Episode
from .errors import InvalidConfig
from .grids import FeatureGrid, LabelGrid


@dataclass(frozen=True)
class SynthConfig:
    channels: int = 64
    height: int = 32
    width: int = 32
    blob_count: int = 2
    blob_min: int = 6
    blob_max: int = 14
    jitter: float = 0.4
    separation: float = 1.0
    seed: int = 0
    c_way: int = 1
    k_shot: int = 1
    n_unlabeled: int = 6
    n_query: int = 1
    mask_scale: int = 1

    def __post_init__(self):
        if self.channels < 1 or self.height < 1 or self.width < 1:
            raise InvalidConfig("channels and grid size must be >= 1")
        if not (1 <= self.blob_min <= self.blob_max):
            raise InvalidConfig("blob size range must satisfy 1 <= min <= max")
        if self.blob_max > min(self.height, self.width):
            raise InvalidConfig("blob_max exceeds the grid")
        if self.blob_count < 1:
            raise InvalidConfig("blob_count must be >= 1")
        if self.jitter < 0:
            raise InvalidConfig("jitter must be >= 0")
        if self.separation <= self.jitter:
            raise InvalidConfig("separation must exceed jitter")
        if self.c_way < 1 or self.k_shot < 1 or self.n_query < 1 or self.n_unlabeled < 0:
            raise InvalidConfig("episode shape out of range")
        if self.mask_scale < 1:
            raise InvalidConfig("mask_scale must be >= 1")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _class_means(rng: np.random.Generator, n: int, channels: int, scale: float) -> np.ndarray:
    raw = rng.standard_normal((channels, n))
    if channels >= n:
        q, _ = np.linalg.qr(raw)
        dirs = q[:, :n].T
    else:
        dirs = raw.T / np.linalg.norm(raw.T, axis=1, keepdims=True)
    return scale * dirs


def _blob_mask(rng, cfg: SynthConfig, classes: list[int]) -> np.ndarray:
    """Rectangular blobs per class, later classes painted over earlier
    ones; retried until some background remains."""
    for _ in range(64):
        mask = np.zeros((cfg.height, cfg.width), dtype=np.uint8)
        for local in classes:
            for _ in range(cfg.blob_count):
                bh = int(rng.integers(cfg.blob_min, cfg.blob_max + 1))
                bw = int(rng.integers(cfg.blob_min, cfg.blob_max + 1))
                r0 = int(rng.integers(0, cfg.height - bh + 1))
                c0 = int(rng.integers(0, cfg.width - bw + 1))
                mask[r0 : r0 + bh, c0 : c0 + bw] = local
        if (mask == 0).any() and all((mask == c).any() for c in classes):
            return mask
    raise InvalidConfig("could not place blobs with background left over")


def _render(rng, cfg: SynthConfig, means: np.ndarray, mask: np.ndarray) -> FeatureGrid:
    feats = means[mask.astype(np.int64)]
    if cfg.jitter > 0:
        noise = rng.standard_normal(feats.shape, dtype=np.float32)
        feats = feats + np.float32(cfg.jitter) * noise
    return FeatureGrid(feats)


def _upscale_mask(mask: np.ndarray, scale: int) -> LabelGrid:
    if scale == 1:
        return LabelGrid(mask)
    return LabelGrid(np.kron(mask, np.ones((scale, scale), dtype=np.uint8)))


def generate_synthetic_episode(cfg: SynthConfig) -> Episode:
    """Deterministic episode for the given config (same seed, same bits)."""
    rng = np.random.default_rng(cfg.seed)
    means = _class_means(rng, cfg.c_way + 1, cfg.channels, cfg.separation).astype(
        np.float32
    )

    support = []
    for c in range(cfg.c_way):
        shots = []
        for _ in range(cfg.k_shot):
            mask = _blob_mask(rng, cfg, [c + 1])
            shots.append((_render(rng, cfg, means, mask), _upscale_mask(mask, cfg.mask_scale)))
        support.append(tuple(shots))

    unlabeled = []
    for _ in range(cfg.n_unlabeled):
        local = int(rng.integers(1, cfg.c_way + 1))
        mask = _blob_mask(rng, cfg, [local])
        unlabeled.append(_render(rng, cfg, means, mask))

    queries = []
    for _ in range(cfg.n_query):
        mask = _blob_mask(rng, cfg, list(range(1, cfg.c_way + 1)))
        queries.append((_render(rng, cfg, means, mask), _upscale_mask(mask, cfg.mask_scale)))

    return Episode(
        class_list=tuple(range(1, cfg.c_way + 1)),
        support_labeled=tuple(support),
        support_unlabeled=tuple(unlabeled),
        queries=tuple(queries),
        image_size=(cfg.height * cfg.mask_scale, cfg.width * cfg.mask_scale),
    )


def mirrored_episode(cfg: SynthConfig) -> Episode:
    """Episode whose single query is an exact copy of the first support
    pair; used by self-segmentation checks."""
    base = generate_synthetic_episode(cfg)
    grid, mask = base.support_labeled[0][0]
    return Episode(
        class_list=base.class_list,
        support_labeled=base.support_labeled,
        support_unlabeled=base.support_unlabeled,
        queries=((grid, mask),),
        image_size=base.image_size,
    )
