"""Seeded synthetic corpus: value-noise textures, masks, predictions, feature maps.

Entry ``i`` of a corpus draws every random value from a generator seeded
with ``(seed, i)``, so corpora are byte-identical per seed and any single
entry can be regenerated on its own.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .core_io import (
    DatasetManifest,
    FeatureMap,
    Image,
    ManifestEntry,
    PathLike,
    save_image,
    save_manifest,
    save_mask,
    write_csv,
    write_tensor,
)

TEXTURE_SIZE = 64
PERSISTENCE = 0.65
FEATURE_CHANNELS = 4
FEATURE_SIZES = (8, 12, 16)
FEATURE_NOISE = 0.3
FOREGROUND_FRACTION = 0.3

POSITIVE_CENTRE = np.array([1.0, 0.0, 0.5, -0.5])
NEGATIVE_CENTRE = np.array([0.0, 1.0, -0.5, 0.5])


def entry_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def _lattice_noise(rng: np.random.Generator, size: int, cells: int) -> np.ndarray:
    """Bilinearly interpolated random lattice with ``cells`` cells per side."""
    lattice = rng.uniform(0.0, 1.0, (cells + 1, cells + 1))
    pos = (np.arange(size) + 0.5) * cells / size
    i0 = np.minimum(np.floor(pos).astype(int), cells - 1)
    frac = pos - i0
    top = lattice[i0][:, i0] * (1 - frac)[None, :] + lattice[i0][:, i0 + 1] * frac[None, :]
    bot = lattice[i0 + 1][:, i0] * (1 - frac)[None, :] + lattice[i0 + 1][:, i0 + 1] * frac[None, :]
    return top * (1 - frac)[:, None] + bot * frac[:, None]


def value_noise(rng: np.random.Generator, size: int = TEXTURE_SIZE) -> np.ndarray:
    """Multi-octave value noise in [0, 1], from 2 cells per side up to one per pixel."""
    field = np.zeros((size, size))
    total = 0.0
    cells, amp = 2, 1.0
    while cells <= size:
        field += amp * _lattice_noise(rng, size, cells)
        total += amp
        cells *= 2
        amp *= PERSISTENCE
    field /= total
    lo, hi = field.min(), field.max()
    return (field - lo) / (hi - lo)


def make_texture(rng: np.random.Generator, size: int = TEXTURE_SIZE, channels: int = 3) -> Image:
    """8-bit-valued texture; colour channels share 70% of their structure."""
    shared = value_noise(rng, size)
    planes = []
    for _ in range(channels):
        mix = shared if channels == 1 else 0.7 * shared + 0.3 * value_noise(rng, size)
        planes.append(np.rint(20.0 + 215.0 * mix))
    return Image(np.stack(planes, axis=2))


def make_mask(rng: np.random.Generator, size: int = TEXTURE_SIZE) -> np.ndarray:
    field = value_noise(rng, size)
    cut = np.quantile(field, 1.0 - FOREGROUND_FRACTION)
    return (field >= cut).astype(np.uint8)


def make_prediction(rng: np.random.Generator, mask: np.ndarray, good: bool) -> np.ndarray:
    """Probability map; good ones track the mask, poor ones a displaced copy of it."""
    source = mask if good else np.roll(mask, (mask.shape[0] // 2, mask.shape[1] // 3), axis=(0, 1))
    prob = 0.15 + 0.7 * source + rng.normal(0.0, 0.08, mask.shape)
    return np.clip(prob, 0.0, 1.0)


def make_feature_map(rng: np.random.Generator, positive: bool, size: int | None = None) -> FeatureMap:
    """Bottleneck-like map drawn from one of two channel-level clusters."""
    if size is None:
        size = int(rng.choice(FEATURE_SIZES))
    centre = POSITIVE_CENTRE if positive else NEGATIVE_CENTRE
    data = centre[:, None, None] + rng.normal(0.0, FEATURE_NOISE, (FEATURE_CHANNELS, size, size))
    return FeatureMap(data.astype(np.float32))


def write_corpus(out_dir: PathLike, seed: int, count: int, size: int = TEXTURE_SIZE) -> DatasetManifest:
    """Write ``count`` entries plus ``manifest.json`` and ``clusters.csv`` under ``out_dir``.

    Even entries come from the positive feature cluster and carry good
    predictions; odd entries the negative cluster with poor predictions.
    """
    if count < 1:
        raise ValueError("count must be positive")
    if size < TEXTURE_SIZE:
        raise ValueError(f"textures must be at least {TEXTURE_SIZE}x{TEXTURE_SIZE}")
    out = Path(out_dir)
    entries, clusters = [], []
    for i in range(count):
        rng = entry_rng(seed, i)
        name = f"tex_{i:03d}"
        positive = i % 2 == 0
        img = make_texture(rng, size)
        mask = make_mask(rng, size)
        prob = make_prediction(rng, mask, good=positive)
        fmap = make_feature_map(rng, positive)
        paths = {
            "image_path": f"images/{name}.ppm",
            "mask_path": f"masks/{name}.pgm",
            "pred_path": f"preds/{name}.pgm",
            "feature_path": f"features/{name}.ften",
        }
        save_image(img, out / paths["image_path"])
        save_mask(mask, out / paths["mask_path"])
        save_image(Image(prob * 255.0), out / paths["pred_path"])
        write_tensor(fmap, out / paths["feature_path"])
        entries.append(ManifestEntry(id=name, **paths))
        clusters.append([name, "positive" if positive else "negative"])
    manifest = DatasetManifest(entries)
    save_manifest(manifest, out / "manifest.json")
    write_csv(out / "clusters.csv", ["id", "cluster"], clusters)
    return manifest
