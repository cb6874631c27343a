"""Low-quality image synthesis: motion/gaussian/median blur plus random
brightness-contrast, and the builders that turn a clean image set into a
balanced high/low quality corpus."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

KINDS = ("motion", "gaussian", "median", "brightness_contrast")

# joint draws closer to identity than this are rejected so every low-quality
# sample is visibly degraded
_MIN_BRIGHTNESS = 0.08
_MIN_LOG_CONTRAST = 0.15


@dataclass
class AugmentationSpec:
    motion_kernel: tuple[int, int] = (7, 15)
    gaussian_sigma: tuple[float, float] = (1.5, 4.0)
    median_kernel: tuple[int, int] = (5, 11)
    brightness_delta: tuple[float, float] = (-0.3, 0.3)
    contrast_factor: tuple[float, float] = (0.5, 1.8)

    def __post_init__(self):
        for name, (lo, hi) in (("motion_kernel", self.motion_kernel), ("median_kernel", self.median_kernel)):
            if lo < 3 or lo % 2 == 0 or hi % 2 == 0 or hi < lo:
                raise ValueError(f"{name} must be an odd range >= 3, got {(lo, hi)}")
        for name, (lo, hi) in (
            ("gaussian_sigma", self.gaussian_sigma),
            ("brightness_delta", self.brightness_delta),
            ("contrast_factor", self.contrast_factor),
        ):
            if hi < lo:
                raise ValueError(f"{name} range is empty: {(lo, hi)}")


def _odd_in(rng: np.random.Generator, lo: int, hi: int) -> int:
    return int(rng.choice(np.arange(lo, hi + 1, 2)))


def sample_params(kind: str, spec: AugmentationSpec, rng: np.random.Generator) -> dict:
    if kind == "motion":
        return {
            "kernel": _odd_in(rng, *spec.motion_kernel),
            "angle": float(rng.uniform(0, math.pi)),
        }
    if kind == "gaussian":
        return {"sigma": float(rng.uniform(*spec.gaussian_sigma))}
    if kind == "median":
        return {"kernel": _odd_in(rng, *spec.median_kernel)}
    if kind == "brightness_contrast":
        while True:
            brightness = float(rng.uniform(*spec.brightness_delta))
            contrast = float(rng.uniform(*spec.contrast_factor))
            if abs(brightness) >= _MIN_BRIGHTNESS or abs(math.log(contrast)) >= _MIN_LOG_CONTRAST:
                return {"brightness": brightness, "contrast": contrast}
    raise ValueError(f"unknown augmentation kind {kind!r}")


def motion_kernel(size: int, angle: float) -> np.ndarray:
    """Normalized line kernel of the given length and angle."""
    if size < 3 or size % 2 == 0:
        raise ValueError(f"kernel size must be odd and >= 3, got {size}")
    kernel = np.zeros((size, size))
    c = (size - 1) / 2
    for t in np.linspace(-c, c, 4 * size):
        r = int(round(c + t * math.sin(angle)))
        col = int(round(c + t * math.cos(angle)))
        kernel[r, col] = 1.0
    return kernel / kernel.sum()


def apply_with_params(image: np.ndarray, kind: str, params: dict) -> np.ndarray:
    """Apply one augmentation with fixed parameters (reflective borders)."""
    image = np.asarray(image, dtype=np.float32)
    if kind == "motion":
        k = motion_kernel(params["kernel"], params["angle"])
        out = np.stack(
            [ndimage.convolve(image[..., c], k, mode="reflect") for c in range(3)], axis=-1
        )
    elif kind == "gaussian":
        out = np.stack(
            [
                ndimage.gaussian_filter(image[..., c], params["sigma"], mode="reflect")
                for c in range(3)
            ],
            axis=-1,
        )
    elif kind == "median":
        size = params["kernel"]
        if size < 3 or size % 2 == 0:
            raise ValueError(f"kernel size must be odd and >= 3, got {size}")
        out = np.stack(
            [ndimage.median_filter(image[..., c], size=size, mode="reflect") for c in range(3)],
            axis=-1,
        )
    elif kind == "brightness_contrast":
        out = params["contrast"] * (image - 0.5) + 0.5 + params["brightness"]
    else:
        raise ValueError(f"unknown augmentation kind {kind!r}")
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def apply_augmentation(
    image: np.ndarray, kind: str, spec: AugmentationSpec, rng: np.random.Generator
) -> tuple[np.ndarray, dict]:
    """Sample parameters for ``kind`` and apply them; returns (image, params)."""
    params = sample_params(kind, spec, rng)
    return apply_with_params(image, kind, params), params


@dataclass
class QualityExample:
    image_id: str
    source_id: str
    pixels: np.ndarray
    label: str  # 'high' | 'low'
    kind: Optional[str] = None
    params: Optional[dict] = None

    def manifest_entry(self) -> dict:
        return {
            "image_id": self.image_id,
            "source_id": self.source_id,
            "quality_label": self.label,
            "augmentation": None if self.kind is None else {"kind": self.kind, **self.params},
        }


def _build_labeled_set(
    images: Sequence[tuple[str, np.ndarray]],
    spec: AugmentationSpec,
    seed: int,
    kinds: Sequence[str],
) -> list[QualityExample]:
    if not images:
        raise ValueError("image list is empty")
    out = []
    for idx, (image_id, pixels) in enumerate(images):
        rng = np.random.default_rng([seed, idx])
        out.append(QualityExample(image_id, image_id, np.asarray(pixels, np.float32), "high"))
        kind = str(rng.choice(kinds))
        degraded, params = apply_augmentation(pixels, kind, spec, rng)
        out.append(
            QualityExample(f"{image_id}_aug", image_id, degraded, "low", kind, params)
        )
    return out


def build_quality_training_set(
    images: Sequence[tuple[str, np.ndarray]],
    spec: Optional[AugmentationSpec] = None,
    seed: int = 0,
) -> list[QualityExample]:
    """Originals labeled high plus one degraded copy each labeled low (1:1)."""
    return _build_labeled_set(images, spec or AugmentationSpec(), seed, KINDS)


def build_augmented_test_set(
    images: Sequence[tuple[str, np.ndarray]],
    seed: int = 0,
    spec: Optional[AugmentationSpec] = None,
) -> list[QualityExample]:
    """Double the test split with blur and illumination changes, 50% low quality."""
    return _build_labeled_set(images, spec or AugmentationSpec(), seed, KINDS)
