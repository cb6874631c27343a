"""Synthetic fundus corpus generator.

Stands in for the credentialed clinical datasets with the same CSV schema.
Each image is a dark fundus disc with an optic disc, vessels, and planted
lesion primitives per positive label:

  dr       small dark dots (microaneurysms) and, at higher grades, larger
           hemorrhage blobs; density scales with the severity grade
  dme      ring of bright exudate dots around a darkened macula
  glaucoma enlarged optic cup inside the disc
  amd      diffuse bright drusen blobs near the macula
  myopia   tessellation: a faint grid texture over the whole fundus

Metadata is sampled so diabetes (and its duration) strongly predicts DR, and
DME => DR => diabetes holds by construction. Per-image lesion coordinates are
recorded as ground truth for the saliency analysis. An optional per-disease
``occult_rate`` omits the lesion rendering while keeping the label, which
makes those cases undetectable from the image alone and only predictable from
metadata.

Generation is sharded by patient index with a derived RNG stream per patient,
so output is deterministic for a given (spec, seed) regardless of scheduling.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image

from .. import DISEASES
from .records import RawRecord, write_metadata_csv

DEFAULT_PREVALENCE = {
    "dr": 0.064,
    "glaucoma": 0.197,
    "dme": 0.025,
    "amd": 0.022,
    "myopia": 0.016,
}

HYPERTENSION_PHRASES = ("hipertensão arterial", "hipertensao", "HAS")
DECOY_PHRASES = ("dislipidemia", "asma", "artrite", "tireoide")


@dataclass
class SyntheticDataSpec:
    n_images: int = 1000
    image_size: int = 64
    prevalence: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_PREVALENCE))
    diabetes_rate: float = 0.30
    duration_range: tuple[float, float] = (0.5, 24.5)
    two_eye_rate: float = 0.0  # fraction of patients contributing both eyes
    missing_age_rate: float = 0.1
    occult_rate: dict[str, float] = field(default_factory=dict)
    grade_classes: int = 2
    lesion_contrast: float = 1.0  # scales lesion opacity

    def __post_init__(self):
        for disease, p in self.prevalence.items():
            if not 0 <= p <= 1:
                raise ValueError(f"prevalence for {disease!r} must be in [0, 1], got {p}")
        if not 0 <= self.diabetes_rate <= 1:
            raise ValueError(f"diabetes_rate must be in [0, 1], got {self.diabetes_rate}")
        if self.grade_classes < 2:
            raise ValueError("need at least 2 severity grades")

    def to_dict(self) -> dict:
        return {
            "n_images": self.n_images,
            "image_size": self.image_size,
            "prevalence": dict(self.prevalence),
            "diabetes_rate": self.diabetes_rate,
            "duration_range": list(self.duration_range),
            "two_eye_rate": self.two_eye_rate,
            "missing_age_rate": self.missing_age_rate,
            "occult_rate": dict(self.occult_rate),
            "grade_classes": self.grade_classes,
            "lesion_contrast": self.lesion_contrast,
        }


@dataclass
class Lesion:
    kind: str
    cx: float  # pixels
    cy: float
    radius: float

    def to_dict(self) -> dict:
        return {"kind": self.kind, "cx": self.cx, "cy": self.cy, "radius": self.radius}


@dataclass
class SyntheticCorpus:
    spec: SyntheticDataSpec
    seed: int
    records: list[RawRecord]
    images: list[np.ndarray]  # float32 HxWx3, aligned with records
    lesions: list[list[Lesion]]

    def __len__(self) -> int:
        return len(self.records)

    def image_map(self) -> dict[str, np.ndarray]:
        return {r.image_id: img for r, img in zip(self.records, self.images)}

    def lesion_map(self) -> dict[str, list[Lesion]]:
        return {r.image_id: les for r, les in zip(self.records, self.lesions)}

    def save(self, out_dir, split=None) -> None:
        """Write metadata.csv, images/<id>.png and manifest.jsonl."""
        out_dir = Path(out_dir)
        img_dir = out_dir / "images"
        img_dir.mkdir(parents=True, exist_ok=True)
        write_metadata_csv(self.records, out_dir / "metadata.csv")
        split_of = {}
        if split is not None:
            for name in ("train", "val", "test"):
                for image_id in getattr(split, name):
                    split_of[image_id] = name
        with open(out_dir / "manifest.jsonl", "w", encoding="utf-8") as fh:
            for record, image, lesions in zip(self.records, self.images, self.lesions):
                arr = (np.clip(image, 0, 1) * 255).round().astype(np.uint8)
                Image.fromarray(arr).save(img_dir / f"{record.image_id}.png")
                fh.write(
                    json.dumps(
                        {
                            "image_id": record.image_id,
                            "patient_id": record.patient_id,
                            "split": split_of.get(record.image_id),
                            "quality_label": "high",
                            "augmentation": None,
                            "lesions": [l.to_dict() for l in lesions],
                        }
                    )
                    + "\n"
                )


def _disc_mask_coords(size: int):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32)
    cx = cy = (size - 1) / 2.0
    dist = np.sqrt((xx - cx) ** 2 + (yy - cy) ** 2)
    return xx, yy, dist, cx, cy


def _stamp(image: np.ndarray, cx: float, cy: float, radius: float, color, alpha: float):
    """Blend a soft-edged disc of the given color into the image (local window only)."""
    size = image.shape[0]
    ext = int(math.ceil(radius)) + 2
    x0, x1 = max(0, int(cx) - ext), min(size, int(cx) + ext + 1)
    y0, y1 = max(0, int(cy) - ext), min(size, int(cy) + ext + 1)
    if x0 >= x1 or y0 >= y1:
        return
    yy, xx = np.mgrid[y0:y1, x0:x1].astype(np.float32)
    dist = np.sqrt((xx - cx) ** 2 + (yy - cy) ** 2)
    weight = (np.clip((radius - dist) / max(radius * 0.5, 0.75), 0.0, 1.0) * alpha)[..., None]
    region = image[y0:y1, x0:x1]
    region *= 1.0 - weight
    region += np.asarray(color, dtype=np.float32) * weight


class _PatientSampler:
    def __init__(self, spec: SyntheticDataSpec, seed: int):
        self.spec = spec
        self.seed = seed

    def sample_metadata(self, rng: np.random.Generator) -> dict:
        spec = self.spec
        age = float(np.clip(rng.normal(55.0, 12.0), 20.0, 90.0))
        sex = "male" if rng.random() < 0.5 else "female"
        diabetes = rng.random() < spec.diabetes_rate
        duration = float(rng.uniform(*spec.duration_range)) if diabetes else 0.0
        p_ht = min(0.9, 0.15 + 0.3 * diabetes + 0.002 * (age - 55.0))
        hypertension = rng.random() < p_ht
        return {
            "age": age,
            "sex": sex,
            "diabetes": diabetes,
            "duration": duration,
            "hypertension": hypertension,
        }

    def sample_labels(self, meta: dict, rng: np.random.Generator) -> dict[str, bool]:
        spec = self.spec
        prev = spec.prevalence
        mean_duration = sum(spec.duration_range) / 2.0
        labels = {}
        p_dr = 0.0
        if meta["diabetes"] and spec.diabetes_rate > 0:
            p_dr = min(0.95, prev["dr"] / spec.diabetes_rate * meta["duration"] / mean_duration)
        labels["dr"] = rng.random() < p_dr
        p_dme = min(0.95, prev["dme"] / max(prev["dr"], 1e-9)) if labels["dr"] else 0.0
        labels["dme"] = rng.random() < p_dme
        labels["glaucoma"] = rng.random() < min(0.9, prev["glaucoma"] * meta["age"] / 55.0)
        amd_factor = (meta["age"] / 55.0) ** 2 / 1.048
        labels["amd"] = rng.random() < min(0.9, prev["amd"] * amd_factor)
        labels["myopia"] = rng.random() < prev["myopia"]
        return labels

    def comorbidity_text(self, hypertension: bool, rng: np.random.Generator) -> str:
        parts = []
        if hypertension:
            parts.append(str(rng.choice(HYPERTENSION_PHRASES)))
        n_decoys = int(rng.integers(0, 3))
        parts.extend(str(p) for p in rng.choice(DECOY_PHRASES, size=n_decoys, replace=False))
        order = rng.permutation(len(parts))
        return ", ".join(parts[i] for i in order)


def _render_image(
    meta: dict,
    labels: dict[str, bool],
    grade: Optional[int],
    spec: SyntheticDataSpec,
    rng: np.random.Generator,
) -> tuple[np.ndarray, list[Lesion]]:
    size = spec.image_size
    xx, yy, dist, cx, cy = _disc_mask_coords(size)
    radius = 0.48 * size
    disc = dist <= radius

    base = np.array([0.55, 0.27, 0.12]) + rng.uniform(-0.05, 0.05, 3)
    shading = 1.0 - 0.35 * (dist / radius) ** 2
    image = np.full((size, size, 3), 0.02, dtype=np.float32)
    for c in range(3):
        image[..., c] = np.where(disc, base[c] * shading, image[..., c])

    lesions: list[Lesion] = []
    occult = {
        d: rng.random() < spec.occult_rate.get(d, 0.0) for d in DISEASES
    }

    # myopia tessellation first so other features sit on top
    if labels["myopia"] and not occult["myopia"]:
        freq = 2 * math.pi * rng.uniform(6.0, 9.0) / size
        grid = 1.0 + 0.10 * spec.lesion_contrast * np.sin(freq * xx) * np.sin(freq * yy)
        for c in range(3):
            image[..., c] = np.where(disc, image[..., c] * grid, image[..., c])
        lesions.append(Lesion("tessellation", cx, cy, radius))

    # vessels from the optic disc
    side = 1 if rng.random() < 0.5 else -1
    od_cx = cx + side * 0.27 * size
    od_cy = cy + rng.uniform(-0.05, 0.05) * size
    vessel_color = (0.33, 0.09, 0.05)
    for _ in range(int(rng.integers(5, 8))):
        angle = rng.uniform(0, 2 * math.pi)
        x, y = od_cx, od_cy
        for _ in range(int(rng.integers(8, 14))):
            step = size / 16.0
            angle += rng.uniform(-0.35, 0.35)
            nx, ny = x - side * abs(math.cos(angle)) * step, y + math.sin(angle) * step
            for t in np.linspace(0, 1, 6):
                px, py = x + t * (nx - x), y + t * (ny - y)
                if (px - cx) ** 2 + (py - cy) ** 2 < (0.95 * radius) ** 2:
                    _stamp(image, px, py, max(1.0, size / 80.0), vessel_color, 0.5)
            x, y = nx, ny

    # optic disc and cup; glaucoma enlarges the cup
    od_radius = 0.075 * size * rng.uniform(0.9, 1.1)
    _stamp(image, od_cx, od_cy, od_radius, (0.95, 0.82, 0.50), 0.95)
    if labels["glaucoma"] and not occult["glaucoma"]:
        cup_ratio = rng.uniform(0.72, 0.88)
    else:
        cup_ratio = rng.uniform(0.30, 0.45)
    cup_radius = cup_ratio * od_radius
    _stamp(image, od_cx, od_cy, cup_radius, (1.0, 0.97, 0.78), 0.95)
    if labels["glaucoma"] and not occult["glaucoma"]:
        lesions.append(Lesion("cupping", od_cx, od_cy, od_radius))

    # macula opposite the disc
    mac_cx = cx - side * 0.13 * size
    mac_cy = cy + rng.uniform(-0.03, 0.03) * size
    mac_radius = 0.06 * size
    _stamp(image, mac_cx, mac_cy, mac_radius * 1.6, (0.38, 0.17, 0.07), 0.55)

    def inside_fundus(px, py, margin):
        return (px - cx) ** 2 + (py - cy) ** 2 < (radius - margin) ** 2

    def avoid_disc(px, py):
        return (px - od_cx) ** 2 + (py - od_cy) ** 2 > (1.6 * od_radius) ** 2

    alpha = min(1.0, 0.85 * spec.lesion_contrast)
    if labels["dr"] and not occult["dr"]:
        severity = 0 if grade is None else grade
        density = 1.0 + 2.5 * severity / max(spec.grade_classes - 1, 1)
        n_dots = int(rng.integers(2, 5) * density)
        for _ in range(n_dots):
            for _attempt in range(20):
                r = rng.uniform(0.15, 0.85) * radius
                theta = rng.uniform(0, 2 * math.pi)
                px, py = cx + r * math.cos(theta), cy + r * math.sin(theta)
                if inside_fundus(px, py, 2) and avoid_disc(px, py):
                    break
            dot_r = rng.uniform(1.0, 2.2) * size / 64.0
            _stamp(image, px, py, dot_r, (0.22, 0.03, 0.02), alpha)
            lesions.append(Lesion("microaneurysm", px, py, dot_r))
        if severity >= (spec.grade_classes + 1) // 2:
            for _ in range(int(rng.integers(1, 3))):
                for _attempt in range(20):
                    r = rng.uniform(0.2, 0.75) * radius
                    theta = rng.uniform(0, 2 * math.pi)
                    px, py = cx + r * math.cos(theta), cy + r * math.sin(theta)
                    if inside_fundus(px, py, 4) and avoid_disc(px, py):
                        break
                blob_r = rng.uniform(2.5, 4.5) * size / 64.0
                _stamp(image, px, py, blob_r, (0.20, 0.02, 0.02), alpha)
                lesions.append(Lesion("hemorrhage", px, py, blob_r))

    if labels["dme"] and not occult["dme"]:
        n_ex = int(rng.integers(4, 8))
        for i in range(n_ex):
            theta = 2 * math.pi * i / n_ex + rng.uniform(-0.3, 0.3)
            r = mac_radius * rng.uniform(1.2, 2.2)
            px, py = mac_cx + r * math.cos(theta), mac_cy + r * math.sin(theta)
            dot_r = rng.uniform(0.9, 1.8) * size / 64.0
            _stamp(image, px, py, dot_r, (0.98, 0.94, 0.55), alpha)
            lesions.append(Lesion("exudate", px, py, dot_r))

    if labels["amd"] and not occult["amd"]:
        for _ in range(int(rng.integers(5, 9))):
            theta = rng.uniform(0, 2 * math.pi)
            r = rng.uniform(0.5, 4.0) * mac_radius
            px, py = mac_cx + r * math.cos(theta), mac_cy + r * math.sin(theta)
            if not inside_fundus(px, py, 2):
                continue
            dot_r = rng.uniform(1.4, 2.6) * size / 64.0
            _stamp(image, px, py, dot_r, (0.90, 0.85, 0.50), 0.7 * spec.lesion_contrast)
            lesions.append(Lesion("drusen", px, py, dot_r))

    image += rng.normal(0.0, 0.015, image.shape).astype(np.float32)
    return np.clip(image, 0.0, 1.0).astype(np.float32), lesions


def generate_synthetic_corpus(spec: SyntheticDataSpec, seed: int = 0) -> SyntheticCorpus:
    sampler = _PatientSampler(spec, seed)
    records: list[RawRecord] = []
    images: list[np.ndarray] = []
    lesion_lists: list[list[Lesion]] = []
    patient_idx = 0
    while len(records) < spec.n_images:
        rng = np.random.default_rng([seed, patient_idx])
        meta = sampler.sample_metadata(rng)
        n_eyes = 2 if rng.random() < spec.two_eye_rate else 1
        n_eyes = min(n_eyes, spec.n_images - len(records))
        pid = f"p{patient_idx:05d}"
        for eye in range(n_eyes):
            labels = sampler.sample_labels(meta, rng)
            grade = int(rng.integers(0, spec.grade_classes)) if labels["dr"] else None
            image, lesions = _render_image(meta, labels, grade, spec, rng)
            age: Optional[float] = meta["age"]
            if rng.random() < spec.missing_age_rate:
                age = None
            records.append(
                RawRecord(
                    patient_id=pid,
                    image_id=f"{pid}_e{eye}",
                    age=round(age, 1) if age is not None else None,
                    sex=meta["sex"],
                    diabetes=meta["diabetes"],
                    diabetes_duration=round(meta["duration"], 1) if meta["diabetes"] else None,
                    comorbidities=sampler.comorbidity_text(meta["hypertension"], rng),
                    labels=dict(labels),
                    dr_grade=grade,
                )
            )
            images.append(image)
            lesion_lists.append(lesions)
        patient_idx += 1
    return SyntheticCorpus(spec, seed, records, images, lesion_lists)
