"""Patient-level dataset splitting. All images of a patient land in the same
split, which prevents two-eyes leakage between train and test."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass
class DatasetSplit:
    train: list[str]
    val: list[str]
    test: list[str]
    seed: int

    def all_ids(self) -> list[str]:
        return self.train + self.val + self.test


def _patients_in_order(records) -> list[str]:
    seen = {}
    for r in records:
        seen.setdefault(r.patient_id, None)
    return sorted(seen)


def split_patients(
    records: Sequence, ratios: tuple[float, float, float] = (0.5, 0.25, 0.25), seed: int = 0
) -> DatasetSplit:
    """Shuffle patients with a seeded RNG and partition by cumulative ratio."""
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three positive numbers summing to 1, got {ratios}")
    patients = _patients_in_order(records)
    if len(patients) < 4:
        raise ValueError(f"need at least 4 distinct patients, got {len(patients)}")
    rng = np.random.default_rng(seed)
    order = [patients[i] for i in rng.permutation(len(patients))]
    n = len(order)
    n_train = round(n * ratios[0])
    n_val = round(n * (ratios[0] + ratios[1])) - n_train
    groups = {
        pid: [] for pid in patients
    }
    for r in records:
        groups[r.patient_id].append(r.image_id)
    train_p = set(order[:n_train])
    val_p = set(order[n_train : n_train + n_val])

    def images_of(pids):
        return [img for pid in sorted(pids) for img in groups[pid]]

    return DatasetSplit(
        train=images_of(train_p),
        val=images_of(val_p),
        test=images_of(set(order[n_train + n_val :])),
        seed=seed,
    )


def kfold_indices(records: Sequence, k: int = 5, seed: int = 0) -> list[list[str]]:
    """Disjoint, exhaustive, patient-grouped folds of image ids."""
    if k < 2:
        raise ValueError(f"k must be at least 2, got {k}")
    patients = _patients_in_order(records)
    if len(patients) < k:
        raise ValueError(f"need at least {k} patients for {k} folds, got {len(patients)}")
    rng = np.random.default_rng(seed)
    order = [patients[i] for i in rng.permutation(len(patients))]
    chunks = np.array_split(np.array(order, dtype=object), k)
    groups: dict[str, list[str]] = {pid: [] for pid in patients}
    for r in records:
        groups[r.patient_id].append(r.image_id)
    return [[img for pid in sorted(chunk) for img in groups[pid]] for chunk in chunks]
