"""Record types, CSV ingestion, and the preprocessing rules applied before
any training: hypertension extraction from free-text comorbidities, label
consistency enforcement, and patient-level median age imputation."""

from __future__ import annotations

import csv
import re
import statistics
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .. import DISEASES

CSV_COLUMNS = [
    "patient_id",
    "image_id",
    "age",
    "sex",
    "diabetes",
    "diabetes_duration",
    "comorbidities",
    "dr",
    "glaucoma",
    "dme",
    "amd",
    "myopia",
    "dr_grade",
]

SEXES = ("male", "female")

# long forms match as substrings, short clinical abbreviations only on word
# boundaries ("has"/"sah" are common Portuguese shorthand for hypertension)
HYPERTENSION_KEYWORDS = ("hypertension", "hipertens", "has", "sah")
_SHORT_KEYWORD_LEN = 3


@dataclass
class RawRecord:
    """One metadata row as parsed; optional fields may be missing."""

    patient_id: str
    image_id: str
    age: Optional[float] = None
    sex: str = "male"
    diabetes: Optional[bool] = None
    diabetes_duration: Optional[float] = None
    comorbidities: str = ""
    labels: dict[str, Optional[bool]] = field(default_factory=dict)
    dr_grade: Optional[int] = None


@dataclass
class PatientRecord:
    """Fully resolved record: no missing values, consistency enforced."""

    patient_id: str
    image_id: str
    age: float
    sex: str
    diabetes: bool
    diabetes_duration: float
    hypertension: bool
    labels: dict[str, bool] = field(default_factory=dict)
    dr_grade: Optional[int] = None

    def label_vector(self) -> list[int]:
        return [int(self.labels[d]) for d in DISEASES]


@dataclass
class FundusImage:
    """H x W x 3 image with values in [0, 1]."""

    pixels: np.ndarray
    image_id: str = ""
    quality_label: Optional[str] = None  # 'high' | 'low'

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float32)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError(f"expected HxWx3 pixels, got {self.pixels.shape}")
        if self.pixels.min() < 0 or self.pixels.max() > 1:
            raise ValueError("pixel values must lie in [0, 1]")


@dataclass
class ParseResult:
    records: list[RawRecord]
    row_errors: list[str]
    missing_images: list[str]

    @property
    def ok(self) -> bool:
        return not self.row_errors and not self.missing_images


def _parse_optional_float(value: str, column: str) -> Optional[float]:
    if value == "":
        return None
    return float(value)


def _parse_optional_bool(value: str, column: str) -> Optional[bool]:
    if value == "":
        return None
    if value not in ("0", "1"):
        raise ValueError(f"column {column!r} expects 0/1 or empty, got {value!r}")
    return value == "1"


def parse_dataset(metadata_file, image_dir=None) -> ParseResult:
    """Read a metadata CSV; unreadable rows go into the error report.

    When ``image_dir`` is given, every referenced ``<image_id>.png`` must
    exist; absent files are listed per image_id.
    """
    metadata_file = Path(metadata_file)
    if not metadata_file.exists():
        raise FileNotFoundError(f"metadata file not found: {metadata_file}")
    records: list[RawRecord] = []
    row_errors: list[str] = []
    missing_images: list[str] = []
    with open(metadata_file, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_COLUMNS:
            raise ValueError(
                f"header mismatch: expected {CSV_COLUMNS}, got {reader.fieldnames}"
            )
        for line_no, row in enumerate(reader, start=2):
            try:
                if not row["patient_id"] or not row["image_id"]:
                    raise ValueError("patient_id and image_id must be non-empty")
                if row["sex"] not in SEXES:
                    raise ValueError(f"sex must be one of {SEXES}, got {row['sex']!r}")
                grade = row["dr_grade"]
                record = RawRecord(
                    patient_id=row["patient_id"],
                    image_id=row["image_id"],
                    age=_parse_optional_float(row["age"], "age"),
                    sex=row["sex"],
                    diabetes=_parse_optional_bool(row["diabetes"], "diabetes"),
                    diabetes_duration=_parse_optional_float(
                        row["diabetes_duration"], "diabetes_duration"
                    ),
                    comorbidities=row["comorbidities"],
                    labels={
                        d: _parse_optional_bool(row[d], d) for d in DISEASES
                    },
                    dr_grade=int(grade) if grade != "" else None,
                )
            except (ValueError, KeyError) as exc:
                row_errors.append(f"line {line_no}: {exc}")
                continue
            if image_dir is not None:
                path = Path(image_dir) / f"{record.image_id}.png"
                if not path.exists():
                    missing_images.append(record.image_id)
            records.append(record)
    return ParseResult(records, row_errors, missing_images)


def write_metadata_csv(records: Sequence[RawRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, quoting=csv.QUOTE_MINIMAL)
        writer.writerow(CSV_COLUMNS)
        for r in records:
            def opt(v):
                return "" if v is None else (int(v) if isinstance(v, bool) else v)

            writer.writerow(
                [
                    r.patient_id,
                    r.image_id,
                    opt(r.age),
                    r.sex,
                    opt(r.diabetes),
                    opt(r.diabetes_duration),
                    r.comorbidities,
                    *[opt(r.labels.get(d)) for d in DISEASES],
                    opt(r.dr_grade),
                ]
            )


def extract_hypertension(comorbidities: str, keywords: Sequence[str] = HYPERTENSION_KEYWORDS) -> bool:
    """True iff any keyword occurs in the normalized free text.

    Keywords longer than three characters match as substrings; the short
    clinical abbreviations must stand alone on word boundaries.
    """
    text = comorbidities.lower()
    for kw in keywords:
        kw = kw.lower()
        if len(kw) <= _SHORT_KEYWORD_LEN:
            if re.search(rf"\b{re.escape(kw)}\b", text):
                return True
        elif kw in text:
            return True
    return False


def enforce_consistency(record: RawRecord) -> tuple[RawRecord, list[str]]:
    """Force DR => diabetes and DME => DR & diabetes; log every change."""
    labels = dict(record.labels)
    diabetes = record.diabetes
    changes: list[str] = []
    if labels.get("dme"):
        if not labels.get("dr"):
            labels["dr"] = True
            changes.append(f"{record.image_id}: dme=1 forced dr 0->1")
    if labels.get("dr"):
        if not diabetes:
            diabetes = True
            changes.append(f"{record.image_id}: dr=1 forced diabetes 0->1")
    return replace(record, diabetes=diabetes, labels=labels), changes


def impute_age(records: Sequence[RawRecord]) -> list[RawRecord]:
    """Replace missing ages with the median age over patients that reported one.

    The median is computed per patient (deduplicated by patient_id), not per
    image row.
    """
    by_patient: dict[str, float] = {}
    for r in records:
        if r.age is not None and r.patient_id not in by_patient:
            by_patient[r.patient_id] = r.age
    if not by_patient:
        raise ValueError("cannot impute ages: no record reports an age")
    median = statistics.median(by_patient.values())
    return [r if r.age is not None else replace(r, age=median) for r in records]


def preprocess_records(records: Sequence[RawRecord]) -> tuple[list[PatientRecord], list[str]]:
    """Full preprocessing: hypertension extraction, consistency, imputation.

    Returns resolved records plus the change log from consistency
    enforcement. Unlabeled diseases resolve to False; missing diabetes
    duration resolves to 0 years.
    """
    changes: list[str] = []
    consistent = []
    for r in records:
        fixed, ch = enforce_consistency(r)
        consistent.append(fixed)
        changes.extend(ch)
    imputed = impute_age(consistent)
    out = []
    for r in imputed:
        out.append(
            PatientRecord(
                patient_id=r.patient_id,
                image_id=r.image_id,
                age=float(r.age),
                sex=r.sex,
                diabetes=bool(r.diabetes),
                diabetes_duration=float(r.diabetes_duration or 0.0),
                hypertension=extract_hypertension(r.comorbidities),
                labels={d: bool(r.labels.get(d)) for d in DISEASES},
                dr_grade=r.dr_grade,
            )
        )
    return out, changes
