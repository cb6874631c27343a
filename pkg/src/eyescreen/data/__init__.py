from .records import (
    FundusImage,
    ParseResult,
    PatientRecord,
    RawRecord,
    enforce_consistency,
    extract_hypertension,
    impute_age,
    parse_dataset,
    preprocess_records,
    write_metadata_csv,
)
from .splits import DatasetSplit, kfold_indices, split_patients

__all__ = [
    "FundusImage",
    "ParseResult",
    "PatientRecord",
    "RawRecord",
    "DatasetSplit",
    "enforce_consistency",
    "extract_hypertension",
    "impute_age",
    "kfold_indices",
    "parse_dataset",
    "preprocess_records",
    "split_patients",
    "write_metadata_csv",
]
