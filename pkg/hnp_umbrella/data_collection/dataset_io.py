"""
Dataset and cohort ingestion.

Datasets are CSV files with header `y,x1,...,xd`. A cohort is a manifest CSV
(`patient_id,label,path`) pointing at one gene-by-cell-type CSV per patient, whose
header is `gene,<cell type>,...`. Paths in a manifest are relative to the manifest.
"""

import logging
import math
import os
import re
from pathlib import Path
from typing import List, Sequence

import numpy as np
import pandas as pd

from ..analysis.scoring import LabeledDataset
from ..utilities.errors import DatasetParseError, InvalidArgumentError, ReportIOError
from .featurize import PatientMatrix

logger = logging.getLogger(__name__)

MANIFEST_COLUMNS = ["patient_id", "label", "path"]


def _read_text_table(path: str) -> pd.DataFrame:
    """Read a CSV as text; row r of the frame is line r + 2 of the file."""
    if not os.path.exists(path):
        raise ReportIOError(f"File not found: {path}", path=path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skip_blank_lines=False)
    except pd.errors.EmptyDataError:
        raise DatasetParseError(f"{path}: file is empty", line=1, path=str(path))
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        raise DatasetParseError(f"{path}: ragged row ({e})", line=int(match.group(1)) if match else None,
                                path=str(path))
    frame = frame.fillna("")
    blank = (frame.apply(lambda column: column.str.strip()) == "").all(axis=1).to_numpy()
    if blank.any():
        row = int(np.argmax(blank))
        raise DatasetParseError(f"{path}: blank line", line=row + 2, path=str(path))
    return frame


def _parse_float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        return math.nan


def _numeric_column(frame: pd.DataFrame, column: str, path: str) -> np.ndarray:
    """Parse one text column as floats; the first bad cell raises with its file line (header = line 1)."""
    text = frame[column].str.strip()
    try:
        values = text.to_numpy(dtype=object).astype(float)
    except ValueError:
        values = text.map(_parse_float).to_numpy(dtype=float)
    bad = np.isnan(values)
    if bad.any():
        row = int(np.argmax(bad))
        raise DatasetParseError(
            f"{path}: non-numeric or missing value {frame[column].iloc[row]!r} in column {column!r}",
            line=row + 2, path=str(path), column=column)
    return values


def load_dataset_csv(path: str) -> LabeledDataset:
    """
    Load a labelled dataset.

    Args:
        path: CSV with header y,x1,...,xd and integer labels >= 1

    Returns:
        LabeledDataset with I = max label and the file's row order
    """
    path = str(path)
    frame = _read_text_table(path)
    header = [c.strip() for c in frame.columns]
    expected = ["y"] + [f"x{j}" for j in range(1, len(header))]
    if len(header) < 2 or header != expected:
        raise DatasetParseError(f"{path}: header must be y,x1,...,xd, got {','.join(header)}", line=1,
                                path=path)
    frame.columns = header
    if frame.empty:
        raise InvalidArgumentError(f"{path}: no data rows", path=path)

    labels = _numeric_column(frame, "y", path)
    bad = (labels < 1) | (labels != np.round(labels))
    if bad.any():
        row = int(np.argmax(bad))
        raise DatasetParseError(f"{path}: label {frame['y'].iloc[row]!r} is not an integer >= 1",
                                line=row + 2, path=path)
    features = np.column_stack([_numeric_column(frame, c, path) for c in header[1:]])
    data = LabeledDataset(features, labels.astype(int), int(labels.max()))
    logger.info(f"Loaded {len(data)} observations, I = {data.num_classes}, d = {data.dim} from {path}")
    return data


def save_dataset_csv(data: LabeledDataset, path: str):
    """Write y,x1..xd with 17 significant digits so a reload reproduces every value."""
    frame = pd.DataFrame(data.features, columns=[f"x{j}" for j in range(1, data.dim + 1)])
    frame.insert(0, "y", data.labels)
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format="%.17g")
    except OSError as e:
        raise ReportIOError(f"Could not write dataset: {e}", path=path)
    logger.info(f"Dataset saved to: {path}")


def save_labels(labels: Sequence[int], path: str):
    """One-column CSV `label` with one row per input row."""
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        pd.DataFrame({"label": np.asarray(labels, dtype=int)}).to_csv(path, index=False)
    except OSError as e:
        raise ReportIOError(f"Could not write labels: {e}", path=path)
    logger.info(f"{len(labels)} labels saved to: {path}")


def _load_patient_matrix(path: str, patient_id: str, label) -> PatientMatrix:
    frame = _read_text_table(path)
    header = [c.strip() for c in frame.columns]
    if len(header) < 2 or header[0] != "gene":
        raise DatasetParseError(f"{path}: header must be gene,<cell types>", line=1, path=path)
    frame.columns = header
    if frame.empty:
        raise InvalidArgumentError(f"{path}: no gene rows", path=path)
    values = np.column_stack([_numeric_column(frame, c, path) for c in header[1:]])
    return PatientMatrix(values, frame["gene"].str.strip().tolist(), header[1:], patient_id, label)


def load_cohort(manifest_path: str) -> List[PatientMatrix]:
    """
    Load every patient listed in a manifest.

    Args:
        manifest_path: CSV with columns patient_id,label,path; label may be empty

    Returns:
        Patient matrices in manifest order
    """
    manifest_path = str(manifest_path)
    frame = _read_text_table(manifest_path)
    header = [c.strip() for c in frame.columns]
    if header != MANIFEST_COLUMNS:
        raise DatasetParseError(f"{manifest_path}: header must be {','.join(MANIFEST_COLUMNS)}", line=1,
                                path=manifest_path)
    frame.columns = header
    if frame.empty:
        raise InvalidArgumentError(f"{manifest_path}: manifest lists no patients", path=manifest_path)

    base = Path(manifest_path).parent
    cohort = []
    for row, record in enumerate(frame.itertuples(index=False), start=2):
        label_text = record.label.strip()
        label = None
        if label_text:
            try:
                label = int(label_text)
            except ValueError:
                raise DatasetParseError(f"{manifest_path}: label {label_text!r} is not an integer",
                                        line=row, path=manifest_path)
            if label < 1:
                raise DatasetParseError(f"{manifest_path}: label {label} must be >= 1", line=row,
                                        path=manifest_path)
        cohort.append(_load_patient_matrix(str(base / record.path.strip()), record.patient_id.strip(), label))

    first = cohort[0]
    for patient in cohort[1:]:
        if patient.genes != first.genes or patient.cell_types != first.cell_types:
            raise InvalidArgumentError(f"patient {patient.patient_id}: axes differ from {first.patient_id}",
                                       path=manifest_path)
    logger.info(f"Loaded cohort of {len(cohort)} patients ({len(first.genes)} genes x "
                f"{len(first.cell_types)} cell types) from {manifest_path}")
    return cohort


def save_cohort(cohort: Sequence[PatientMatrix], directory: str) -> str:
    """Write one CSV per patient plus manifest.csv; returns the manifest path."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        rows = []
        for j, patient in enumerate(cohort, start=1):
            patient_id = patient.patient_id or f"p{j}"
            file_name = f"{patient_id}.csv"
            frame = pd.DataFrame(patient.values, columns=list(patient.cell_types))
            frame.insert(0, "gene", list(patient.genes))
            frame.to_csv(directory / file_name, index=False, float_format="%.17g")
            rows.append({"patient_id": patient_id, "label": "" if patient.label is None else patient.label,
                         "path": file_name})
        manifest = directory / "manifest.csv"
        pd.DataFrame(rows, columns=MANIFEST_COLUMNS).to_csv(manifest, index=False)
    except OSError as e:
        raise ReportIOError(f"Could not write cohort: {e}", path=str(directory))
    return str(manifest)
