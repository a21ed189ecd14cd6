"""Feature-file ingestion: the FVB1 binary container and labeled CSV.

FVB1, little-endian: magic "FVB1" | u32 n | u32 d | i32 labels[n] |
f32 data[n*d] row-major.

CSV: optional header row; a column named "label" becomes the labels,
otherwise every row is unlabeled (-1). All other columns are features.
"""

from __future__ import annotations

import csv
import struct

import numpy as np

from .errors import FormatError, NonFiniteFeature
from .features import FeatureMatrix

FVB1_MAGIC = b"FVB1"

FORMAT_FVB1 = "fvb1"
FORMAT_CSV = "csv"


def read_features(path, format: str = FORMAT_FVB1) -> FeatureMatrix:
    if format == FORMAT_FVB1:
        return _read_fvb1(path)
    if format == FORMAT_CSV:
        return _read_csv(path)
    raise ValueError(f"unknown feature format {format!r}")


def write_features(matrix: FeatureMatrix, path, format: str = FORMAT_FVB1) -> None:
    if format == FORMAT_FVB1:
        _write_fvb1(matrix, path)
    elif format == FORMAT_CSV:
        _write_csv(matrix, path)
    else:
        raise ValueError(f"unknown feature format {format!r}")


def infer_format(path) -> str:
    return FORMAT_CSV if str(path).lower().endswith(".csv") else FORMAT_FVB1


def _read_fvb1(path) -> FeatureMatrix:
    with open(path, "rb") as handle:
        blob = handle.read()
    if blob[:4] != FVB1_MAGIC:
        raise FormatError("bad magic, expected 'FVB1'", offset=0)
    if len(blob) < 12:
        raise FormatError("truncated header", offset=len(blob))
    n, dim = struct.unpack("<II", blob[4:12])
    if dim < 1:
        raise FormatError(f"feature dimension must be >= 1, got {dim}", offset=8)
    labels_end = 12 + 4 * n
    data_end = labels_end + 4 * n * dim
    if len(blob) < labels_end:
        raise FormatError("truncated label block", offset=len(blob))
    if len(blob) != data_end:
        raise FormatError(
            f"expected {data_end} bytes total, found {len(blob)}",
            offset=min(len(blob), data_end),
        )
    labels = np.frombuffer(blob, dtype="<i4", count=n, offset=12).astype(np.int64)
    data = (
        np.frombuffer(blob, dtype="<f4", count=n * dim, offset=labels_end)
        .astype(np.float64)
        .reshape(n, dim)
    )
    if data.size and not np.all(np.isfinite(data)):
        raise NonFiniteFeature("feature data contains NaN or Inf")
    return FeatureMatrix(data, labels)


def _write_fvb1(matrix: FeatureMatrix, path) -> None:
    header = FVB1_MAGIC + struct.pack("<II", matrix.n, matrix.dim)
    labels = np.ascontiguousarray(matrix.labels, dtype="<i4").tobytes()
    data = np.ascontiguousarray(matrix.data, dtype="<f4").tobytes()
    with open(path, "wb") as handle:
        handle.write(header + labels + data)


def _looks_numeric(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def _read_csv(path) -> FeatureMatrix:
    with open(path, "r", newline="") as handle:
        reader = csv.reader(handle)
        rows = [row for row in reader if row]
    if not rows:
        raise FormatError("empty CSV file", offset=0)
    header = None
    if any(not _looks_numeric(cell) for cell in rows[0]):
        header = [cell.strip() for cell in rows[0]]
        rows = rows[1:]
    label_col = header.index("label") if header is not None and "label" in header else None

    width = len(header) if header is not None else (len(rows[0]) if rows else 0)
    data_rows = []
    labels = []
    for line_no, row in enumerate(rows, start=2 if header is not None else 1):
        if len(row) != width:
            raise FormatError(f"row has {len(row)} cells, expected {width}", offset=line_no)
        try:
            values = [float(cell) for cell in row]
        except ValueError as exc:
            raise FormatError(f"non-numeric cell: {exc}", offset=line_no) from exc
        if label_col is not None:
            labels.append(int(values[label_col]))
            values = [v for i, v in enumerate(values) if i != label_col]
        data_rows.append(values)
    if width == 0 or (label_col is not None and width == 1):
        raise FormatError("CSV has no feature columns", offset=1)
    feature_width = width - (1 if label_col is not None else 0)
    data = np.asarray(data_rows, dtype=np.float64).reshape(len(data_rows), feature_width)
    if data.size and not np.all(np.isfinite(data)):
        raise NonFiniteFeature("feature data contains NaN or Inf")
    label_arr = np.asarray(labels, dtype=np.int64) if label_col is not None else None
    return FeatureMatrix(data, label_arr)


def _write_csv(matrix: FeatureMatrix, path) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["label"] + [f"f{i}" for i in range(matrix.dim)])
        for label, row in zip(matrix.labels, matrix.data):
            writer.writerow([int(label)] + [repr(float(v)) for v in row])
