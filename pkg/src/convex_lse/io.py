"""CSV ingestion and JSON model serialization.

CSV files are a plain RFC-4180 subset: UTF-8, one header row, numeric
cells, no embedded newlines. Model documents are JSON with an explicit
format_version; floating point numbers are written in Python's shortest
round-trip decimal form, so write/read cycles reproduce every array
bit-exactly and documents stay comparable across implementations.
"""

from __future__ import annotations

import csv
import json
import os

import numpy as np

from .core import (
    Dataset,
    FitModel,
    ScaleTransform,
    SolveDiagnostics,
    SolveStatus,
    Variant,
    validate,
)
from .errors import (
    MissingColumnError,
    ParseError,
    SchemaMismatchError,
    VersionUnsupportedError,
)

MODEL_FORMAT_VERSION = 1


def _parse_cell(text: str, row: int, column: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ParseError(
            f"cell {text!r} at row {row}, column {column!r} is not numeric"
        )


def _read_table(path) -> tuple[list[str], list[list[float]]]:
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{os.fspath(path)!r} is empty, expected a header row")
        header = [h.strip() for h in header]
        rows: list[list[float]] = []
        for line_no, record in enumerate(reader, start=2):
            if not record or (len(record) == 1 and not record[0].strip()):
                continue  # ignore blank lines
            if len(record) != len(header):
                raise ParseError(
                    f"row {line_no} has {len(record)} cells, expected {len(header)}"
                )
            rows.append(
                [
                    _parse_cell(cell.strip(), line_no, name)
                    for name, cell in zip(header, record)
                ]
            )
    return header, rows


def read_csv(path, response_column: str) -> Dataset:
    """Load a dataset: the named column is the response, every other
    column is a coordinate, in header order."""
    header, rows = _read_table(path)
    if response_column not in header:
        raise MissingColumnError(
            f"column {response_column!r} not in header {header}"
        )
    y_pos = header.index(response_column)
    data = np.asarray(rows, dtype=np.float64).reshape(len(rows), len(header))
    responses = data[:, y_pos]
    points = np.delete(data, y_pos, axis=1)
    return validate(points, responses)


def read_points_csv(path) -> tuple[np.ndarray, list[str]]:
    """Load query points: every column is a coordinate. Returns the
    (k, d) array and the column names."""
    header, rows = _read_table(path)
    points = np.asarray(rows, dtype=np.float64).reshape(len(rows), len(header))
    return points, header


def _fmt(value: float) -> str:
    return str(float(value))


def write_csv(dataset: Dataset, path, response_column: str = "y") -> None:
    """Write a dataset back to CSV (coordinates named x1..xd), with
    shortest round-trip decimal cells."""
    names = [f"x{i + 1}" for i in range(dataset.d)]
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(names + [response_column])
        for point, response in zip(dataset.points, dataset.responses):
            writer.writerow([_fmt(v) for v in point] + [_fmt(response)])


def write_model(model: FitModel, path) -> None:
    """Serialize a fitted model to a JSON document, format_version 1."""
    transform = model.scale_transform
    document = {
        "format_version": MODEL_FORMAT_VERSION,
        "variant": model.variant.value,
        "points": model.points.tolist(),
        "fitted": model.fitted.tolist(),
        "subgradients": model.subgradients.tolist(),
        "diagnostics": model.diagnostics.as_dict(),
        "scale_transform": {
            "x_offset": transform.x_offset.tolist(),
            "x_scale": transform.x_scale.tolist(),
            "y_offset": transform.y_offset,
            "degenerate": [bool(f) for f in transform.degenerate],
        },
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(document, handle, indent=2)
        handle.write("\n")


def _require(document: dict, key: str):
    if key not in document:
        raise SchemaMismatchError(f"model document is missing {key!r}")
    return document[key]


def _array(document: dict, key: str, shape: tuple) -> np.ndarray:
    raw = _require(document, key)
    try:
        arr = np.asarray(raw, dtype=np.float64)
    except (TypeError, ValueError):
        raise SchemaMismatchError(f"field {key!r} is not a numeric array")
    if arr.shape != shape:
        raise SchemaMismatchError(
            f"field {key!r} has shape {arr.shape}, expected {shape}"
        )
    arr.flags.writeable = False
    return arr


def read_model(path) -> FitModel:
    """Parse a model document; inverse of write_model.

    Raises SchemaMismatch on malformed or truncated documents and
    VersionUnsupported when format_version differs from 1.
    """
    with open(path, encoding="utf-8") as handle:
        try:
            document = json.load(handle)
        except json.JSONDecodeError as exc:
            raise SchemaMismatchError(f"not a JSON document: {exc}")
    if not isinstance(document, dict):
        raise SchemaMismatchError("model document must be a JSON object")

    version = _require(document, "format_version")
    if version != MODEL_FORMAT_VERSION:
        raise VersionUnsupportedError(
            f"format_version {version!r} unsupported, expected {MODEL_FORMAT_VERSION}"
        )

    try:
        variant = Variant(_require(document, "variant"))
    except ValueError:
        raise SchemaMismatchError(f"unknown variant {document['variant']!r}")

    raw_points = _require(document, "points")
    try:
        n = len(raw_points)
        d = len(raw_points[0])
    except (TypeError, IndexError):
        raise SchemaMismatchError("field 'points' is not an n x d array")
    points = _array(document, "points", (n, d))
    fitted = _array(document, "fitted", (n,))
    subgradients = _array(document, "subgradients", (n, d))

    diag_raw = _require(document, "diagnostics")
    try:
        diagnostics = SolveDiagnostics(
            status=SolveStatus(diag_raw["status"]),
            iterations=int(diag_raw["iterations"]),
            primal_residual=float(diag_raw["primal_residual"]),
            stationarity_residual=float(diag_raw["stationarity_residual"]),
            objective=float(diag_raw["objective"]),
            polished=bool(diag_raw.get("polished", False)),
            rho_final=float(diag_raw.get("rho_final", float("nan"))),
        )
    except (KeyError, TypeError, ValueError):
        raise SchemaMismatchError("field 'diagnostics' is malformed")

    transform_raw = _require(document, "scale_transform")
    try:
        x_offset = np.asarray(transform_raw["x_offset"], dtype=np.float64)
        x_scale = np.asarray(transform_raw["x_scale"], dtype=np.float64)
        transform = ScaleTransform(
            x_offset=x_offset,
            x_scale=x_scale,
            y_offset=float(transform_raw["y_offset"]),
            degenerate=np.asarray(transform_raw["degenerate"], dtype=bool),
        )
    except (KeyError, TypeError, ValueError):
        raise SchemaMismatchError("field 'scale_transform' is malformed")
    if x_offset.shape != (d,) or x_scale.shape != (d,):
        raise SchemaMismatchError("scale_transform dimensions disagree with points")
    x_offset.flags.writeable = False
    x_scale.flags.writeable = False

    return FitModel(
        variant=variant,
        points=points,
        fitted=fitted,
        subgradients=subgradients,
        diagnostics=diagnostics,
        scale_transform=transform,
    )
