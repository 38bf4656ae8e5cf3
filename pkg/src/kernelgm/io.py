"""Deterministic file formats: CSV tables and JSON manifests.

Every writer here pins the bytes: column order is explicit, floats are
rendered with shortest round-trip repr, newlines are '\n', and JSON is
sorted.  Rerunning a seeded experiment must reproduce its output files
byte for byte, so nothing in this module may consult clocks, locales,
or dict iteration order of unsorted inputs.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .evaluation import FrequencyMap, RateCheckResult
from .kernels import Dataset


def format_value(v) -> str:
    """Canonical text for one CSV cell."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _open_write(path):
    return open(path, "w", encoding="utf-8", newline="")


def write_rows_csv(path, rows, columns) -> None:
    """Write dict rows under an explicit column order."""
    columns = list(columns)
    with _open_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(row[c]) for c in columns])


def read_rows_csv(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return [dict(r) for r in csv.DictReader(fh)]


def write_matrix_csv(path, matrix) -> None:
    """Square (or rectangular) float matrix with c{j} headers."""
    mat = np.asarray(matrix, dtype=float)
    if mat.ndim != 2:
        raise InvalidInputError(f"matrix must be 2-d, got shape {mat.shape}")
    cols = [f"c{j}" for j in range(mat.shape[1])]
    with _open_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for row in mat:
            writer.writerow([repr(float(v)) for v in row])


def read_matrix_csv(path) -> np.ndarray:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)  # header
        rows = [[float(v) for v in row] for row in reader]
    return np.asarray(rows, dtype=float)


def write_dataset_csv(path, dataset: Dataset) -> None:
    """Samples as rows; columns x{s} for scalars, x{s}_f{j} for vectors."""
    n, p, d = dataset.values.shape
    if d == 1:
        cols = [f"x{s}" for s in range(p)]
    else:
        cols = [f"x{s}_f{j}" for s in range(p) for j in range(d)]
    flat = dataset.values.reshape(n, p * d)
    with _open_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for row in flat:
            writer.writerow([repr(float(v)) for v in row])


def read_dataset_csv(path) -> Dataset:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    if not header:
        raise InvalidInputError(f"{path} has no header")
    if "_f" in header[-1]:
        tail = header[-1]
        p = int(tail.split("_f")[0][1:]) + 1
        d = int(tail.split("_f")[1]) + 1
    else:
        p = len(header)
        d = 1
    arr = np.asarray(rows, dtype=float)
    return Dataset(arr.reshape(arr.shape[0], p, d))


def write_frequency_csv(path, fm: FrequencyMap) -> None:
    cols = [f"c{j}" for j in range(fm.matrix.shape[1])]
    with _open_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for row in fm.matrix:
            writer.writerow([str(int(v)) for v in row])


def read_frequency_csv(path, n_replications: int) -> FrequencyMap:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        rows = [[int(v) for v in row] for row in reader]
    return FrequencyMap(matrix=np.asarray(rows, dtype=int), n_replications=n_replications)


def write_ratecheck_csv(path, result: RateCheckResult) -> None:
    """One row per sample size: n, median, then raw per-replication values."""
    reps = result.statistics.shape[0]
    cols = ["n", "median"] + [f"rep{r}" for r in range(reps)]
    with _open_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for k, n in enumerate(result.sample_sizes):
            row = [str(int(n)), repr(float(result.statistic_medians[k]))]
            row += [repr(float(v)) for v in result.statistics[:, k]]
            writer.writerow(row)


def canonical_json(payload) -> str:
    return json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def config_hash(payload) -> str:
    """sha256 of the canonical JSON rendering."""
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


def write_manifest(path, payload) -> None:
    Path(path).write_text(canonical_json(payload), encoding="utf-8")


def read_manifest(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))
