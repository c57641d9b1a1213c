"""Post-hoc analyses over experiment result files.

Four delimiter-separated tables are produced from a results directory:
``summary.csv`` (acc_last5 mean/sd and mean per-loop query seconds),
``jaccard.csv`` (pairwise overlap of queried-sample unions, including the
passive model's misclassified train samples as pseudo-method ``wrong`` when
available), ``jaccard_delta.csv`` (clipped minus unclipped coefficients), and
``class_shift.csv`` (queried class fractions minus train fractions).
"""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset
from .simulator import read_result_file

__all__ = [
    "CellResult",
    "jaccard",
    "jaccard_matrix",
    "jaccard_delta",
    "class_shift",
    "summarize",
    "load_results",
    "write_tables",
    "TABLE_NAMES",
]

TABLE_NAMES = ("summary.csv", "jaccard.csv", "jaccard_delta.csv", "class_shift.csv")


@dataclass
class CellResult:
    """Parsed result file for one (dataset, method, clip_fraction) cell."""

    dataset: str
    method: str
    clip_fraction: float
    acc_last5: list[float]
    query_seconds: list[float]
    queried_union: set[int]


def load_results(results_dir) -> list[CellResult]:
    """Parse every ``*.jsonl`` result file in a directory."""
    cells = []
    for path in sorted(Path(results_dir).glob("*.jsonl")):
        records, summary = read_result_file(path)
        union: set[int] = set()
        seconds: list[float] = []
        dataset = method = None
        clip = 0.0
        for rec in records:
            dataset = rec["dataset"]
            method = rec["method"]
            clip = rec["clip_fraction"]
            union.update(rec["queried_indices"])
            seconds.append(rec["query_seconds"])
        if dataset is None:
            continue
        cells.append(CellResult(dataset, method, clip, list(summary["acc_last5"]),
                                seconds, union))
    if not cells:
        raise ValueError(f"no result files found in {results_dir}")
    return cells


def load_wrong_sets(results_dir) -> dict[str, set[int]]:
    """Union of the passive model's misclassified train indices per dataset."""
    wrong: dict[str, set[int]] = {}
    for path in sorted(Path(results_dir).glob("*.wrong.json")):
        payload = json.loads(path.read_text())
        union = wrong.setdefault(payload["dataset"], set())
        for per_rep in payload["wrong_indices"]:
            union.update(per_rep)
    return wrong


def jaccard(a: set[int], b: set[int]) -> float:
    """|A intersect B| / |A union B|, with J(empty, empty) defined as 1."""
    union = a | b
    if not union:
        return 1.0
    return len(a & b) / len(union)


def jaccard_matrix(unions: dict[str, set[int]]) -> tuple[list[str], np.ndarray]:
    """Symmetric pairwise Jaccard matrix over the given method unions."""
    if len(unions) < 2:
        raise ValueError("need at least two methods")
    names = list(unions)
    size = len(names)
    matrix = np.ones((size, size))
    for i in range(size):
        for j in range(i + 1, size):
            matrix[i, j] = matrix[j, i] = jaccard(unions[names[i]], unions[names[j]])
    return names, matrix


def jaccard_delta(base: np.ndarray, clipped: np.ndarray) -> np.ndarray:
    """Elementwise clipped minus base; method ordering must match."""
    base = np.asarray(base, dtype=np.float64)
    clipped = np.asarray(clipped, dtype=np.float64)
    if base.shape != clipped.shape:
        raise ValueError("matrices must share their shape and method order")
    return clipped - base


def class_shift(union: set[int], ds: Dataset) -> np.ndarray:
    """Per-class queried fraction minus train fraction; entries sum to ~0."""
    if not union:
        raise ValueError("queried union is empty")
    queried = np.fromiter(union, dtype=np.int64)
    train_labels = ds.labels[ds.train_indices]
    queried_labels = ds.labels[queried]
    shifts = np.empty(ds.class_count)
    for c in range(ds.class_count):
        shifts[c] = (np.mean(queried_labels == c) - np.mean(train_labels == c))
    return shifts


def summarize(cells: list[CellResult]) -> list[dict]:
    """Mean/sd of acc_last5 and mean per-loop query seconds per cell, plus a
    grand mean across datasets per (method, clip) under dataset ``ALL``."""
    if not cells:
        raise ValueError("no results to summarize")
    rows = []
    for cell in sorted(cells, key=lambda c: (c.dataset, c.method, c.clip_fraction)):
        accs = np.asarray(cell.acc_last5, dtype=np.float64)
        rows.append({
            "dataset": cell.dataset,
            "method": cell.method,
            "clip_fraction": cell.clip_fraction,
            "acc_last5_mean": float(accs.mean()),
            "acc_last5_sd": float(accs.std()),
            "query_seconds_mean": float(np.mean(cell.query_seconds)) if cell.query_seconds else 0.0,
        })
    # grand mean: average of per-dataset means, datasets weighted equally
    grouped: dict[tuple[str, float], list[dict]] = defaultdict(list)
    for row in rows:
        grouped[(row["method"], row["clip_fraction"])].append(row)
    for (method, clip), members in sorted(grouped.items()):
        if len({m["dataset"] for m in members}) < 2:
            continue
        rows.append({
            "dataset": "ALL",
            "method": method,
            "clip_fraction": clip,
            "acc_last5_mean": float(np.mean([m["acc_last5_mean"] for m in members])),
            "acc_last5_sd": float(np.mean([m["acc_last5_sd"] for m in members])),
            "query_seconds_mean": float(np.mean([m["query_seconds_mean"] for m in members])),
        })
    return rows


def _write_csv(path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_tables(results_dir, out_dir, datasets: dict[str, Dataset] | None = None) -> list[Path]:
    """Write the four analysis tables; re-running is byte-identical.

    ``datasets`` maps dataset names to loaded (and split) Datasets; the class
    shift table needs them and is skipped with an empty table otherwise.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = load_results(results_dir)
    wrong_sets = load_wrong_sets(results_dir)

    summary_rows = [[r["dataset"], r["method"], f"{r['clip_fraction']:g}",
                     f"{r['acc_last5_mean']:.6f}", f"{r['acc_last5_sd']:.6f}",
                     f"{r['query_seconds_mean']:.6f}"]
                    for r in summarize(cells)]
    _write_csv(out_dir / "summary.csv",
               ["dataset", "method", "clip_fraction", "acc_last5_mean",
                "acc_last5_sd", "query_seconds_mean"], summary_rows)

    by_cell: dict[tuple[str, float], dict[str, set[int]]] = defaultdict(dict)
    for cell in cells:
        if cell.method == "pass":
            continue
        by_cell[(cell.dataset, cell.clip_fraction)][cell.method] = cell.queried_union

    jaccard_rows = []
    matrices: dict[tuple[str, float], tuple[list[str], np.ndarray]] = {}
    for (dataset, clip), unions in sorted(by_cell.items()):
        unions = dict(sorted(unions.items()))
        if dataset in wrong_sets:
            unions["wrong"] = wrong_sets[dataset]
        if len(unions) < 2:
            continue
        names, matrix = jaccard_matrix(unions)
        matrices[(dataset, clip)] = (names, matrix)
        for i, a in enumerate(names):
            for j, b in enumerate(names):
                if i < j:
                    jaccard_rows.append([dataset, f"{clip:g}", a, b,
                                         f"{matrix[i, j]:.6f}"])
    _write_csv(out_dir / "jaccard.csv",
               ["dataset", "clip_fraction", "method_a", "method_b", "jaccard"],
               jaccard_rows)

    delta_rows = []
    for (dataset, clip), (names, clipped) in sorted(matrices.items()):
        if clip == 0.0 or (dataset, 0.0) not in matrices:
            continue
        base_names, base = matrices[(dataset, 0.0)]
        if base_names != names:
            continue  # method sets differ; no comparable delta
        delta = jaccard_delta(base, clipped)
        for i, a in enumerate(names):
            for j, b in enumerate(names):
                if i < j:
                    delta_rows.append([dataset, f"{clip:g}", a, b,
                                       f"{delta[i, j]:+.6f}"])
    _write_csv(out_dir / "jaccard_delta.csv",
               ["dataset", "clip_fraction", "method_a", "method_b", "delta"],
               delta_rows)

    shift_rows = []
    if datasets:
        for cell in sorted(cells, key=lambda c: (c.dataset, c.method, c.clip_fraction)):
            ds = datasets.get(cell.dataset)
            if ds is None or not cell.queried_union:
                continue
            for c, shift in enumerate(class_shift(cell.queried_union, ds)):
                shift_rows.append([cell.dataset, cell.method,
                                   f"{cell.clip_fraction:g}", c, f"{shift:+.6f}"])
    _write_csv(out_dir / "class_shift.csv",
               ["dataset", "method", "clip_fraction", "class", "shift"], shift_rows)

    return [out_dir / name for name in TABLE_NAMES]
