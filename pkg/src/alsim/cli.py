"""Command-line front end: dataset generation, experiment grids, analysis.

Subcommands::

    alsim gen-data --classes 2 --dim 16 --per-class 1000 \
        --outlier-fraction 0.1 --separation 4 --seed 7 --out blobs.csv
    alsim run grid.cfg --out results/ --jobs 4
    alsim analyze results/ --out results/

`run` writes one result file per grid cell plus ``manifest.json`` (written
before any cell starts) and, for the passive baseline, a ``*.wrong.json``
sidecar with the misclassified train indices. Output content is independent
of ``--jobs``; ``--clock fake`` swaps the wall clock for a deterministic
counter so even the recorded timings reproduce byte-for-byte.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import analysis, data
from .config import GridConfig, build_manifest, parse_config
from .simulator import ExperimentConfig, run_experiment, write_result_file

__all__ = ["main"]


class _FakeClock:
    """Deterministic stand-in for time.perf_counter: 1 ms per reading."""

    def __init__(self):
        self._ticks = 0

    def __call__(self) -> float:
        self._ticks += 1
        return self._ticks * 0.001


def _make_clock(kind: str):
    if kind == "fake":
        return _FakeClock()
    import time

    return time.perf_counter


def _sidecar_path(csv_path: Path) -> Path:
    return csv_path.with_suffix("").parent / (csv_path.with_suffix("").name + ".outliers.json")


def cmd_gen_data(args) -> int:
    ds, outliers = data.generate_blobs(
        class_count=args.classes, dim=args.dim, per_class=args.per_class,
        outlier_fraction=args.outlier_fraction, separation=args.separation,
        seed=args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    data.save_csv(ds, out)
    sidecar = _sidecar_path(out)
    sidecar.write_text(json.dumps({"outlier_indices": [int(i) for i in outliers]}) + "\n")
    print(f"wrote {ds.sample_count} rows to {out} and {outliers.size} outlier "
          f"indices to {sidecar}")
    return 0


def _load_dataset(grid: GridConfig, name: str) -> data.Dataset:
    ds = data.load_csv(grid.datasets[name], class_count=grid.class_count.get(name))
    ds = data.split(ds, grid.test_fraction, seed=grid.base_seed)
    if grid.standardize:
        ds = data.standardize(ds)
    return ds


def _run_cell(task: tuple) -> tuple[str, str | None]:
    """Worker: run one grid cell and write its result file.

    Returns (result_file, error message or None). Top level so it pickles for
    process pools; determinism comes from per-cell seeds, not scheduling.
    """
    grid, cell, out_dir, clock_kind = task
    try:
        ds = _load_dataset(grid, cell["dataset"])
        cfg = ExperimentConfig(
            dataset=cell["dataset"], method=cell["method"],
            clip_fraction=cell["clip_fraction"],
            initial_labeled=grid.initial_labeled, iterations=grid.iterations,
            batch_size=grid.batch_size, repetitions=grid.repetitions,
            base_seed=grid.base_seed,
            learner=replace(grid.learner, seed=grid.base_seed),
            params=grid.params)
        result = run_experiment(cfg, ds, clock=_make_clock(clock_kind))
        path = Path(out_dir) / cell["result_file"]
        write_result_file(path, result)
        if result.wrong_train_indices is not None:
            sidecar = path.with_suffix("").parent / (path.with_suffix("").name + ".wrong.json")
            sidecar.write_text(json.dumps({
                "dataset": cell["dataset"],
                "wrong_indices": result.wrong_train_indices,
            }) + "\n")
        return cell["result_file"], None
    except Exception as exc:  # noqa: BLE001 - per-cell isolation
        return cell["result_file"], f"{type(exc).__name__}: {exc}"


def cmd_run(args) -> int:
    grid = parse_config(args.config)
    missing = [path for path in grid.datasets.values() if not Path(path).is_file()]
    if missing:
        print(f"error: missing dataset files: {', '.join(missing)}", file=sys.stderr)
        return 1
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = build_manifest(args.config, grid, out_dir)
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest.to_json(), indent=2) + "\n")
    tasks = [(grid, cell, str(out_dir), args.clock) for cell in manifest.cells]
    failures = []
    if args.jobs <= 1:
        outcomes = [_run_cell(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            outcomes = list(pool.map(_run_cell, tasks))
    for name, error in outcomes:
        if error is None:
            print(f"ok   {name}")
        else:
            print(f"FAIL {name}: {error}", file=sys.stderr)
            failures.append(name)
    return 1 if failures else 0


def cmd_analyze(args) -> int:
    results_dir = Path(args.results_dir)
    out_dir = Path(args.out) if args.out else results_dir
    datasets: dict[str, data.Dataset] = {}
    manifest_path = results_dir / "manifest.json"
    if manifest_path.is_file():
        manifest = json.loads(manifest_path.read_text())
        grid = GridConfig(
            datasets=manifest["datasets"],
            methods=tuple(manifest["methods"]),
            clip_fractions=tuple(manifest["clip_fractions"]),
            class_count=manifest.get("class_count", {}),
            **manifest["protocol"])
        for name, path in grid.datasets.items():
            if Path(path).is_file():
                datasets[name] = _load_dataset(grid, name)
            else:
                print(f"warning: dataset {path} missing; class shift for "
                      f"{name} skipped", file=sys.stderr)
    else:
        print("warning: no manifest.json; class_shift.csv will be empty",
              file=sys.stderr)
    tables = analysis.write_tables(results_dir, out_dir, datasets or None)
    for table in tables:
        print(f"wrote {table}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="alsim",
        description="Pool-based active-learning simulator comparing "
                    "confidence-probability methods with uncertainty clipping.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="generate a synthetic blob dataset CSV")
    gen.add_argument("--classes", type=int, required=True)
    gen.add_argument("--dim", type=int, required=True)
    gen.add_argument("--per-class", type=int, required=True)
    gen.add_argument("--outlier-fraction", type=float, default=0.0)
    gen.add_argument("--separation", type=float, default=4.0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_gen_data)

    run = sub.add_parser("run", help="run an experiment grid from a config file")
    run.add_argument("config")
    run.add_argument("--out", default="results")
    run.add_argument("--jobs", type=int, default=1)
    run.add_argument("--clock", choices=("wall", "fake"), default="wall")
    run.set_defaults(func=cmd_run)

    ana = sub.add_parser("analyze", help="write analysis tables for a results directory")
    ana.add_argument("results_dir")
    ana.add_argument("--out", default=None)
    ana.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command == "gen-data":
        if args.classes < 2:
            parser.error("--classes must be >= 2")
        if args.per_class < 10:
            parser.error("--per-class must be >= 10")
        if not 0.0 <= args.outlier_fraction < 1.0:
            parser.error("--outlier-fraction must lie in [0, 1)")
        if args.separation <= 0:
            parser.error("--separation must be positive")
    if args.command == "run" and args.jobs < 1:
        parser.error("--jobs must be >= 1")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
