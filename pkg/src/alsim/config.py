"""Experiment-grid configuration: flat key-value text with one section per axis.

Example::

    [datasets]
    blobs = data/blobs.csv

    [methods]
    ids = lc mm rand

    [clip]
    fractions = 0.0 0.05

    [protocol]
    repetitions = 10
    base_seed = 7

Unknown sections or keys are rejected rather than ignored. Every key is
documented in the README; omitted keys take the defaults below.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .learner import LearnerConfig
from .simulator import MethodParams, canonical_method

__all__ = ["GridConfig", "RunManifest", "parse_config", "build_manifest"]

_PROTOCOL_KEYS = {
    "initial_labeled": int,
    "iterations": int,
    "batch_size": int,
    "repetitions": int,
    "base_seed": int,
    "test_fraction": float,
    "standardize": bool,
}

_LEARNER_KEYS = {
    "hidden_sizes": "int_list",
    "dropout_rate": float,
    "epochs": int,
    "learning_rate": float,
    "batch_size": int,
}

_PARAM_KEYS = {
    "is_alpha": float,
    "is_lambda": float,
    "trsc_k": int,
    "trsc_density_fraction": float,
    "mc_passes": int,
    "ensemble_size": int,
    "ls_alpha": float,
}

_SECTIONS = ("datasets", "methods", "clip", "protocol", "learner", "params",
             "class_count")


@dataclass(frozen=True)
class GridConfig:
    """Parsed experiment grid: datasets x methods x clip fractions."""

    datasets: dict[str, str]
    methods: tuple[str, ...]
    clip_fractions: tuple[float, ...]
    initial_labeled: int = 25
    iterations: int = 20
    batch_size: int = 25
    repetitions: int = 10
    base_seed: int = 0
    test_fraction: float = 0.25
    standardize: bool = False
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    params: MethodParams = field(default_factory=MethodParams)
    class_count: dict[str, int] = field(default_factory=dict)


def _split_list(raw: str) -> list[str]:
    return [tok for tok in raw.replace(",", " ").split() if tok]


def _coerce(section: str, key: str, raw: str, kind):
    try:
        if kind is bool:
            lowered = raw.strip().lower()
            if lowered in ("true", "yes", "on", "1"):
                return True
            if lowered in ("false", "no", "off", "0"):
                return False
            raise ValueError(raw)
        if kind == "int_list":
            return tuple(int(tok) for tok in _split_list(raw))
        return kind(raw)
    except ValueError:
        raise ValueError(f"[{section}] {key}: cannot parse {raw!r}") from None


def _read_section(parser, section: str, allowed: dict) -> dict:
    if not parser.has_section(section):
        return {}
    out = {}
    for key, raw in parser.items(section):
        if key not in allowed:
            raise ValueError(f"unknown key {key!r} in section [{section}]")
        out[key] = _coerce(section, key, raw, allowed[key])
    return out


def parse_config(path) -> GridConfig:
    """Parse and validate a grid config file."""
    parser = configparser.ConfigParser(interpolation=None)
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(f"config file {path} not found")
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ValueError(f"unknown section [{section}]")

    if not parser.has_section("datasets") or not parser.items("datasets"):
        raise ValueError("config needs a [datasets] section with at least one entry")
    datasets = dict(parser.items("datasets"))

    if not parser.has_section("methods"):
        raise ValueError("config needs a [methods] section")
    for key, _ in parser.items("methods"):
        if key != "ids":
            raise ValueError(f"unknown key {key!r} in section [methods]")
    methods: list[str] = []
    for token in _split_list(parser.get("methods", "ids", fallback="")):
        method = canonical_method(token)
        if method not in methods:
            methods.append(method)
    if not methods:
        raise ValueError("[methods] ids must name at least one method")

    clip_fractions: tuple[float, ...] = (0.05,)
    if parser.has_section("clip"):
        for key, _ in parser.items("clip"):
            if key != "fractions":
                raise ValueError(f"unknown key {key!r} in section [clip]")
        raw = parser.get("clip", "fractions", fallback="")
        values = tuple(float(tok) for tok in _split_list(raw))
        if values:
            clip_fractions = values
    for clip in clip_fractions:
        if not 0.0 <= clip < 1.0:
            raise ValueError(f"clip fraction {clip} outside [0, 1)")

    protocol = _read_section(parser, "protocol", _PROTOCOL_KEYS)
    learner_kwargs = _read_section(parser, "learner", _LEARNER_KEYS)
    param_kwargs = _read_section(parser, "params", _PARAM_KEYS)

    class_count: dict[str, int] = {}
    if parser.has_section("class_count"):
        for name, raw in parser.items("class_count"):
            if name not in datasets:
                raise ValueError(f"[class_count] names unknown dataset {name!r}")
            class_count[name] = _coerce("class_count", name, raw, int)

    return GridConfig(datasets=datasets, methods=tuple(methods),
                      clip_fractions=clip_fractions,
                      learner=LearnerConfig(**learner_kwargs),
                      params=MethodParams(**param_kwargs),
                      class_count=class_count, **protocol)


@dataclass(frozen=True)
class RunManifest:
    """Resolved grid written to the output directory before any cell runs."""

    config_path: str
    out_dir: str
    base_seed: int
    grid: GridConfig
    cells: tuple[dict, ...]

    def to_json(self) -> dict:
        return {
            "config_path": self.config_path,
            "out_dir": self.out_dir,
            "base_seed": self.base_seed,
            "datasets": self.grid.datasets,
            "methods": list(self.grid.methods),
            "clip_fractions": list(self.grid.clip_fractions),
            "protocol": {
                "initial_labeled": self.grid.initial_labeled,
                "iterations": self.grid.iterations,
                "batch_size": self.grid.batch_size,
                "repetitions": self.grid.repetitions,
                "base_seed": self.grid.base_seed,
                "test_fraction": self.grid.test_fraction,
                "standardize": self.grid.standardize,
            },
            "learner": {
                "hidden_sizes": list(self.grid.learner.hidden_sizes),
                "dropout_rate": self.grid.learner.dropout_rate,
                "epochs": self.grid.learner.epochs,
                "learning_rate": self.grid.learner.learning_rate,
                "batch_size": self.grid.learner.batch_size,
            },
            "params": {
                "is_alpha": self.grid.params.is_alpha,
                "is_lambda": self.grid.params.is_lambda,
                "trsc_k": self.grid.params.trsc_k,
                "trsc_density_fraction": self.grid.params.trsc_density_fraction,
                "mc_passes": self.grid.params.mc_passes,
                "ensemble_size": self.grid.params.ensemble_size,
                "ls_alpha": self.grid.params.ls_alpha,
            },
            "class_count": self.grid.class_count,
            "cells": list(self.cells),
        }


def cell_filename(dataset: str, method: str, clip_fraction: float) -> str:
    return f"{dataset}__{method}__clip{clip_fraction:g}.jsonl"


def build_manifest(config_path, grid: GridConfig, out_dir) -> RunManifest:
    cells = []
    seen: set[str] = set()
    for dataset in grid.datasets:
        for method in grid.methods:
            for clip in grid.clip_fractions:
                name = cell_filename(dataset, method, clip)
                if name in seen:
                    raise ValueError(f"duplicate grid cell output {name!r}")
                seen.add(name)
                cells.append({"dataset": dataset, "method": method,
                              "clip_fraction": clip, "result_file": name})
    return RunManifest(config_path=str(config_path), out_dir=str(Path(out_dir)),
                       base_seed=grid.base_seed, grid=grid, cells=tuple(cells))
