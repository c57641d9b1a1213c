"""Pool-based active-learning experiment loop.

Protocol per repetition: draw an initial labeled set, then iterate — train the
prediction model (always vanilla softmax + cross entropy) on the current
labels and record test accuracy, then let the method-specific selection side
score the unlabeled pool, clip, and query a batch whose ground-truth labels
are revealed.

Two-model setup: accuracy is always measured on the prediction model so that
a method's selection quality is isolated from any effect its training scheme
would have on classification quality. ``query_seconds`` times exactly the
selection side (selection-model or ensemble-member training, temperature
fitting, trust-index building, scoring, clipping, selection) and excludes
prediction-model training and test evaluation.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import confidence as conf
from .data import Dataset, PoolState
from .learner import LearnerConfig, LearnerModel, accuracy, forward_logits, softmax_probs, train
from .strategy import QueryRequest, entropy_strategy, least_confidence, margin_strategy, random_strategy

__all__ = [
    "METHOD_IDS",
    "METHOD_ALIASES",
    "MethodParams",
    "ExperimentConfig",
    "IterationRecord",
    "RepetitionResult",
    "ExperimentResult",
    "canonical_method",
    "derive_seed",
    "two_model_step",
    "run_experiment",
    "compute_acc_last5",
    "write_result_file",
    "read_result_file",
]

#: canonical method identifiers (lowercased plot abbreviations)
METHOD_IDS = ("lc", "ent", "mm", "rand", "is", "trsc", "evi", "mc", "ve",
              "kld", "tesc", "ls", "pass")

METHOD_ALIASES = {
    "softmax-lc": "lc",
    "softmax-ent": "ent",
    "softmax-mm": "mm",
    "passive": "pass",
}


def canonical_method(method: str) -> str:
    method = method.lower()
    method = METHOD_ALIASES.get(method, method)
    if method not in METHOD_IDS:
        raise ValueError(f"unknown method id {method!r}")
    return method


@dataclass(frozen=True)
class MethodParams:
    """Hyperparameters of the confidence methods."""

    is_alpha: float = 1.0
    is_lambda: float = 0.01
    trsc_k: int = 10
    trsc_density_fraction: float = 0.0
    mc_passes: int = 50
    ensemble_size: int = 5
    ls_alpha: float = 0.2


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment cell: a dataset, a method, and the loop protocol."""

    dataset: str
    method: str
    clip_fraction: float = 0.05
    initial_labeled: int = 25
    iterations: int = 20
    batch_size: int = 25
    repetitions: int = 10
    base_seed: int = 0
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    params: MethodParams = field(default_factory=MethodParams)

    def __post_init__(self):
        object.__setattr__(self, "method", canonical_method(self.method))
        if not 0.0 <= self.clip_fraction < 1.0:
            raise ValueError("clip_fraction must lie in [0, 1)")
        if min(self.initial_labeled, self.iterations, self.batch_size,
               self.repetitions) < 1:
            raise ValueError("protocol sizes must be positive")


@dataclass
class IterationRecord:
    iteration: int
    accuracy: float
    query_seconds: float
    train_seconds: float
    queried: list[int]


@dataclass
class RepetitionResult:
    repetition: int
    initial_labeled: list[int]
    records: list[IterationRecord]
    acc_last5: float

    @property
    def accuracies(self) -> list[float]:
        return [r.accuracy for r in self.records]


@dataclass
class ExperimentResult:
    dataset: str
    method: str
    clip_fraction: float
    repetitions: list[RepetitionResult]
    # misclassified train indices of the passive model, one list per repetition
    wrong_train_indices: list[list[int]] | None = None


def derive_seed(*parts) -> int:
    """Stable non-negative 63-bit seed from structured parts."""
    text = "/".join(str(p) for p in parts)
    digest = hashlib.blake2b(text.encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1


def compute_acc_last5(accuracies) -> float:
    """Arithmetic mean of the final five test accuracies."""
    accs = list(accuracies)
    if len(accs) < 5:
        raise ValueError("need at least five iteration accuracies")
    return float(np.mean(accs[-5:]))


def _selection_config(method: str, cfg: ExperimentConfig, seed: int) -> LearnerConfig:
    p = cfg.params
    base = cfg.learner
    if method == "is":
        return replace(base, head="inhibited", loss="inhibited",
                       is_alpha=p.is_alpha, is_lambda=p.is_lambda, seed=seed)
    if method == "ls":
        return replace(base, head="softmax", loss="label_smoothing",
                       ls_alpha=p.ls_alpha, seed=seed)
    if method == "evi":
        return replace(base, head="evidential", loss="evidential", seed=seed)
    # mc, tesc, ve, kld: vanilla softmax members
    return replace(base, head="softmax", loss="cross_entropy", seed=seed)


def two_model_step(cfg: ExperimentConfig, ds: Dataset, labeled: np.ndarray,
                   rep_seed: int, iteration: int
                   ) -> tuple[LearnerModel, Callable[[np.ndarray], conf.ConfidenceReport] | None]:
    """Train the prediction model and build the method's selection scorer.

    The scorer is a callable mapping pool indices to a ConfidenceReport; it
    performs all method-specific work (including selection-model training)
    when invoked, so a timer around the call captures the selection cost.
    Returns (prediction_model, scorer); the scorer is None for ``rand``.
    """
    method = cfg.method
    pred_cfg = replace(cfg.learner, head="softmax", loss="cross_entropy",
                       seed=derive_seed(rep_seed, iteration, "pred"))
    pred_model = train(pred_cfg, ds, labeled)
    sel_seed = derive_seed(rep_seed, iteration, "sel")

    if method == "rand":
        return pred_model, None

    if method in ("lc", "ent", "mm"):
        def scorer(pool):
            return conf.softmax(forward_logits(pred_model, ds.features[pool]))
    elif method == "trsc":
        def scorer(pool):
            index = conf.build_trust_index(ds, labeled, k=cfg.params.trsc_k,
                                           density_fraction=cfg.params.trsc_density_fraction)
            probs = softmax_probs(forward_logits(pred_model, ds.features[pool]))
            return conf.trust_score(index, ds.features[pool],
                                    np.argmax(probs, axis=1), probs)
    elif method == "is":
        def scorer(pool):
            model = train(_selection_config("is", cfg, sel_seed), ds, labeled)
            return conf.inhibited_softmax(forward_logits(model, ds.features[pool]),
                                          cfg.params.is_alpha)
    elif method == "ls":
        def scorer(pool):
            model = train(_selection_config("ls", cfg, sel_seed), ds, labeled)
            return conf.label_smoothing_confidence(model, ds.features[pool])
    elif method == "evi":
        def scorer(pool):
            model = train(_selection_config("evi", cfg, sel_seed), ds, labeled)
            return conf.evidential_confidence(forward_logits(model, ds.features[pool]))
    elif method == "mc":
        def scorer(pool):
            model = train(_selection_config("mc", cfg, sel_seed), ds, labeled)
            return conf.mc_dropout(model, ds.features[pool], passes=cfg.params.mc_passes,
                                   base_seed=derive_seed(rep_seed, iteration, "mc"))
    elif method == "tesc":
        def scorer(pool):
            model = train(_selection_config("tesc", cfg, sel_seed), ds, labeled)
            t_star = conf.fit_temperature(forward_logits(model, ds.features[labeled]),
                                          ds.labels[labeled])
            return conf.temperature_scaled(forward_logits(model, ds.features[pool]), t_star)
    elif method in ("ve", "kld"):
        def scorer(pool):
            members = [train(_selection_config(method, cfg, sel_seed + e), ds, labeled)
                       for e in range(cfg.params.ensemble_size)]
            dists = np.stack([softmax_probs(forward_logits(m, ds.features[pool]))
                              for m in members])
            if method == "ve":
                return conf.ensemble_vote_entropy(dists)
            return conf.ensemble_kld(dists)
    else:
        raise ValueError(f"method {method!r} has no selection scorer")
    return pred_model, scorer


_RANKERS = {"ent": entropy_strategy, "mm": margin_strategy}


def _draw_initial(ds: Dataset, rep_seed: int, size: int) -> np.ndarray:
    """Uniform initial draw, redrawn with a fresh sub-seed while single-class."""
    train_classes = np.unique(ds.labels[ds.train_indices]).size
    attempt = 0
    while True:
        rng = np.random.default_rng(derive_seed(rep_seed, "init", attempt))
        picked = np.sort(rng.choice(ds.train_indices, size=size, replace=False))
        if train_classes < 2 or np.unique(ds.labels[picked]).size >= 2:
            return picked
        attempt += 1


def _run_passive(cfg: ExperimentConfig, ds: Dataset,
                 clock: Callable[[], float]) -> ExperimentResult:
    reps: list[RepetitionResult] = []
    wrong: list[list[int]] = []
    x_test = ds.features[ds.test_indices]
    y_test = ds.labels[ds.test_indices]
    for r in range(cfg.repetitions):
        rep_seed = cfg.base_seed + r
        model_cfg = replace(cfg.learner, head="softmax", loss="cross_entropy",
                            seed=derive_seed(rep_seed, "pass"))
        t0 = clock()
        model = train(model_cfg, ds, ds.train_indices)
        t1 = clock()
        acc = accuracy(model, x_test, y_test)
        predictions = np.argmax(forward_logits(model, ds.features[ds.train_indices]), axis=1)
        misses = ds.train_indices[predictions != ds.labels[ds.train_indices]]
        wrong.append([int(i) for i in misses])
        record = IterationRecord(iteration=1, accuracy=acc, query_seconds=0.0,
                                 train_seconds=t1 - t0, queried=[])
        reps.append(RepetitionResult(repetition=r, initial_labeled=[],
                                     records=[record], acc_last5=acc))
    return ExperimentResult(cfg.dataset, cfg.method, cfg.clip_fraction, reps,
                            wrong_train_indices=wrong)


def run_experiment(cfg: ExperimentConfig, ds: Dataset,
                   clock: Callable[[], float] = time.perf_counter) -> ExperimentResult:
    """Run every repetition of one experiment cell.

    ``clock`` is injectable so tests can pin timer placement; it must be
    monotonic. Results are fully determined by (cfg, ds).
    """
    if ds.test_indices.size == 0:
        raise ValueError("dataset needs a train/test split before simulation")
    if cfg.method == "pass":
        return _run_passive(cfg, ds, clock)
    budget = cfg.initial_labeled + cfg.iterations * cfg.batch_size
    if budget > ds.train_indices.size:
        raise ValueError(f"protocol needs {budget} train samples, "
                         f"dataset has {ds.train_indices.size}")
    x_test = ds.features[ds.test_indices]
    y_test = ds.labels[ds.test_indices]
    reps: list[RepetitionResult] = []
    for r in range(cfg.repetitions):
        rep_seed = cfg.base_seed + r
        initial = _draw_initial(ds, rep_seed, cfg.initial_labeled)
        pool = PoolState.initial(ds.train_indices, initial)
        records: list[IterationRecord] = []
        for it in range(1, cfg.iterations + 1):
            t0 = clock()
            pred_model, scorer = two_model_step(cfg, ds, pool.labeled, rep_seed, it)
            t1 = clock()
            acc = accuracy(pred_model, x_test, y_test)
            q0 = clock()
            if scorer is None:
                req = QueryRequest(pool.unlabeled, cfg.batch_size,
                                   clip_fraction=cfg.clip_fraction,
                                   seed=derive_seed(rep_seed, it, "rand"))
                picked = random_strategy(req)
            else:
                report = scorer(pool.unlabeled)
                req = QueryRequest(pool.unlabeled, cfg.batch_size, report=report,
                                   clip_fraction=cfg.clip_fraction)
                picked = _RANKERS.get(cfg.method, least_confidence)(req)
            q1 = clock()
            records.append(IterationRecord(
                iteration=it, accuracy=acc, query_seconds=q1 - q0,
                train_seconds=t1 - t0, queried=[int(i) for i in picked]))
            pool = pool.query(picked)
        expected = cfg.initial_labeled + cfg.iterations * cfg.batch_size
        assert pool.labeled.size == expected, "labeled-set growth violated"
        accs = [rec.accuracy for rec in records]
        # runs shorter than five iterations average everything they have
        last5 = compute_acc_last5(accs) if len(accs) >= 5 else float(np.mean(accs))
        reps.append(RepetitionResult(
            repetition=r, initial_labeled=[int(i) for i in initial],
            records=records, acc_last5=last5))
    return ExperimentResult(cfg.dataset, cfg.method, cfg.clip_fraction, reps)


def write_result_file(path, result: ExperimentResult) -> None:
    """Line-delimited records, one per iteration, plus one acc_last5 summary."""
    with open(path, "w", newline="") as fh:
        for rep in result.repetitions:
            for rec in rep.records:
                fh.write(json.dumps({
                    "dataset": result.dataset,
                    "method": result.method,
                    "clip_fraction": result.clip_fraction,
                    "repetition": rep.repetition,
                    "iteration": rec.iteration,
                    "accuracy": rec.accuracy,
                    "query_seconds": round(rec.query_seconds, 3),
                    "queried_indices": rec.queried,
                }) + "\n")
        fh.write(json.dumps({
            "method": result.method,
            "acc_last5": [rep.acc_last5 for rep in result.repetitions],
        }) + "\n")


def read_result_file(path) -> tuple[list[dict], dict]:
    """Parse a result file into (iteration records, summary record)."""
    records: list[dict] = []
    summary: dict | None = None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if "iteration" in obj:
                records.append(obj)
            else:
                summary = obj
    if summary is None:
        raise ValueError(f"result file {path} is missing its summary record")
    return records, summary
