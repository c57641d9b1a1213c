"""Confidence-probability quantification methods.

Every method maps a model (or ensemble of models) and a sample batch to a
ConfidenceReport. The report's ``uncertainty`` is the ranking key used by the
query strategies: higher always means less confident, whatever the method's
native scale (one minus confidence, committee disagreement, Dirichlet mass,
inverse trust).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from .learner import LearnerModel, forward_logits, softmax_probs

__all__ = [
    "ConfidenceReport",
    "TrustIndex",
    "softmax",
    "inhibited_softmax",
    "build_trust_index",
    "trust_score",
    "evidential_confidence",
    "mc_dropout",
    "ensemble_vote_entropy",
    "ensemble_kld",
    "fit_temperature",
    "temperature_scaled",
    "label_smoothing_confidence",
    "TEMPERATURE_GRID",
]

#: temperature candidates: 1000 equally spaced values in (0, 10]
TEMPERATURE_GRID = np.arange(1, 1001) * 0.01


@dataclass(frozen=True)
class ConfidenceReport:
    """Per-sample class distribution, prediction, confidence, and uncertainty."""

    class_distribution: np.ndarray
    predicted_class: np.ndarray
    confidence: np.ndarray
    uncertainty: np.ndarray

    def __len__(self) -> int:
        return self.predicted_class.size


def _report(dist: np.ndarray, uncertainty: np.ndarray | None = None,
            predicted: np.ndarray | None = None) -> ConfidenceReport:
    dist = np.atleast_2d(np.asarray(dist, dtype=np.float64))
    if predicted is None:
        predicted = np.argmax(dist, axis=1)  # ties resolve to lowest class id
    confidence = dist[np.arange(dist.shape[0]), predicted]
    if uncertainty is None:
        uncertainty = 1.0 - confidence
    return ConfidenceReport(dist, predicted, confidence,
                            np.asarray(uncertainty, dtype=np.float64))


def softmax(logits) -> ConfidenceReport:
    """Vanilla softmax distribution; uncertainty is one minus confidence."""
    return _report(softmax_probs(logits))


def inhibited_softmax(logits, alpha_const: float = 1.0) -> ConfidenceReport:
    """Softmax with a constant ``exp(alpha_const)`` inhibition term in the
    denominator; the distribution sums to strictly less than one."""
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    m = np.maximum(z.max(axis=1, keepdims=True), alpha_const)
    e = np.exp(z - m)
    denom = e.sum(axis=1, keepdims=True) + np.exp(alpha_const - m)
    return _report(e / denom)


@dataclass(frozen=True)
class TrustIndex:
    """Per-class retained labeled points used for trust-score distances."""

    points: tuple[np.ndarray, ...]
    k: int


def build_trust_index(ds, labeled, k: int = 10,
                      density_fraction: float = 0.0) -> TrustIndex:
    """Collect per-class labeled points, optionally discarding the
    ``density_fraction`` with the largest within-class k-NN radius.

    Classes with fewer than k+1 labeled points skip the filtering; classes
    absent from the labeled set get an empty retained set.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not 0.0 <= density_fraction < 1.0:
        raise ValueError("density_fraction must lie in [0, 1)")
    idx = np.asarray(labeled, dtype=np.int64)
    x = ds.features[idx]
    y = ds.labels[idx]
    retained: list[np.ndarray] = []
    for c in range(ds.class_count):
        pts = x[y == c]
        if density_fraction > 0.0 and pts.shape[0] >= k + 1:
            dists = cdist(pts, pts)
            np.fill_diagonal(dists, np.inf)
            radius = np.sort(dists, axis=1)[:, k - 1]
            drop = int(density_fraction * pts.shape[0])  # floor keeps the set non-empty
            if drop:
                keep = np.argsort(radius, kind="stable")[:pts.shape[0] - drop]
                pts = pts[np.sort(keep)]
        retained.append(pts)
    return TrustIndex(tuple(retained), k)


def trust_score(index: TrustIndex, features, predicted,
                class_distribution) -> ConfidenceReport:
    """Ratio of the distance to the nearest other class over the distance to
    the predicted class; uncertainty is ``1/(1+ts)`` so higher trust ranks as
    more confident. The class distribution is copied from the caller's model
    (the score itself is model-independent and only reranks).
    """
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    predicted = np.asarray(predicted, dtype=np.int64)
    n, k = x.shape[0], len(index.points)
    dmin = np.full((n, k), np.inf)
    for c, pts in enumerate(index.points):
        if pts.shape[0]:
            dmin[:, c] = cdist(x, pts).min(axis=1)
    rows = np.arange(n)
    d_pred = dmin[rows, predicted]
    others = dmin.copy()
    others[rows, predicted] = np.inf
    d_other = others.min(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ts = d_other / d_pred
    ts[d_pred == 0.0] = np.inf  # sitting on the predicted cluster: full trust
    with np.errstate(invalid="ignore"):
        unc = 1.0 / (1.0 + ts)
    unc[np.isinf(ts)] = 0.0
    return _report(class_distribution, uncertainty=unc, predicted=predicted)


def evidential_confidence(logits) -> ConfidenceReport:
    """Dirichlet parameters ``relu(logits) + 1``; the distribution is the
    Dirichlet mean and uncertainty is ``K / total_mass`` in (0, 1]."""
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    alpha = np.maximum(z, 0.0) + 1.0
    total = alpha.sum(axis=1)
    return _report(alpha / total[:, None], uncertainty=z.shape[1] / total)


def mc_dropout(model: LearnerModel, features, passes: int = 50,
               base_seed: int = 0) -> ConfidenceReport:
    """Arithmetic mean of softmax outputs over stochastic dropout passes with
    seeds ``base_seed .. base_seed + passes - 1``."""
    if passes < 1:
        raise ValueError("passes must be >= 1")
    acc = None
    for i in range(passes):
        probs = softmax_probs(forward_logits(model, features, dropout_active=True,
                                             rng_seed=base_seed + i))
        acc = probs if acc is None else acc + probs
    return _report(acc / passes)


def _member_array(member_distributions) -> np.ndarray:
    dists = np.asarray(member_distributions, dtype=np.float64)
    if dists.ndim != 3 or dists.shape[0] < 2:
        raise ValueError("need an (E, M, K) array with at least two members")
    return dists


def ensemble_vote_entropy(member_distributions) -> ConfidenceReport:
    """Entropy of the members' argmax votes; zero when all members agree and
    maximal (ln E) when every member votes differently. The predicted class is
    the plurality vote, ties resolving to the lowest class id."""
    dists = _member_array(member_distributions)
    n_members, n_samples, n_classes = dists.shape
    votes = np.argmax(dists, axis=2)
    counts = np.zeros((n_samples, n_classes))
    for m in range(n_samples):
        counts[m] = np.bincount(votes[:, m], minlength=n_classes)
    frac = counts / n_members
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(frac > 0.0, frac * np.log(frac), 0.0)
    entropy = -terms.sum(axis=1)
    return _report(dists.mean(axis=0), uncertainty=entropy,
                   predicted=np.argmax(counts, axis=1))


def ensemble_kld(member_distributions, floor: float = 1e-12) -> ConfidenceReport:
    """Mean member-to-consensus KL divergence; the consensus (mean) is the
    reported distribution. Probabilities are floored before the logs."""
    dists = _member_array(member_distributions)
    consensus = dists.mean(axis=0)
    p = np.maximum(dists, floor)
    q = np.maximum(consensus, floor)
    kld = (p * (np.log(p) - np.log(q)[None, :, :])).sum(axis=2).mean(axis=0)
    return _report(consensus, uncertainty=kld)


def fit_temperature(logits, labels) -> float:
    """Grid-search the softmax temperature minimizing mean cross entropy on
    the given labeled logits; ties resolve to the smallest temperature."""
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    y = np.asarray(labels, dtype=np.int64)
    if y.size == 0:
        raise ValueError("need at least one labeled sample")
    rows = np.arange(y.size)
    scaled = z[None, :, :] / TEMPERATURE_GRID[:, None, None]
    nll = (logsumexp(scaled, axis=2) - scaled[:, rows, y]).mean(axis=1)
    return float(TEMPERATURE_GRID[int(np.argmin(nll))])


def temperature_scaled(logits, temperature: float) -> ConfidenceReport:
    """Softmax of ``logits / temperature``; identical to softmax at T=1."""
    if temperature <= 0.0:
        raise ValueError("temperature must be positive")
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    return _report(softmax_probs(z / temperature))


def label_smoothing_confidence(model: LearnerModel, features) -> ConfidenceReport:
    """Plain softmax of a label-smoothing-trained model; the method acts at
    training time, inference is vanilla."""
    if model.config.loss != "label_smoothing":
        warnings.warn("model was not trained with label smoothing", RuntimeWarning,
                      stacklevel=2)
    return softmax(forward_logits(model, features))
