"""Bag-of-words logistic regression for separating genuine illness reports
from spurious keyword matches, plus classifier-filtered weekly fractions.

Features are token counts over a vocabulary built from training data, with a
bias feature at index 0. The objective is the negative log-likelihood plus an
L2 penalty on the non-bias weights, which is strictly convex, so the trained
weights are unique regardless of initialization.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import (
    CorpusError,
    TokenizedMessage,
    WeekBucket,
    message_from_record,
    tokenize_message,
)
from .optimize import minimize_lbfgs
from .query import Query, matches
from .regress import sigmoid

log = logging.getLogger(__name__)


class ClassifierError(ValueError):
    """Bad labeled data, fold counts, or model documents."""


@dataclass(frozen=True, slots=True)
class LabeledMessage:
    message: TokenizedMessage
    label: int

    def __post_init__(self) -> None:
        if self.label not in (0, 1):
            raise ClassifierError(f"label must be 0 or 1, got {self.label!r}")


def load_labeled_jsonl(path: str | Path) -> list[LabeledMessage]:
    """Read labeled messages: corpus JSONL records plus an integer 'label'.

    Duplicate ids and malformed lines raise with the offending line number.
    File order is preserved; shuffling is the cross-validator's job.
    """
    out: list[LabeledMessage] = []
    seen: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ClassifierError(
                    f"line {line_no}: invalid JSON ({exc.msg})"
                ) from None
            if "label" not in record:
                raise ClassifierError(f"line {line_no}: missing field 'label'")
            label = record["label"]
            if isinstance(label, bool) or label not in (0, 1):
                raise ClassifierError(
                    f"line {line_no}: label must be 0 or 1, got {label!r}"
                )
            try:
                msg = message_from_record(
                    {k: v for k, v in record.items() if k != "label"}, line_no
                )
            except CorpusError as exc:
                raise ClassifierError(str(exc)) from None
            if msg.id in seen:
                raise ClassifierError(
                    f"line {line_no}: duplicate message id {msg.id!r} "
                    f"(first seen on line {seen[msg.id]})"
                )
            seen[msg.id] = line_no
            out.append(LabeledMessage(message=tokenize_message(msg), label=label))
    if not out:
        raise ClassifierError(f"labeled file {path}: no records")
    return out


@dataclass(frozen=True)
class ClassifierModel:
    """Trained weights over a fixed vocabulary.

    vocabulary maps token -> feature index in 1..V; index 0 is the bias.
    theta has length V + 1. trained_on fingerprints the training set so a
    model can be told apart from a retrain on different data.
    """

    vocabulary: dict[str, int]
    theta: tuple[float, ...]
    l2_lambda: float
    trained_on: str
    converged: bool

    def __post_init__(self) -> None:
        if len(self.theta) != len(self.vocabulary) + 1:
            raise ClassifierError(
                f"theta length {len(self.theta)} does not fit vocabulary size "
                f"{len(self.vocabulary)} plus bias"
            )
        indices = sorted(self.vocabulary.values())
        if indices != list(range(1, len(self.vocabulary) + 1)):
            raise ClassifierError("vocabulary indices must be exactly 1..V")
        if self.l2_lambda < 0:
            raise ClassifierError("l2_lambda must be >= 0")

    def to_json(self) -> str:
        doc = {
            "vocabulary": self.vocabulary,
            "theta": list(self.theta),
            "l2_lambda": self.l2_lambda,
            "trained_on": self.trained_on,
            "converged": self.converged,
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ClassifierModel":
        doc = json.loads(text)
        try:
            return cls(
                vocabulary={str(k): int(v) for k, v in doc["vocabulary"].items()},
                theta=tuple(float(t) for t in doc["theta"]),
                l2_lambda=float(doc["l2_lambda"]),
                trained_on=str(doc["trained_on"]),
                converged=bool(doc["converged"]),
            )
        except (KeyError, TypeError) as exc:
            raise ClassifierError(f"bad classifier document: {exc}") from None

    @classmethod
    def load(cls, path: str | Path) -> "ClassifierModel":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def build_vocabulary(
    messages: Iterable[TokenizedMessage], min_count: int = 1
) -> dict[str, int]:
    """Alphabetical token -> index map (1-based; 0 is reserved for bias)."""
    counts: dict[str, int] = {}
    for tm in messages:
        for tok in tm.tokens:
            counts[tok] = counts.get(tok, 0) + 1
    kept = sorted(tok for tok, c in counts.items() if c >= min_count)
    return {tok: i + 1 for i, tok in enumerate(kept)}


def featurize(tm: TokenizedMessage, vocabulary: Mapping[str, int]) -> dict[int, int]:
    """Sparse count features: {index: count}, always including bias {0: 1}.
    Out-of-vocabulary tokens are dropped."""
    feats: dict[int, int] = {0: 1}
    for tok in tm.tokens:
        idx = vocabulary.get(tok)
        if idx is not None:
            feats[idx] = feats.get(idx, 0) + 1
    return feats


def _design_matrix(
    data: Sequence[LabeledMessage], vocabulary: Mapping[str, int]
) -> tuple[np.ndarray, np.ndarray]:
    X = np.zeros((len(data), len(vocabulary) + 1), dtype=np.float64)
    y = np.empty(len(data), dtype=np.float64)
    for i, lm in enumerate(data):
        for idx, count in featurize(lm.message, vocabulary).items():
            X[i, idx] = count
        y[i] = lm.label
    return X, y


def loss_and_grad(
    theta: np.ndarray, X: np.ndarray, y: np.ndarray, l2_lambda: float
) -> tuple[float, np.ndarray]:
    """Penalized negative log-likelihood and its gradient.

    loss = sum_i [log(1 + exp(z_i)) - y_i z_i] + (lambda/2) * ||theta[1:]||^2
    with z = X @ theta. The log term uses logaddexp, so huge |z| is safe.
    The bias weight is never penalized.
    """
    z = X @ theta
    loss = float(np.sum(np.logaddexp(0.0, z) - y * z))
    # sigmoid(z), stably: tanh keeps intermediate values bounded.
    p = 0.5 * (1.0 + np.tanh(0.5 * z))
    grad = X.T @ (p - y)
    if l2_lambda > 0:
        loss += 0.5 * l2_lambda * float(theta[1:] @ theta[1:])
        grad[1:] += l2_lambda * theta[1:]
    return loss, grad


def _fingerprint(data: Sequence[LabeledMessage]) -> str:
    lines = sorted(f"{lm.message.message.id}\t{lm.label}" for lm in data)
    return hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()


def train(
    data: Sequence[LabeledMessage],
    l2_lambda: float = 1.0,
    seed: int = 0,
    tol: float = 1e-7,
    max_iters: int = 1000,
    min_token_count: int = 1,
) -> ClassifierModel:
    """Fit the classifier on labeled messages.

    Requires both classes present. The random initialization only picks the
    optimizer's starting point; the optimum itself is unique, so any two
    seeds land on the same weights up to the convergence tolerance. A run
    that exhausts its iteration budget is returned with converged=False and
    a logged warning, never silently.
    """
    if not data:
        raise ClassifierError("no labeled messages")
    labels = {lm.label for lm in data}
    if labels != {0, 1}:
        raise ClassifierError(
            f"training data must contain both classes, got labels {sorted(labels)}"
        )
    vocabulary = build_vocabulary((lm.message for lm in data), min_count=min_token_count)
    X, y = _design_matrix(data, vocabulary)
    rng = np.random.default_rng(seed)
    theta0 = rng.normal(0.0, 0.1, size=len(vocabulary) + 1)
    result = minimize_lbfgs(
        lambda t: loss_and_grad(t, X, y, l2_lambda),
        theta0,
        tol=tol,
        max_iters=max_iters,
    )
    if not result.converged:
        log.warning(
            "classifier training did not converge (max|grad|=%.3e)", result.grad_max
        )
    return ClassifierModel(
        vocabulary=vocabulary,
        theta=tuple(float(t) for t in result.x),
        l2_lambda=l2_lambda,
        trained_on=_fingerprint(data),
        converged=result.converged,
    )


def predict_proba(model: ClassifierModel, tm: TokenizedMessage) -> float:
    """Probability in [0, 1] that the message is a genuine report."""
    theta = model.theta
    z = theta[0]
    for idx, count in featurize(tm, model.vocabulary).items():
        if idx:
            z += theta[idx] * count
    return sigmoid(z)


def predict_label(model: ClassifierModel, tm: TokenizedMessage) -> int:
    """Hard decision at the fixed 0.5 threshold (strictly greater)."""
    return 1 if predict_proba(model, tm) > 0.5 else 0


# --- cross-validation --------------------------------------------------------


METRIC_NAMES = ("accuracy", "precision", "recall", "f1")

# Reference scores (percent, with standard errors) that cross-validation
# on a comparable labeled set is expected to land near.
REFERENCE_CV = {
    "accuracy": (84.29, 1.9),
    "f1": (90.2, 1.5),
    "precision": (92.8, 1.8),
    "recall": (88.1, 2.0),
}


@dataclass(frozen=True, slots=True)
class CvReport:
    """k-fold cross-validation metrics, all in percent."""

    k: int
    per_fold: dict[str, tuple[float, ...]]
    means: dict[str, float]
    standard_errors: dict[str, float]

    def to_json(self) -> str:
        doc = {
            "k": self.k,
            "metrics": {
                name: {
                    "mean": self.means[name],
                    "se": self.standard_errors[name],
                    "per_fold": list(self.per_fold[name]),
                }
                for name in METRIC_NAMES
            },
            "reference": {name: list(REFERENCE_CV[name]) for name in METRIC_NAMES},
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    def table(self) -> str:
        lines = [
            f"{'metric':<10} {'mean %':>8} {'se':>6}   reference",
            "-" * 44,
        ]
        for name in METRIC_NAMES:
            ref_mean, ref_se = REFERENCE_CV[name]
            lines.append(
                f"{name:<10} {self.means[name]:>8.2f} {self.standard_errors[name]:>6.2f}"
                f"   {ref_mean:.2f} ({ref_se:.1f})"
            )
        return "\n".join(lines)


def _fold_metrics(tp: int, fp: int, tn: int, fn: int) -> dict[str, float]:
    total = tp + fp + tn + fn
    accuracy = 100.0 * (tp + tn) / total
    precision = 100.0 * tp / (tp + fp) if tp + fp else 0.0
    recall = 100.0 * tp / (tp + fn) if tp + fn else 0.0
    f1 = (
        2 * precision * recall / (precision + recall) if precision + recall else 0.0
    )
    return {"accuracy": accuracy, "precision": precision, "recall": recall, "f1": f1}


def cross_validate(
    data: Sequence[LabeledMessage],
    k: int = 10,
    seed: int = 0,
    l2_lambda: float = 1.0,
    tol: float = 1e-7,
    max_iters: int = 1000,
) -> CvReport:
    """Stratified k-fold CV with per-fold retraining.

    Both classes are shuffled separately (seeded) and dealt round-robin into
    k folds, so every fold holds both classes; that requires each class to
    have at least k members. The vocabulary is rebuilt from each fold's
    training portion alone, so test tokens never leak into training.
    """
    if k < 2:
        raise ClassifierError(f"k must be >= 2, got {k}")
    if len(data) < k:
        raise ClassifierError(f"{len(data)} labeled messages cannot fill {k} folds")
    pos = [lm for lm in data if lm.label == 1]
    neg = [lm for lm in data if lm.label == 0]
    if min(len(pos), len(neg)) < k:
        raise ClassifierError(
            f"stratified {k}-fold CV needs >= {k} of each class, got "
            f"{len(pos)} positive / {len(neg)} negative"
        )
    rng = np.random.default_rng(seed)
    rng.shuffle(pos)
    rng.shuffle(neg)
    folds: list[list[LabeledMessage]] = [[] for _ in range(k)]
    for i, lm in enumerate(pos):
        folds[i % k].append(lm)
    for i, lm in enumerate(neg):
        folds[i % k].append(lm)

    per_fold: dict[str, list[float]] = {name: [] for name in METRIC_NAMES}
    for f in range(k):
        test = folds[f]
        trainset = [lm for g in range(k) if g != f for lm in folds[g]]
        model = train(
            trainset, l2_lambda=l2_lambda, seed=seed + f + 1, tol=tol, max_iters=max_iters
        )
        tp = fp = tn = fn = 0
        for lm in test:
            pred = predict_label(model, lm.message)
            if pred == 1 and lm.label == 1:
                tp += 1
            elif pred == 1 and lm.label == 0:
                fp += 1
            elif pred == 0 and lm.label == 0:
                tn += 1
            else:
                fn += 1
        for name, value in _fold_metrics(tp, fp, tn, fn).items():
            per_fold[name].append(value)

    means = {name: float(np.mean(vals)) for name, vals in per_fold.items()}
    ses = {
        name: float(np.std(vals, ddof=1) / math.sqrt(k)) for name, vals in per_fold.items()
    }
    return CvReport(
        k=k,
        per_fold={name: tuple(vals) for name, vals in per_fold.items()},
        means=means,
        standard_errors=ses,
    )


# --- classifier-filtered fractions -------------------------------------------


def soft_query_fraction(query: Query, bucket: WeekBucket, model: ClassifierModel) -> float:
    """Sum of match probabilities over query matches, divided by bucket size.

    The denominator is the whole bucket, not just the matches, so this is
    bounded above by the plain query fraction.
    """
    total = len(bucket.messages)
    if total == 0:
        raise ClassifierError(f"week {bucket.week_index}: empty bucket has no fraction")
    score = math.fsum(
        predict_proba(model, tm) for tm in bucket.messages if matches(query, tm)
    )
    return score / total


def hard_query_fraction(query: Query, bucket: WeekBucket, model: ClassifierModel) -> float:
    """Fraction of the bucket that matches the query and scores above 0.5."""
    total = len(bucket.messages)
    if total == 0:
        raise ClassifierError(f"week {bucket.week_index}: empty bucket has no fraction")
    kept = sum(
        1
        for tm in bucket.messages
        if matches(query, tm) and predict_proba(model, tm) > 0.5
    )
    return kept / total


def bucket_fractions(
    query: Query, bucket: WeekBucket, model: ClassifierModel
) -> tuple[float, float, float]:
    """(plain, soft, hard) fractions from a single pass over the bucket."""
    total = len(bucket.messages)
    if total == 0:
        raise ClassifierError(f"week {bucket.week_index}: empty bucket has no fraction")
    n_match = 0
    n_hard = 0
    probs: list[float] = []
    for tm in bucket.messages:
        if matches(query, tm):
            n_match += 1
            p = predict_proba(model, tm)
            probs.append(p)
            if p > 0.5:
                n_hard += 1
    return n_match / total, math.fsum(probs) / total, n_hard / total
