"""Accuracy reports, embedding geometry, and the membership attack.

Two complementary checks of whether unlearning worked:

Accuracy goals compare the unlearned model against a model retrained
without the forgotten data on the relevant views.

The membership-inference attack asks whether the forgotten samples
still look like training members. Members are drawn from the remaining
train split, non-members from the test split, balanced. The attack
features are each sample's softmax probability vector sorted in
descending order, which makes the attack blind to which class a sample
belongs to. A binary logistic model is fitted on those features; a
sample is called a member only when its predicted probability is
strictly above one half. Unlearning succeeded to the extent that the
forgotten samples' member-prediction rate falls below that of held-out
true members.

Embedding geometry gives a direct view: the cosine similarity of each
forgotten sample's embedding to its own class's remaining centroid
should fall as it is pushed out of the cluster.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from .data import Dataset, UnlearnTask
from .errors import ValidationError
from .model import ModelParameters, encode, forward
from .tensor import NORM_EPSILON


def accuracy(params: ModelParameters, dataset: Dataset) -> float:
    """Fraction of samples whose argmax logit matches the label.

    Ties in the logits resolve to the lowest class index.
    """
    logits = forward(params, dataset.features).data
    predicted = np.argmax(logits, axis=1)
    return float(np.mean(predicted == dataset.labels))


@dataclass
class EvaluationReport:
    """Accuracies per view, optionally with a reference model's next to them."""

    task_kind: str
    accuracies: dict[str, float]
    reference: dict[str, float] | None = None
    deltas: dict[str, float] | None = None

    def to_dict(self) -> dict:
        return {
            "task_kind": self.task_kind,
            "accuracies": self.accuracies,
            "reference": self.reference,
            "deltas": self.deltas,
        }

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def evaluate(
    params: ModelParameters,
    task: UnlearnTask,
    reference: ModelParameters | None = None,
) -> EvaluationReport:
    """Accuracies on the views that matter for the task kind.

    Class tasks report the unlearning class's train and test views and
    the remaining test view; sample tasks report the unlearning samples
    and the full test split. With a reference model the report carries
    its accuracies and the (model - reference) deltas.
    """
    if task.kind == "class":
        views = {
            "unlearn_train": task.unlearn_train,
            "unlearn_test": task.unlearn_test,
            "remain_test": task.remain_test,
        }
    else:
        views = {
            "unlearn_train": task.unlearn_train,
            "test": task.test,
        }
    accs = {name: accuracy(params, view) for name, view in views.items()}
    ref_accs = deltas = None
    if reference is not None:
        ref_accs = {name: accuracy(reference, view) for name, view in views.items()}
        deltas = {name: accs[name] - ref_accs[name] for name in views}
    return EvaluationReport(
        task_kind=task.kind, accuracies=accs, reference=ref_accs, deltas=deltas
    )


@dataclass
class GeometryReport:
    """Where the forgotten samples sit relative to the remaining classes.

    One row per unlearning sample: cosine similarity to its own class's
    remaining-train centroid (None when that centroid is absent or
    degenerate) and the maximum similarity over other classes' centroids.
    Centroids are plain means of unit embeddings; a class whose
    embeddings cancel to the zero vector is flagged degenerate.
    """

    rows: list[dict] = field(default_factory=list)
    absent_classes: list[int] = field(default_factory=list)
    degenerate_classes: list[int] = field(default_factory=list)
    mean_own_similarity: float | None = None
    mean_max_other_similarity: float | None = None

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["sample_index", "label", "own_class_similarity", "max_other_similarity"]
            )
            for row in self.rows:
                writer.writerow(
                    [
                        row["sample_index"],
                        row["label"],
                        "" if row["own_class_similarity"] is None else repr(row["own_class_similarity"]),
                        "" if row["max_other_similarity"] is None else repr(row["max_other_similarity"]),
                    ]
                )


def embedding_geometry(params: ModelParameters, task: UnlearnTask) -> GeometryReport:
    """Centroid similarities for every unlearning sample (see GeometryReport)."""
    remain = task.remain_train
    remain_z = encode(params, remain.features).data
    unlearn = task.unlearn_train
    unlearn_z = encode(params, unlearn.features).data

    centroids: dict[int, np.ndarray | None] = {}
    report = GeometryReport()
    for c in range(task.train.num_classes):
        rows = remain_z[remain.labels == c]
        if rows.shape[0] == 0:
            centroids[c] = None
            report.absent_classes.append(c)
            continue
        centroid = rows.mean(axis=0)
        norm = np.linalg.norm(centroid)
        if norm <= NORM_EPSILON:
            centroids[c] = None
            report.degenerate_classes.append(c)
        else:
            centroids[c] = centroid / norm

    own_sims, other_sims = [], []
    for i, (z, label) in enumerate(zip(unlearn_z, unlearn.labels)):
        own = centroids[int(label)]
        own_sim = None if own is None else float(np.dot(z, own))
        others = [
            float(np.dot(z, centroids[c]))
            for c in range(task.train.num_classes)
            if c != label and centroids[c] is not None
        ]
        max_other = max(others) if others else None
        report.rows.append(
            {
                "sample_index": int(task.unlearn_train_idx[i]),
                "label": int(label),
                "own_class_similarity": own_sim,
                "max_other_similarity": max_other,
            }
        )
        if own_sim is not None:
            own_sims.append(own_sim)
        if max_other is not None:
            other_sims.append(max_other)
    if own_sims:
        report.mean_own_similarity = float(np.mean(own_sims))
    if other_sims:
        report.mean_max_other_similarity = float(np.mean(other_sims))
    return report


def attack_features(params: ModelParameters, dataset: Dataset) -> np.ndarray:
    """Softmax probability vectors sorted in descending order per row."""
    logits = forward(params, dataset.features).data
    shifted = logits - logits.max(axis=1, keepdims=True)
    probs = np.exp(shifted)
    probs /= probs.sum(axis=1, keepdims=True)
    return np.sort(probs, axis=1)[:, ::-1]


@dataclass
class AttackModel:
    """Binary logistic membership classifier over sorted softmax vectors."""

    weights: np.ndarray
    bias: float

    def member_scores(self, features: np.ndarray) -> np.ndarray:
        return expit(features @ self.weights + self.bias)

    def predict_member(self, features: np.ndarray) -> np.ndarray:
        """Member only when the score is strictly above one half."""
        return self.member_scores(features) > 0.5


def fit_attack_model(
    features: np.ndarray, labels: np.ndarray, l2: float = 1e-3
) -> AttackModel:
    """Fit the logistic attack by minimizing regularized log-loss.

    The tiny ridge term keeps the optimum finite on separable data; the
    zero start and deterministic optimizer make refits bit-identical.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if features.ndim != 2 or labels.shape != (features.shape[0],):
        raise ValidationError("attack features must be rank 2 with one label per row")
    if not (set(np.unique(labels)) <= {0.0, 1.0}):
        raise ValidationError("attack labels must be 0 (non-member) or 1 (member)")
    signs = 2.0 * labels - 1.0

    def objective(w):
        scores = features @ w[:-1] + w[-1]
        margins = signs * scores
        loss = np.mean(np.logaddexp(0.0, -margins)) + 0.5 * l2 * np.dot(w[:-1], w[:-1])
        p = expit(-margins)
        grad_scores = -(signs * p) / labels.size
        grad_w = features.T @ grad_scores + l2 * w[:-1]
        grad_b = grad_scores.sum()
        return loss, np.concatenate([grad_w, [grad_b]])

    start = np.zeros(features.shape[1] + 1)
    result = minimize(objective, start, jac=True, method="L-BFGS-B")
    return AttackModel(weights=result.x[:-1].copy(), bias=float(result.x[-1]))


@dataclass
class MiaTrainResult:
    """Fitted attack, its validation accuracy, and the evaluation sets."""

    attack: AttackModel
    validation_accuracy: float
    members_size: int
    nonmembers_size: int
    heldout_members: Dataset


@dataclass
class MiaReport:
    """Member-prediction rates the unlearning claim rests on."""

    member_rate_unlearn: float
    member_rate_heldout_members: float
    validation_accuracy: float
    members_size: int
    nonmembers_size: int

    def to_dict(self) -> dict:
        return {
            "member_rate_unlearn": self.member_rate_unlearn,
            "member_rate_heldout_members": self.member_rate_heldout_members,
            "validation_accuracy": self.validation_accuracy,
            "members_size": self.members_size,
            "nonmembers_size": self.nonmembers_size,
        }

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


# Per-side cap on the attack training sets.
MIA_MAX_PER_SIDE = 1000


def mia_train(
    params: ModelParameters, task: UnlearnTask, split_seed: int = 0
) -> MiaTrainResult:
    """Sample balanced member/non-member sets and fit the attack.

    Members come from the remaining train split, non-members from the
    test split, m = min(1000, available) per side. A further m remaining
    samples are reserved as held-out members for rate comparison, and
    20% of the attack set is held out to measure validation accuracy.
    Deterministic in split_seed.
    """
    remain = task.remain_train
    test = task.test
    m = min(MIA_MAX_PER_SIDE, len(remain) // 2, len(test))
    if m < 5:
        raise ValidationError(
            f"not enough data for the attack: {len(remain)} remaining, {len(test)} test"
        )
    rng = np.random.default_rng(split_seed)
    remain_order = rng.permutation(len(remain))
    member_idx = remain_order[:m]
    heldout_idx = remain_order[m : 2 * m]
    nonmember_idx = rng.permutation(len(test))[:m]

    member_features = attack_features(params, remain.subset(member_idx))
    nonmember_features = attack_features(params, test.subset(nonmember_idx))
    features = np.concatenate([member_features, nonmember_features])
    labels = np.concatenate([np.ones(m), np.zeros(m)])

    order = rng.permutation(2 * m)
    n_val = max(1, int(0.2 * 2 * m))
    val_idx, fit_idx = order[:n_val], order[n_val:]
    attack = fit_attack_model(features[fit_idx], labels[fit_idx])
    val_acc = float(
        np.mean(attack.predict_member(features[val_idx]) == (labels[val_idx] == 1.0))
    )
    return MiaTrainResult(
        attack=attack,
        validation_accuracy=val_acc,
        members_size=m,
        nonmembers_size=m,
        heldout_members=remain.subset(heldout_idx),
    )


def mia_member_rate(
    attack: AttackModel, params: ModelParameters, samples: Dataset
) -> float:
    """Fraction of samples the attack calls members under this model."""
    return float(np.mean(attack.predict_member(attack_features(params, samples))))


def run_mia(
    params: ModelParameters, task: UnlearnTask, split_seed: int = 0
) -> MiaReport:
    """Full attack protocol: fit, then rate the forgotten samples."""
    trained = mia_train(params, task, split_seed)
    return MiaReport(
        member_rate_unlearn=mia_member_rate(trained.attack, params, task.unlearn_train),
        member_rate_heldout_members=mia_member_rate(
            trained.attack, params, trained.heldout_members
        ),
        validation_accuracy=trained.validation_accuracy,
        members_size=trained.members_size,
        nonmembers_size=trained.nonmembers_size,
    )
