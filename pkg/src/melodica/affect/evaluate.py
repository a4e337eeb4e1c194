"""Seeded stratified cross-validation and the metric set reported per run.

Folds are derived from a canonical ordering of the samples (per-class
lexicographic sort of the feature vectors, then a seeded shuffle), so
results do not depend on dataset row order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .classify import Kernel, TrainedModel, knn_train, svm_train


class InsufficientClassMembers(ValueError):
    pass


@dataclass(frozen=True)
class ClassifierSpec:
    kind: str  # "svm" | "knn"
    kernel: str = "rbf"  # svm: linear | poly | rbf
    c: float = 1.0
    gamma: float | None = None
    degree: int = 3
    k: int = 1  # knn

    def fit(self, x: np.ndarray, labels: list[str]) -> TrainedModel:
        if self.kind == "svm":
            kernel = Kernel(kind=self.kernel, gamma=self.gamma, degree=self.degree)
            return svm_train(x, labels, kernel=kernel, c=self.c)
        if self.kind == "knn":
            return knn_train(x, labels, k=self.k)
        raise ValueError(f"unknown classifier kind {self.kind!r}")

    def describe(self) -> str:
        if self.kind == "svm":
            return f"svm-{self.kernel}"
        return f"knn-k{self.k}"


@dataclass
class EvalResult:
    accuracy: float
    auc: float | None
    precision: float | None
    recall: float | None
    confusion: np.ndarray
    labels: tuple[str, ...]

    def row(self) -> dict:
        return {
            "accuracy_pct": round(100.0 * self.accuracy, 2),
            "auc": None if self.auc is None else round(self.auc, 4),
            "precision_pct": None if self.precision is None else round(100.0 * self.precision, 2),
            "recall_pct": None if self.recall is None else round(100.0 * self.recall, 2),
        }


def stratified_folds(x: np.ndarray, labels: list[str], folds: int, seed: int) -> list[np.ndarray]:
    """Row-order-invariant seeded stratified fold assignment.

    Returns a list of index arrays, one per fold.
    """
    labels_arr = np.array(labels)
    classes = sorted(set(labels))
    rng = np.random.default_rng(seed)
    fold_indices: list[list[int]] = [[] for _ in range(folds)]
    for cls in classes:
        members = np.nonzero(labels_arr == cls)[0]
        if len(members) < folds:
            raise InsufficientClassMembers(
                f"class {cls!r} has {len(members)} samples, fewer than {folds} folds"
            )
        # canonical order first, then the seeded permutation
        canon = members[np.lexsort(x[members].T)]
        perm = canon[rng.permutation(len(canon))]
        for i, idx in enumerate(perm):
            fold_indices[i % folds].append(int(idx))
    return [np.array(sorted(f)) for f in fold_indices]


def roc_auc(scores: np.ndarray, is_positive: np.ndarray) -> float:
    """Trapezoidal area under the ROC curve from decision scores."""
    order = np.argsort(-scores, kind="stable")
    pos = is_positive[order].astype(float)
    neg = 1.0 - pos
    tp = np.concatenate([[0.0], np.cumsum(pos)])
    fp = np.concatenate([[0.0], np.cumsum(neg)])
    if tp[-1] == 0 or fp[-1] == 0:
        return 1.0 if tp[-1] > 0 else 0.0
    tpr = tp / tp[-1]
    fpr = fp / fp[-1]
    return float(np.trapezoid(tpr, fpr))


def evaluate(spec: ClassifierSpec, x, labels, folds: int = 5, seed: int = 0,
             positive_label: str | None = None) -> EvalResult:
    """Pooled k-fold metrics for the classifier spec on the dataset.

    Binary datasets report AUC (threshold sweep over decision values) and
    precision/recall for the positive class (first-listed label by default);
    multiclass reports accuracy and the confusion matrix only.
    """
    x = np.asarray(x, dtype=float)
    labels = list(labels)
    class_order = tuple(dict.fromkeys(labels))
    if positive_label is None:
        positive_label = class_order[0]
    fold_sets = stratified_folds(x, labels, folds, seed)

    predictions = [None] * len(labels)
    scores = np.zeros(len(labels))
    labels_arr = np.array(labels)
    for test_idx in fold_sets:
        train_mask = np.ones(len(labels), dtype=bool)
        train_mask[test_idx] = False
        model = spec.fit(x[train_mask], list(labels_arr[train_mask]))
        preds = model.predict(x[test_idx])
        for i, p in zip(test_idx, preds):
            predictions[i] = p
        if len(class_order) == 2:
            scores[test_idx] = model.decision(x[test_idx], positive=positive_label)

    predictions = np.array(predictions)
    accuracy = float((predictions == labels_arr).mean())

    confusion = np.zeros((len(class_order), len(class_order)), dtype=int)
    index = {cls: i for i, cls in enumerate(class_order)}
    for true, pred in zip(labels_arr, predictions):
        confusion[index[true], index[pred]] += 1

    auc = precision = recall = None
    if len(class_order) == 2:
        is_pos = labels_arr == positive_label
        auc = roc_auc(scores, is_pos)
        pred_pos = predictions == positive_label
        tp = int(np.sum(pred_pos & is_pos))
        precision = tp / max(1, int(pred_pos.sum()))
        recall = tp / max(1, int(is_pos.sum()))
    return EvalResult(
        accuracy=accuracy,
        auc=auc,
        precision=precision,
        recall=recall,
        confusion=confusion,
        labels=class_order,
    )
