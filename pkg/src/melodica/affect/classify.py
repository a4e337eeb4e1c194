"""Margin classifiers for the EDA features: SMO-trained SVM and KNN.

The SVM solves the binary soft-margin dual with sequential minimal
optimization (pairwise coordinate ascent, Platt-style heuristics made
deterministic); multiclass goes through one-vs-one voting.  Models carry the
training-split normalization stats so prediction normalizes identically.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

KKT_TOL = 1e-3
_STEP_EPS = 1e-8


class DegenerateData(ValueError):
    pass


class EmptyTrainingSet(ValueError):
    pass


@dataclass(frozen=True)
class Kernel:
    kind: str  # linear | poly | rbf
    gamma: float | None = None  # rbf
    degree: int = 3
    coef0: float = 1.0

    def matrix(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        if self.kind == "linear":
            return a @ b.T
        if self.kind == "poly":
            return (a @ b.T + self.coef0) ** self.degree
        if self.kind == "rbf":
            gamma = self.gamma if self.gamma is not None else 1.0 / a.shape[1]
            sq = ((a**2).sum(axis=1)[:, None] + (b**2).sum(axis=1)[None, :] - 2.0 * a @ b.T)
            return np.exp(-gamma * np.maximum(sq, 0.0))
        raise ValueError(f"unknown kernel {self.kind!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "gamma": self.gamma, "degree": self.degree, "coef0": self.coef0}

    @classmethod
    def from_dict(cls, d: dict) -> "Kernel":
        return cls(kind=d["kind"], gamma=d.get("gamma"), degree=d.get("degree", 3),
                   coef0=d.get("coef0", 1.0))


@dataclass
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray) -> "Normalizer":
        std = x.std(axis=0)
        return cls(mean=x.mean(axis=0), std=np.where(std > 1e-12, std, 1.0))

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std


@dataclass
class _BinaryMachine:
    """One trained binary SVM: decision(x) = sum alpha_i y_i K(sv_i, x) + b."""

    support_vectors: np.ndarray
    coef: np.ndarray  # alpha_i * y_i
    bias: float
    kernel: Kernel

    def decision(self, x: np.ndarray) -> np.ndarray:
        k = self.kernel.matrix(np.atleast_2d(x), self.support_vectors)
        return k @ self.coef + self.bias


def _smo(kmat: np.ndarray, y: np.ndarray, c: float, tol: float = KKT_TOL,
         max_passes: int = 200, objective_history: list | None = None):
    """Sequential minimal optimization on a precomputed kernel matrix.

    Deterministic variant of the classic two-loop heuristic: the outer loop
    alternates full sweeps and non-bound sweeps and stops only when a full
    sweep changes nothing; the partner is chosen by largest |E1 - E2| with
    index order breaking ties.  Internally the threshold convention is
    u(x) = sum alpha y K - b; the returned bias is for decision = ... + b.
    """
    n = len(y)
    alphas = np.zeros(n)
    b = 0.0
    errors = -y.astype(float)  # u(x_i) - y_i with all alphas zero

    def objective() -> float:
        ay = alphas * y
        return alphas.sum() - 0.5 * ay @ kmat @ ay

    def take_step(i1: int, i2: int) -> bool:
        nonlocal b
        if i1 == i2:
            return False
        a1, a2 = alphas[i1], alphas[i2]
        y1, y2 = y[i1], y[i2]
        e1, e2 = errors[i1], errors[i2]
        s = y1 * y2
        if s > 0:
            lo, hi = max(0.0, a1 + a2 - c), min(c, a1 + a2)
        else:
            lo, hi = max(0.0, a2 - a1), min(c, c + a2 - a1)
        if hi - lo < _STEP_EPS:
            return False
        k11, k22, k12 = kmat[i1, i1], kmat[i2, i2], kmat[i1, i2]
        eta = k11 + k22 - 2.0 * k12
        if eta > _STEP_EPS:
            a2_new = a2 + y2 * (e1 - e2) / eta
            a2_new = min(hi, max(lo, a2_new))
        else:
            # flat or concave direction: compare the objective at the clip ends
            f1 = y1 * (e1 + b) - a1 * k11 - s * a2 * k12
            f2 = y2 * (e2 + b) - a2 * k22 - s * a1 * k12
            l1 = a1 + s * (a2 - lo)
            h1 = a1 + s * (a2 - hi)
            lo_obj = l1 * f1 + lo * f2 + 0.5 * l1**2 * k11 + 0.5 * lo**2 * k22 + s * lo * l1 * k12
            hi_obj = h1 * f1 + hi * f2 + 0.5 * h1**2 * k11 + 0.5 * hi**2 * k22 + s * hi * h1 * k12
            if lo_obj < hi_obj - _STEP_EPS:
                a2_new = lo
            elif lo_obj > hi_obj + _STEP_EPS:
                a2_new = hi
            else:
                return False
        if abs(a2_new - a2) < _STEP_EPS * (a2_new + a2 + _STEP_EPS):
            return False
        a1_new = a1 + s * (a2 - a2_new)

        b1 = e1 + y1 * (a1_new - a1) * k11 + y2 * (a2_new - a2) * k12 + b
        b2 = e2 + y1 * (a1_new - a1) * k12 + y2 * (a2_new - a2) * k22 + b
        if 0.0 < a1_new < c:
            b_new = b1
        elif 0.0 < a2_new < c:
            b_new = b2
        else:
            b_new = (b1 + b2) / 2.0

        errors[:] += (
            y1 * (a1_new - a1) * kmat[i1]
            + y2 * (a2_new - a2) * kmat[i2]
            - (b_new - b)
        )
        alphas[i1], alphas[i2] = a1_new, a2_new
        b = b_new
        if objective_history is not None:
            objective_history.append(objective())
        return True

    def examine(i2: int) -> bool:
        y2, a2, e2 = y[i2], alphas[i2], errors[i2]
        r2 = e2 * y2
        if not ((r2 < -tol and a2 < c) or (r2 > tol and a2 > 0)):
            return False
        non_bound = np.nonzero((alphas > 0) & (alphas < c))[0]
        if len(non_bound) > 1:
            i1 = int(non_bound[np.argmax(np.abs(errors[non_bound] - e2))])
            if take_step(i1, i2):
                return True
        for i1 in non_bound:
            if take_step(int(i1), i2):
                return True
        for i1 in range(len(y)):
            if take_step(i1, i2):
                return True
        return False

    examine_all = True
    changed = 0
    for _ in range(max_passes * n):
        changed = 0
        targets = range(n) if examine_all else map(int, np.nonzero((alphas > 0) & (alphas < c))[0])
        for i2 in targets:
            changed += examine(int(i2))
        if examine_all:
            if changed == 0:
                break  # full sweep clean: KKT satisfied everywhere
            examine_all = False
        elif changed == 0:
            examine_all = True
    return alphas, -b


def kkt_violation(kmat: np.ndarray, y: np.ndarray, alphas: np.ndarray, bias: float,
                  c: float) -> float:
    """Worst KKT violation of the dual solution (0 when fully satisfied)."""
    decision = kmat @ (alphas * y) + bias
    margins = y * decision
    viol = np.zeros_like(margins)
    lower = alphas <= _STEP_EPS  # require margin >= 1
    upper = alphas >= c - _STEP_EPS  # require margin <= 1
    middle = ~lower & ~upper  # require margin == 1
    viol[lower] = np.maximum(0.0, 1.0 - margins[lower])
    viol[upper] = np.maximum(0.0, margins[upper] - 1.0)
    viol[middle] = np.abs(margins[middle] - 1.0)
    return float(viol.max()) if len(viol) else 0.0


@dataclass
class TrainedModel:
    """A fitted classifier: one-vs-one SVM machines or a KNN vector store."""

    kind: str  # "svm" | "knn"
    classes: tuple[str, ...]
    normalizer: Normalizer
    machines: dict[tuple[str, str], _BinaryMachine] = field(default_factory=dict)
    knn_k: int = 0
    knn_x: np.ndarray | None = None
    knn_y: tuple[str, ...] = ()

    # -- prediction ----------------------------------------------------

    def decision(self, x, positive: str | None = None) -> np.ndarray:
        """Binary only: signed decision values, positive toward ``positive``
        (default: the first-listed class)."""
        if len(self.classes) != 2:
            raise ValueError("decision values are defined for binary models")
        if positive is None:
            positive = self.classes[0]
        if positive not in self.classes:
            raise ValueError(f"{positive!r} is not one of {self.classes}")
        sign = 1.0 if positive == self.classes[0] else -1.0
        xs = self.normalizer.apply(np.atleast_2d(np.asarray(x, dtype=float)))
        if self.kind == "svm":
            return sign * self.machines[(self.classes[0], self.classes[1])].decision(xs)
        order = self._knn_order(xs)
        votes = np.array(self.knn_y)[order[:, : self.knn_k]] == self.classes[0]
        return sign * (votes.mean(axis=1) * 2.0 - 1.0)

    def predict(self, x) -> list[str]:
        xs = self.normalizer.apply(np.atleast_2d(np.asarray(x, dtype=float)))
        if self.kind == "svm":
            return self._predict_svm(xs)
        return self._predict_knn(xs)

    def _predict_svm(self, xs: np.ndarray) -> list[str]:
        votes = np.zeros((len(xs), len(self.classes)))
        support = np.zeros((len(xs), len(self.classes)))
        index = {cls: i for i, cls in enumerate(self.classes)}
        for (pos, neg), machine in self.machines.items():
            d = machine.decision(xs)
            winners = np.where(d >= 0, index[pos], index[neg])
            votes[np.arange(len(xs)), winners] += 1
            support[:, index[pos]] += d
            support[:, index[neg]] -= d
        out = []
        for i in range(len(xs)):
            best = np.nonzero(votes[i] == votes[i].max())[0]
            if len(best) > 1:  # tie: larger summed decision support wins
                best = best[np.argsort(-support[i, best], kind="stable")[:1]]
            out.append(self.classes[int(best[0])])
        return out

    def _knn_order(self, xs: np.ndarray) -> np.ndarray:
        d = ((xs[:, None, :] - self.knn_x[None, :, :]) ** 2).sum(axis=-1)
        return np.argsort(d, axis=1, kind="stable")

    def _predict_knn(self, xs: np.ndarray) -> list[str]:
        labels = np.array(self.knn_y)
        order = self._knn_order(xs)
        out = []
        for row in order:
            nearest = labels[row[: self.knn_k]]
            classes, counts = np.unique(nearest, return_counts=True)
            tied = set(classes[counts == counts.max()])
            if len(tied) == 1:
                out.append(tied.pop())
            else:  # nearest neighbor with a tied label decides
                out.append(next(lab for lab in nearest if lab in tied))
        return out

    # -- serialization -------------------------------------------------

    FORMAT = "melodica-model/1"

    def to_dict(self) -> dict:
        doc = {
            "format": self.FORMAT,
            "kind": self.kind,
            "classes": list(self.classes),
            "norm_mean": self.normalizer.mean.tolist(),
            "norm_std": self.normalizer.std.tolist(),
        }
        if self.kind == "svm":
            doc["machines"] = [
                {
                    "positive": pos,
                    "negative": neg,
                    "kernel": m.kernel.to_dict(),
                    "support_vectors": m.support_vectors.tolist(),
                    "coef": m.coef.tolist(),
                    "bias": m.bias,
                }
                for (pos, neg), m in sorted(self.machines.items())
            ]
        else:
            doc["k"] = self.knn_k
            doc["train_x"] = self.knn_x.tolist()
            doc["train_y"] = list(self.knn_y)
        return doc

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)
            fh.write("\n")

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainedModel":
        if doc.get("format") != cls.FORMAT:
            raise ValueError(f"unsupported model format {doc.get('format')!r}")
        norm = Normalizer(mean=np.array(doc["norm_mean"]), std=np.array(doc["norm_std"]))
        model = cls(kind=doc["kind"], classes=tuple(doc["classes"]), normalizer=norm)
        if doc["kind"] == "svm":
            for m in doc["machines"]:
                model.machines[(m["positive"], m["negative"])] = _BinaryMachine(
                    support_vectors=np.array(m["support_vectors"]),
                    coef=np.array(m["coef"]),
                    bias=m["bias"],
                    kernel=Kernel.from_dict(m["kernel"]),
                )
        else:
            model.knn_k = doc["k"]
            model.knn_x = np.array(doc["train_x"])
            model.knn_y = tuple(doc["train_y"])
        return model

    @classmethod
    def load(cls, path) -> "TrainedModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def svm_train(x, labels, kernel: Kernel = Kernel("rbf"), c: float = 1.0,
              objective_history: list | None = None) -> TrainedModel:
    """One-vs-one soft-margin SVM via SMO; classes in first-seen order."""
    x = np.asarray(x, dtype=float)
    labels = list(labels)
    classes = tuple(dict.fromkeys(labels))
    if len(classes) < 2:
        raise DegenerateData("need at least two classes")
    norm = Normalizer.fit(x)
    xs = norm.apply(x)
    model = TrainedModel(kind="svm", classes=classes, normalizer=norm)
    label_arr = np.array(labels)
    for i, pos in enumerate(classes):
        for neg in classes[i + 1 :]:
            sel = (label_arr == pos) | (label_arr == neg)
            sub_x = xs[sel]
            sub_y = np.where(label_arr[sel] == pos, 1.0, -1.0)
            kmat = kernel.matrix(sub_x, sub_x)
            alphas, bias = _smo(kmat, sub_y, c, objective_history=objective_history)
            keep = alphas > _STEP_EPS
            model.machines[(pos, neg)] = _BinaryMachine(
                support_vectors=sub_x[keep],
                coef=(alphas * sub_y)[keep],
                bias=bias,
                kernel=kernel,
            )
    return model


def svm_decision(model: TrainedModel, x) -> np.ndarray:
    return model.decision(x)


def svm_predict(model: TrainedModel, x) -> list[str]:
    return model.predict(x)


def knn_train(x, labels, k: int) -> TrainedModel:
    x = np.asarray(x, dtype=float)
    labels = list(labels)
    if len(labels) == 0:
        raise EmptyTrainingSet("no training vectors")
    if k > len(labels):
        raise ValueError(f"K={k} exceeds training size {len(labels)}")
    norm = Normalizer.fit(x)
    return TrainedModel(
        kind="knn",
        classes=tuple(dict.fromkeys(labels)),
        normalizer=norm,
        knn_k=k,
        knn_x=norm.apply(x),
        knn_y=tuple(labels),
    )


def knn_classify(train_x, train_labels, query, k: int) -> str:
    """Majority label among the K nearest training vectors (stable order)."""
    model = knn_train(train_x, train_labels, k)
    return model.predict(np.atleast_2d(np.asarray(query, dtype=float)))[0]
