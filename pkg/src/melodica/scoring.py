"""Playback scoring: edit distance, likelihood gate, and the practice policy.

A trial passes when the detected sequence matches the target closely enough:
likelihood = (len(target) - dist) / len(target), gated at two thirds.  Single
note trials are graded strictly correct or incorrect.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

PASS_THRESHOLD = 2.0 / 3.0
_GATE_EPS = 1e-9


class EmptyTarget(ValueError):
    pass


class Verdict(str, Enum):
    PASS = "pass"
    FAIL = "fail"


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Minimum insertions + deletions + substitutions turning a into b."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ai in enumerate(a, start=1):
        cur = [i]
        for j, bj in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ai != bj)))
        prev = cur
    return prev[len(b)]


def likelihood(target: Sequence, detected: Sequence) -> float:
    """Fraction of the target surviving the edit distance, clamped at 0.

    The raw ratio goes negative when the detected sequence is much longer
    than the target; clamping keeps logs interpretable without changing any
    verdict.
    """
    if len(target) == 0:
        raise EmptyTarget("target must be nonempty")
    return max(0.0, (len(target) - levenshtein(target, detected)) / len(target))


def judge(target: Sequence, detected: Sequence) -> Verdict:
    """Pass/fail for one playback trial.

    Single-note targets are only correct or incorrect; longer targets pass
    at likelihood >= 2/3 (within epsilon, so the 2-of-3 case passes).
    """
    if len(target) == 0:
        raise EmptyTarget("target must be nonempty")
    if len(target) == 1:
        return Verdict.PASS if list(detected) == list(target) else Verdict.FAIL
    ok = likelihood(target, detected) >= PASS_THRESHOLD - _GATE_EPS
    return Verdict.PASS if ok else Verdict.FAIL


@dataclass
class TrialRecord:
    target: tuple[int, ...]
    detected: tuple[int, ...]
    likelihood: float
    verdict: Verdict
    timestamp_s: float

    @classmethod
    def evaluate(cls, target: Sequence[int], detected: Sequence[int], timestamp_s: float) -> "TrialRecord":
        return cls(
            target=tuple(target),
            detected=tuple(detected),
            likelihood=likelihood(target, detected),
            verdict=judge(target, detected),
            timestamp_s=timestamp_s,
        )

    def to_payload(self) -> dict:
        return {
            "target": "".join(format(n, "x") for n in self.target),
            "detected": "".join(format(n, "x") for n in self.detected),
            "likelihood": round(self.likelihood, 6),
            "verdict": self.verdict.value,
            "t_s": self.timestamp_s,
        }


@dataclass
class PolicyDecision:
    extra_trials: int  # 0 means continue

    @property
    def kind(self) -> str:
        return "continue" if self.extra_trials == 0 else "extra_trials"


@dataclass
class AccuracyTracker:
    """Running correct/total count for one activity block."""

    correct: int = 0
    total: int = 0
    threshold: float = 0.6
    history: list[Verdict] = field(default_factory=list)

    def record(self, verdict: Verdict) -> None:
        self.total += 1
        if verdict is Verdict.PASS:
            self.correct += 1
        self.history.append(verdict)

    @property
    def accuracy(self) -> float:
        return self.correct / self.total if self.total else 0.0


def practice_policy(tracker: AccuracyTracker) -> PolicyDecision:
    """Smallest number of extra trials that could restore the threshold.

    If accuracy is already at threshold the block continues; otherwise k
    extra trials are scheduled with (correct + k) / (total + k) >= threshold
    when all succeed, k at least 1.
    """
    if tracker.total <= 0:
        raise ValueError("tracker has no trials")
    if tracker.correct / tracker.total >= tracker.threshold:
        return PolicyDecision(extra_trials=0)
    th = tracker.threshold
    deficit = th * tracker.total - tracker.correct
    k = max(1, int(-(-deficit // (1 - th))))  # ceil for positive floats
    # settle float rounding: k must be the smallest count restoring the ratio
    while (tracker.correct + k) / (tracker.total + k) < th:
        k += 1
    while k > 1 and (tracker.correct + k - 1) / (tracker.total + k - 1) >= th:
        k -= 1
    return PolicyDecision(extra_trials=k)
