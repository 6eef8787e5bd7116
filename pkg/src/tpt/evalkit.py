"""Pass@k / Correct@k / diversity metrics over sampled evaluation records.

Pass@k at k == n is counted empirically (at-least-one over the n samples),
which is why Correct@k counts and Pass@k percentages line up exactly; the
unbiased estimator 1 - C(n-c,k)/C(n,k) is used for k < n.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Sequence

from .core import ws_collapse


class EstimatorMethod(str, Enum):
    EMPIRICAL = "Empirical"
    UNBIASED = "Unbiased"


@dataclass(frozen=True)
class PassKEstimate:
    k: int
    value: float
    method: EstimatorMethod

    def to_dict(self) -> dict[str, Any]:
        return {"k": self.k, "value": self.value, "method": self.method.value}


@dataclass(frozen=True)
class ProblemOutcome:
    """Ordered correctness flags for one problem's eval samples."""

    problem_id: str
    flags: tuple[bool, ...]

    @property
    def n(self) -> int:
        return len(self.flags)

    @property
    def c(self) -> int:
        return sum(self.flags)


@dataclass(frozen=True)
class DiversityReport:
    mean_distinct_ratio: float
    per_problem: dict[str, float] = field(default_factory=dict)
    round_index: int | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "mean_distinct_ratio": self.mean_distinct_ratio,
            "per_problem": self.per_problem,
            "round_index": self.round_index,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "DiversityReport":
        return cls(
            mean_distinct_ratio=float(d["mean_distinct_ratio"]),
            per_problem={str(k): float(v) for k, v in d.get("per_problem", {}).items()},
            round_index=d.get("round_index"),
        )


@dataclass(frozen=True)
class EvalReport:
    model_ref: str
    n_samples_per_problem: int
    per_problem: list[dict[str, Any]]
    pass_at: dict[int, PassKEstimate]
    correct_at: dict[int, int]
    diversity: DiversityReport

    def to_dict(self) -> dict[str, Any]:
        return {
            "model_ref": self.model_ref,
            "n_samples_per_problem": self.n_samples_per_problem,
            "per_problem": self.per_problem,
            "pass_at": {str(k): est.to_dict() for k, est in self.pass_at.items()},
            "correct_at": {str(k): v for k, v in self.correct_at.items()},
            "diversity": self.diversity.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "EvalReport":
        return cls(
            model_ref=str(d["model_ref"]),
            n_samples_per_problem=int(d["n_samples_per_problem"]),
            per_problem=list(d["per_problem"]),
            pass_at={
                int(k): PassKEstimate(int(v["k"]), float(v["value"]), EstimatorMethod(v["method"]))
                for k, v in d["pass_at"].items()
            },
            correct_at={int(k): int(v) for k, v in d["correct_at"].items()},
            diversity=DiversityReport.from_dict(d["diversity"]),
        )


def pass_at_k(n: int, c: int, k: int) -> float:
    """Unbiased estimator 1 - C(n-c,k)/C(n,k) in overflow-free product form."""
    if not 0 <= c <= n:
        raise ValueError(f"need 0 <= c <= n, got n={n} c={c}")
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got n={n} k={k}")
    if n - c < k:
        return 1.0
    prod = 1.0
    for j in range(n - c + 1, n + 1):
        prod *= 1.0 - k / j
    return 1.0 - prod


def aggregate(outcomes: Sequence[ProblemOutcome], k_list: Iterable[int]) -> EvalReport:
    """Build an EvalReport from per-problem sample outcomes.

    Requires a uniform sample count n across problems. pass_at[k] is the mean
    unbiased estimate for k < n and the empirical at-least-one fraction at
    k == n; correct_at[k] counts problems with a correct sample among the
    first k.
    """
    if not outcomes:
        raise ValueError("cannot aggregate an empty problem list")
    ns = {o.n for o in outcomes}
    if len(ns) != 1:
        raise ValueError(f"inconsistent sample counts across problems: {sorted(ns)}")
    n = ns.pop()
    if n < 1:
        raise ValueError("need at least one sample per problem")

    pass_estimates: dict[int, PassKEstimate] = {}
    correct_counts: dict[int, int] = {}
    for k in sorted(set(k_list)):
        if k > n:
            raise ValueError(f"k={k} exceeds samples per problem n={n}")
        correct_counts[k] = sum(1 for o in outcomes if any(o.flags[:k]))
        if k == n and n > 1:
            value = correct_counts[k] / len(outcomes)
            method = EstimatorMethod.EMPIRICAL
        else:
            value = sum(pass_at_k(n, o.c, k) for o in outcomes) / len(outcomes)
            method = EstimatorMethod.UNBIASED if n > 1 else EstimatorMethod.EMPIRICAL
        pass_estimates[k] = PassKEstimate(k=k, value=value, method=method)

    return EvalReport(
        model_ref="",
        n_samples_per_problem=n,
        per_problem=[{"problem_id": o.problem_id, "n": o.n, "c": o.c} for o in outcomes],
        pass_at=pass_estimates,
        correct_at=correct_counts,
        diversity=DiversityReport(mean_distinct_ratio=1.0),
    )


def diversity(samples_per_problem: dict[str, Sequence[str]], round_index: int | None = None) -> DiversityReport:
    """Mean over problems of distinct whitespace-normalized solutions / samples."""
    if not samples_per_problem:
        raise ValueError("diversity needs at least one problem")
    ratios: dict[str, float] = {}
    for pid, texts in samples_per_problem.items():
        if not texts:
            raise ValueError(f"problem {pid!r} has no samples")
        distinct = len({ws_collapse(t) for t in texts})
        ratios[pid] = distinct / len(texts)
    mean = sum(ratios.values()) / len(ratios)
    return DiversityReport(mean_distinct_ratio=mean, per_problem=ratios, round_index=round_index)
