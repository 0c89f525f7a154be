"""Policy value by factual matching, baseline policies and the random-policy band.

A policy's value is estimated from the patients whose randomized arm happens
to equal the arm the policy would give them. Because assignment in the trial
was random, that matched subgroup is an unbiased sample of what the policy
would achieve.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..cohort import PEC_COLUMN, Cohort, outcome_deltas, remission_label
from ..errors import ValidationError
from ..meta import REMISSION_TARGET, Policy


@dataclass(frozen=True, eq=False)
class TrialData:
    """What the evaluation harness needs from a cohort.

    ``outcome`` is the raw delta that policy values average. ``target`` is
    what the outcome models are trained on: the raw delta of the target
    column, or the remission label in binary mode.
    """

    ids: tuple[str, ...]
    arms: np.ndarray
    features: np.ndarray
    outcome: np.ndarray
    remission: np.ndarray
    pec_start: np.ndarray
    target: np.ndarray
    target_name: str = PEC_COLUMN
    feature_names: tuple[str, ...] = ()

    def __len__(self):
        return len(self.ids)

    @classmethod
    def from_cohort(cls, cohort: Cohort, target: str = PEC_COLUMN) -> "TrialData":
        deltas = outcome_deltas(cohort)
        remission = remission_label(cohort.pec_end)
        if target == REMISSION_TARGET:
            outcome = deltas.column(PEC_COLUMN)
            tgt = remission
        else:
            outcome = deltas.column(target)
            tgt = outcome
        return cls(cohort.ids, np.asarray(cohort.arms), np.asarray(cohort.x_start), outcome,
                   remission, np.asarray(cohort.pec_start), tgt, target, cohort.schema.names)

    def subset(self, index) -> "TrialData":
        index = np.asarray(index)
        if index.dtype == bool:
            index = np.flatnonzero(index)
        return TrialData(tuple(self.ids[i] for i in index), self.arms[index],
                         self.features[index], self.outcome[index], self.remission[index],
                         self.pec_start[index], self.target[index],
                         self.target_name, self.feature_names)


@dataclass(frozen=True)
class PolicyValueResult:
    policy: str
    matched_count: int
    mean_outcome: float
    effectiveness: float
    n_patients: int
    degenerate: bool = False
    empirical_p: float | None = None
    empirical_p_outcome: float | None = None

    @property
    def outcome_decrease(self) -> float:
        """Sign-flipped mean delta; larger means more improvement."""
        return -self.mean_outcome

    def with_p(self, p_eff, p_out) -> "PolicyValueResult":
        return PolicyValueResult(self.policy, self.matched_count, self.mean_outcome,
                                 self.effectiveness, self.n_patients, self.degenerate, p_eff, p_out)

    def to_dict(self) -> dict:
        return {"policy": self.policy, "matched_count": self.matched_count,
                "n_patients": self.n_patients, "mean_outcome": _num(self.mean_outcome),
                "outcome_decrease": _num(self.outcome_decrease),
                "effectiveness": _num(self.effectiveness), "degenerate": self.degenerate,
                "empirical_p": self.empirical_p, "empirical_p_outcome": self.empirical_p_outcome}


def _num(v):
    return None if v is None or (isinstance(v, float) and math.isnan(v)) else float(v)


def _nanmean(v):
    v = v[~np.isnan(v)]
    return float(v.mean()) if v.size else math.nan


def policy_value(policy: Policy, data: TrialData) -> PolicyValueResult:
    if len(policy) != len(data):
        raise ValidationError(f"policy covers {len(policy)} patients, cohort has {len(data)}")
    matched = policy.assignment == data.arms
    n = int(matched.sum())
    if n == 0:
        warnings.warn(f"policy {policy.label!r} matches no patient's randomized arm", stacklevel=2)
        return PolicyValueResult(policy.label, 0, math.nan, math.nan, len(data), True)
    return PolicyValueResult(policy.label, n, _nanmean(data.outcome[matched]),
                             _nanmean(data.remission[matched]), len(data))


def constant_policy(arm: int, n: int, ids=None) -> Policy:
    if arm not in (0, 1):
        raise ValidationError("arm must be 0 or 1")
    if n < 1:
        raise ValidationError("cohort is empty")
    return Policy(np.full(n, arm), {"kind": "constant", "arm": arm}, ids=ids)


def random_policy(n: int, seed: int, ids=None) -> Policy:
    """Independent fair coin per patient."""
    if n < 1:
        raise ValidationError("cohort is empty")
    arm = np.random.default_rng(seed).integers(0, 2, size=n)
    return Policy(arm, {"kind": "random", "seed": int(seed)}, ids=ids)


def draw_seeds(seed: int, n_draws: int) -> np.ndarray:
    return np.random.SeedSequence(seed).generate_state(n_draws, dtype=np.uint32).astype(np.int64)


@dataclass(frozen=True, eq=False)
class RandomPolicyDistribution:
    seeds: np.ndarray
    matched_count: np.ndarray
    mean_outcome: np.ndarray
    effectiveness: np.ndarray

    @property
    def n_draws(self) -> int:
        return self.seeds.shape[0]

    def quantiles(self, metric: str = "effectiveness", q=(2.5, 50.0, 97.5)) -> tuple[float, ...]:
        v = getattr(self, metric)
        v = v[~np.isnan(v)]
        return tuple(float(x) for x in np.percentile(v, q))

    def empirical_p(self, result: PolicyValueResult, metric: str = "effectiveness") -> float:
        """``(1 + #draws at least as good) / (n_draws + 1)``; degenerate draws never count."""
        if metric == "effectiveness":
            value, draws = result.effectiveness, self.effectiveness
            at_least = draws >= value
        else:
            value, draws = result.mean_outcome, self.mean_outcome
            at_least = draws <= value
        if math.isnan(value):
            return 1.0
        return (1 + int(np.count_nonzero(at_least))) / (self.n_draws + 1)

    def in_band(self, value: float, metric: str = "effectiveness") -> bool:
        lo, _, hi = self.quantiles(metric)
        return lo <= value <= hi

    def annotate(self, result: PolicyValueResult) -> PolicyValueResult:
        return result.with_p(self.empirical_p(result, "effectiveness"),
                             self.empirical_p(result, "mean_outcome"))

    def summary(self) -> dict:
        out = {"n_draws": self.n_draws}
        for metric in ("mean_outcome", "effectiveness"):
            lo, med, hi = self.quantiles(metric)
            v = getattr(self, metric)
            out[metric] = {"mean": float(np.nanmean(v)), "q2.5": lo, "q50": med, "q97.5": hi}
        return out


def random_policy_distribution(data: TrialData, n_draws: int = 1000, seed: int = 0,
                               chunk: int = 250) -> RandomPolicyDistribution:
    if len(data) == 0:
        raise ValidationError("cohort is empty")
    seeds = draw_seeds(seed, n_draws)
    n = len(data)
    y_ok = ~np.isnan(data.outcome)
    r_ok = ~np.isnan(data.remission)
    y = np.where(y_ok, data.outcome, 0.0)
    r = np.where(r_ok, data.remission, 0.0)
    counts, means, effs = [], [], []
    for start in range(0, n_draws, chunk):
        block = seeds[start:start + chunk]
        A = np.stack([np.random.default_rng(int(s)).integers(0, 2, size=n) for s in block])
        M = (A == data.arms).astype(float)
        counts.append(M.sum(axis=1))
        with np.errstate(invalid="ignore", divide="ignore"):
            means.append((M @ y) / (M @ y_ok))
            effs.append((M @ r) / (M @ r_ok))
    cat = lambda xs: np.concatenate(xs) if xs else np.empty(0)  # noqa: E731
    return RandomPolicyDistribution(seeds, cat(counts).astype(int), cat(means), cat(effs))


@dataclass(frozen=True, eq=False)
class ThresholdSweep:
    best: Policy
    best_value: PolicyValueResult
    curve: list = field(default_factory=list)   # dicts: threshold, high_arm, value fields


def threshold_candidates(values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    v = np.unique(v[~np.isnan(v)])
    if v.size == 0:
        raise ValidationError("threshold sweep needs at least one observed value")
    mids = 0.5 * (v[:-1] + v[1:])
    return np.concatenate([[-np.inf], mids, [np.inf]])


def threshold_policy(values, threshold: float, high_arm: int = 1, feature: str = "pec_start",
                     ids=None) -> Policy:
    """Values above ``threshold`` get ``high_arm``; the rest and missing values get the other arm.

    Missing values always go to arm 0.
    """
    v = np.asarray(values, dtype=float)
    with np.errstate(invalid="ignore"):
        high = v > threshold
    arm = np.where(high, high_arm, 1 - high_arm)
    arm = np.where(np.isnan(v), 0, arm)
    return Policy(arm, {"kind": "threshold", "feature": feature, "threshold": float(threshold),
                        "high_arm": int(high_arm)}, ids=ids)


def _better(a: PolicyValueResult, b: PolicyValueResult | None, metric: str) -> bool:
    if b is None:
        return True
    if metric == "effectiveness":
        va, vb = a.effectiveness, b.effectiveness
        va, vb = (-np.inf if math.isnan(va) else va), (-np.inf if math.isnan(vb) else vb)
        return va > vb
    va, vb = a.mean_outcome, b.mean_outcome
    va, vb = (np.inf if math.isnan(va) else va), (np.inf if math.isnan(vb) else vb)
    return va < vb


def threshold_policy_sweep(data: TrialData, values=None, feature: str = "pec_start",
                           metric: str = "effectiveness") -> ThresholdSweep:
    """Score every threshold (both orientations) and keep the best.

    Candidates are the midpoints between consecutive distinct observed
    values plus -inf and +inf, so both constant policies are included.
    Ties keep the lower threshold, and at equal thresholds the orientation
    that sends high values to arm 1.
    """
    values = data.pec_start if values is None else np.asarray(values, dtype=float)
    best = best_val = None
    curve = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for t in threshold_candidates(values):
            for high_arm in (1, 0):
                pol = threshold_policy(values, t, high_arm, feature, data.ids)
                val = policy_value(pol, data)
                curve.append({"threshold": float(t), "high_arm": high_arm, **val.to_dict()})
                if _better(val, best_val, metric):
                    best, best_val = pol, val
    return ThresholdSweep(best, best_val, curve)
