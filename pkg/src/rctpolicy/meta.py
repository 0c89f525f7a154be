"""S-learner and T-learner meta-algorithms and the policies they produce.

Both learners predict a patient's outcome under each arm from the
pre-treatment features. Outcomes are severity deltas, so the arm with the
lower prediction is the better one; an exact tie goes to arm 0 (1FED),
the less restrictive diet. The one exception is the binary ``remission``
target, where higher is better.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .cohort import PEC_COLUMN
from .errors import FitError, ValidationError
from .learners import LearnerSpec, Model, fit

META_KINDS = ("s-learner", "t-learner")
REMISSION_TARGET = "remission"


def lower_is_better(target: str) -> bool:
    """Every outcome column is a severity delta except the remission label."""
    return target != REMISSION_TARGET


@dataclass(frozen=True)
class MetaSpec:
    kind: str
    base: LearnerSpec
    target: str = PEC_COLUMN

    def __post_init__(self):
        if self.kind not in META_KINDS:
            raise ValidationError(f"unknown meta-learner {self.kind!r}; expected one of {META_KINDS}")

    @property
    def label(self) -> str:
        return f"{self.kind}/{self.base.kind}"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "base": self.base.to_dict(), "target": self.target}

    @classmethod
    def from_dict(cls, d: Mapping) -> "MetaSpec":
        return cls(d["kind"], LearnerSpec.from_dict(d["base"]), d.get("target", PEC_COLUMN))


@dataclass(frozen=True, eq=False)
class CounterfactualScores:
    arm0: np.ndarray
    arm1: np.ndarray

    def __post_init__(self):
        a0 = np.asarray(self.arm0, float).ravel()
        a1 = np.asarray(self.arm1, float).ravel()
        if a0.shape != a1.shape:
            raise ValidationError("arm-0 and arm-1 scores must have the same length")
        object.__setattr__(self, "arm0", a0)
        object.__setattr__(self, "arm1", a1)

    def __len__(self):
        return self.arm0.shape[0]

    @property
    def effect(self) -> np.ndarray:
        """Predicted arm-1 minus arm-0 outcome."""
        return self.arm1 - self.arm0


@dataclass(frozen=True, eq=False)
class Policy:
    """One arm per patient, plus where the assignment came from."""

    assignment: np.ndarray
    provenance: Mapping[str, Any] = field(default_factory=dict)
    scores: CounterfactualScores | None = None
    ids: tuple[str, ...] | None = None

    def __post_init__(self):
        a = np.asarray(self.assignment)
        if a.ndim != 1 or not np.isin(a, (0, 1)).all():
            raise ValidationError("a policy assigns arm 0 or 1 to every patient")
        a = a.astype(int)
        a.setflags(write=False)
        object.__setattr__(self, "assignment", a)
        if self.ids is not None:
            ids = tuple(self.ids)
            if len(ids) != a.shape[0]:
                raise ValidationError("policy ids and assignment lengths differ")
            object.__setattr__(self, "ids", ids)
        if self.scores is not None and len(self.scores) != a.shape[0]:
            raise ValidationError("policy scores and assignment lengths differ")

    def __len__(self):
        return self.assignment.shape[0]

    @property
    def label(self) -> str:
        p = dict(self.provenance)
        kind = p.get("kind", "unknown")
        if kind == "constant":
            return f"constant:{p.get('arm')}"
        if kind == "random":
            return f"random:seed={p.get('seed')}"
        if kind == "threshold" and p.get("out_of_fold"):
            return f"threshold:{p.get('feature')}(out-of-fold)"
        if kind == "threshold":
            return f"threshold:{p.get('feature')}{'>' if p.get('high_arm') == 1 else '<='}{p.get('threshold')}"
        if kind == "ml":
            return f"ml:{p.get('meta')}/{p.get('learner')}"
        return str(kind)


class MetaModel:
    spec: MetaSpec
    n_features: int

    def score(self, features) -> CounterfactualScores:
        X = np.asarray(features, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValidationError(
                f"feature width mismatch: meta-model trained on {self.n_features} features, "
                f"got shape {X.shape}")
        return self._score(X)


class SLearner(MetaModel):
    """One model on features plus an arm-indicator column (appended last)."""

    def __init__(self, spec: MetaSpec, model: Model, n_features: int):
        self.spec, self.model, self.n_features = spec, model, n_features

    def _score(self, X):
        n = X.shape[0]
        s0 = self.model.predict(np.column_stack([X, np.zeros(n)]))
        s1 = self.model.predict(np.column_stack([X, np.ones(n)]))
        return CounterfactualScores(s0, s1)


class TLearner(MetaModel):
    """One model per arm, each trained on that arm's patients only."""

    def __init__(self, spec: MetaSpec, models: Sequence[Model], n_features: int):
        self.spec, self.models, self.n_features = spec, tuple(models), n_features

    def _score(self, X):
        return CounterfactualScores(self.models[0].predict(X), self.models[1].predict(X))


def fit_meta(spec: MetaSpec, features, arms, targets) -> MetaModel:
    """Fit an S- or T-learner. Rows with a missing target are left out."""
    X = np.asarray(features, dtype=float)
    if X.ndim != 2:
        raise ValidationError("features must be a 2-D matrix")
    arms = np.asarray(arms).astype(int)
    y = np.asarray(targets, dtype=float)
    if not (X.shape[0] == arms.shape[0] == y.shape[0]):
        raise ValidationError("features, arms and targets must have the same number of rows")
    keep = ~np.isnan(y)
    X, arms, y = X[keep], arms[keep], y[keep]

    if spec.kind == "s-learner":
        if X.shape[0] < 4:
            raise FitError(f"s-learner needs at least 4 training patients, got {X.shape[0]}")
        model = fit(spec.base, np.column_stack([X, arms.astype(float)]), y)
        return SLearner(spec, model, X.shape[1])

    models = []
    for arm in (0, 1):
        rows = arms == arm
        if rows.sum() < 2:
            raise FitError(f"t-learner: arm {arm} has {int(rows.sum())} training patients; need at least 2")
        models.append(fit(spec.base.with_seed(spec.base.seed + arm), X[rows], y[rows]))
    return TLearner(spec, models, X.shape[1])


def assign(scores: CounterfactualScores, lower_better: bool = True, provenance=None,
           ids=None) -> Policy:
    """Pick the arm with the better predicted outcome; ties go to arm 0."""
    s0, s1 = scores.arm0, scores.arm1
    if not (np.all(np.isfinite(s0)) and np.all(np.isfinite(s1))):
        raise ValidationError("counterfactual scores must be finite")
    arm = (s1 < s0) if lower_better else (s1 > s0)
    return Policy(arm.astype(int), dict(provenance or {"kind": "ml"}), scores, ids)


def export_policy(policy: Policy, path, delimiter: str = ",") -> Path:
    """Write one row per patient: id, arm, score_arm0, score_arm1, provenance."""
    path = Path(path)
    ids = policy.ids or tuple(str(i) for i in range(len(policy)))
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(["id", "arm", "score_arm0", "score_arm1", "provenance"])
        for i, pid in enumerate(ids):
            if policy.scores is not None:
                s = [repr(float(policy.scores.arm0[i])), repr(float(policy.scores.arm1[i]))]
            else:
                s = ["", ""]
            w.writerow([pid, int(policy.assignment[i]), *s, policy.label])
    return path


def read_policy(path, delimiter: str = ",") -> Policy:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh, delimiter=delimiter))
    ids = tuple(r["id"] for r in rows)
    arm = np.array([int(r["arm"]) for r in rows])
    scores = None
    if rows and rows[0]["score_arm0"] != "":
        scores = CounterfactualScores([float(r["score_arm0"]) for r in rows],
                                      [float(r["score_arm1"]) for r in rows])
    label = rows[0]["provenance"] if rows else ""
    return Policy(arm, {"kind": "imported", "label": label}, scores, ids)
