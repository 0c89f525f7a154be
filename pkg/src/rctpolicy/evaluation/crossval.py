"""K-fold plans and out-of-fold policy assignment.

Fold membership is derived from hashed patient ids, so it does not depend on
the order patients appear in the file. Combined with order-independent
model fitting, shuffling a cohort leaves every patient's out-of-fold arm
unchanged.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..cohort import standardize
from ..errors import FitError, FoldError, ValidationError
from ..meta import CounterfactualScores, MetaSpec, Policy, assign, fit_meta, lower_is_better
from .policy import TrialData, threshold_policy, threshold_policy_sweep

STANDARDIZE_MODES = ("global", "train-only")


@dataclass(frozen=True, eq=False)
class FoldPlan:
    k: int
    folds: np.ndarray
    stratified: bool = True

    def __post_init__(self):
        f = np.asarray(self.folds, dtype=int)
        f.setflags(write=False)
        object.__setattr__(self, "folds", f)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.folds, minlength=self.k)

    def train_rows(self, fold: int) -> np.ndarray:
        return self.folds != fold


def _hash_key(seed: int, pid: str) -> str:
    return hashlib.sha256(f"{seed}:{pid}".encode()).hexdigest()


def make_fold_plan(ids, arms, k: int = 6, seed: int = 0, stratified: bool = True) -> FoldPlan:
    """Deal patients to folds round-robin in hashed-id order.

    Stratified plans deal arm 0 first, then continue the same round-robin
    counter through arm 1, so per-arm fold sizes differ by at most one and
    the overall sizes stay balanced too.
    """
    ids = [str(i) for i in ids]
    n = len(ids)
    if k < 2:
        raise ValidationError("fold count must be at least 2")
    if k > n:
        raise ValidationError(f"{k} folds requested for {n} patients")
    arms = np.asarray(arms).astype(int)
    groups = [np.flatnonzero(arms == a) for a in (0, 1)] if stratified else [np.arange(n)]
    folds = np.empty(n, dtype=int)
    counter = 0
    for rows in groups:
        for i in sorted(rows, key=lambda i: _hash_key(seed, ids[i])):
            folds[i] = counter % k
            counter += 1
    return FoldPlan(k, folds, stratified)


def _fold_targets(data: TrialData, train: np.ndarray, mode: str) -> np.ndarray:
    if mode not in STANDARDIZE_MODES:
        raise ValidationError(f"standardize mode must be one of {STANDARDIZE_MODES}")
    y = data.target
    if not lower_is_better(data.target_name):
        return y     # binary remission label: fit as-is
    fit_rows = np.flatnonzero(train) if mode == "train-only" else None
    with np.errstate(all="ignore"):
        om = standardize(y, fit_rows=fit_rows, columns=(data.target_name,))
    return om.values[:, 0]


def _run_fold(spec: MetaSpec, data: TrialData, plan: FoldPlan, fold: int, mode: str):
    train = plan.train_rows(fold)
    test = ~train
    y = _fold_targets(data, train, mode)
    if spec.kind == "t-learner":
        observed = ~np.isnan(y)
        for arm in (0, 1):
            n_arm = int(np.sum(train & observed & (data.arms == arm)))
            if n_arm < 2:
                raise FoldError(
                    f"fold {fold}: training portion has {n_arm} arm-{arm} patients with an observed "
                    "target; a t-learner needs 2 per arm (use a stratified fold plan or fewer folds)")
    try:
        model = fit_meta(spec, data.features[train], data.arms[train], y[train])
    except FitError as e:
        raise FoldError(f"fold {fold}: {e}") from e
    s = model.score(data.features[test])
    return test, s


def cross_validated_scores(spec: MetaSpec, data: TrialData, plan: FoldPlan,
                           standardize_mode: str = "global", n_jobs: int = 1) -> CounterfactualScores:
    if len(plan.folds) != len(data):
        raise ValidationError("fold plan and cohort sizes differ")
    if spec.target != data.target_name:
        raise ValidationError(
            f"meta target {spec.target!r} does not match trial data target {data.target_name!r}")
    s0 = np.full(len(data), np.nan)
    s1 = np.full(len(data), np.nan)
    folds = range(plan.k)
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(lambda f: _run_fold(spec, data, plan, f, standardize_mode), folds))
    else:
        results = [_run_fold(spec, data, plan, f, standardize_mode) for f in folds]
    for test, s in results:
        s0[test] = s.arm0
        s1[test] = s.arm1
    return CounterfactualScores(s0, s1)


def cross_validated_policy(spec: MetaSpec, data: TrialData, plan: FoldPlan,
                           standardize_mode: str = "global", n_jobs: int = 1) -> Policy:
    """Every patient is assigned by a model that never saw them in training."""
    scores = cross_validated_scores(spec, data, plan, standardize_mode, n_jobs)
    prov = {"kind": "ml", "meta": spec.kind, "learner": spec.base.kind,
            "hyperparameters": spec.to_dict()["base"]["hyperparameters"],
            "seed": spec.base.seed, "target": spec.target, "folds": plan.folds.tolist(),
            "k": plan.k, "standardize": standardize_mode}
    return assign(scores, lower_is_better(spec.target), prov, data.ids)


def cross_validated_threshold_policy(data: TrialData, plan: FoldPlan, values=None,
                                     feature: str = "pec_start",
                                     metric: str = "effectiveness") -> Policy:
    """Out-of-fold variant of the threshold baseline: each fold's threshold is swept on the rest."""
    values = data.pec_start if values is None else np.asarray(values, dtype=float)
    arm = np.zeros(len(data), dtype=int)
    chosen = []
    for fold in range(plan.k):
        train = plan.train_rows(fold)
        sweep = threshold_policy_sweep(data.subset(train), values[train], feature, metric)
        p = sweep.best.provenance
        test = ~train
        arm[test] = threshold_policy(values[test], p["threshold"], p["high_arm"], feature).assignment
        chosen.append({"fold": fold, "threshold": p["threshold"], "high_arm": p["high_arm"]})
    return Policy(arm, {"kind": "threshold", "feature": feature, "out_of_fold": True,
                        "per_fold": chosen}, ids=data.ids)
