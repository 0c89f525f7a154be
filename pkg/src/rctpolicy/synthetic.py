"""Randomized-trial simulator with known potential outcomes.

Each patient gets standard-normal features, a fair-coin arm and both
potential PEC deltas::

    y_a(x) = baseline + prognostic . x + (a - 1/2) * tau(x) + noise

so ``y_1 - y_0 = tau(x)`` exactly and the two arms are symmetric around the
baseline. The noise draw is shared by both arms. ``pec_start`` is 15 plus an
exponential excess (every patient starts with active disease) and
``pec_end = max(0, pec_start + y_arm)``; the factual view exposes only the
randomized arm's outcome.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .cohort import REMISSION_THRESHOLD, Cohort, FeatureSchema, load_cohort, save_cohort
from .errors import ValidationError
from .meta import Policy

EFFECTS = ("constant", "threshold", "linear")


@dataclass(frozen=True)
class ScenarioSpec:
    n_patients: int = 200
    n_features: int = 5
    effect: str = "constant"
    tau: float = 0.0
    boundary_feature: int = 0
    boundary: float = 0.0
    tau_low: float = -1.0
    tau_high: float = 1.0
    weights: tuple[float, ...] | None = None
    noise_sd: float = 1.0
    missing_rate: float = 0.0
    baseline: float = -1.0
    prognostic: tuple[float, ...] | None = None
    pec_excess_mean: float = 1.0
    end_feature_noise_sd: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_patients < 4:
            raise ValidationError(f"n_patients must be at least 4, got {self.n_patients}")
        if self.n_features < 1:
            raise ValidationError("n_features must be at least 1")
        if self.effect not in EFFECTS:
            raise ValidationError(f"effect must be one of {EFFECTS}, got {self.effect!r}")
        if self.noise_sd < 0 or self.end_feature_noise_sd < 0:
            raise ValidationError("noise standard deviations must be >= 0")
        if not 0 <= self.missing_rate < 1:
            raise ValidationError("missing_rate must be in [0, 1)")
        if not 0 <= self.boundary_feature < self.n_features:
            raise ValidationError("boundary_feature must index an existing feature")
        if self.pec_excess_mean <= 0:
            raise ValidationError("pec_excess_mean must be > 0")
        for name in ("weights", "prognostic"):
            v = getattr(self, name)
            if v is not None:
                v = tuple(float(w) for w in v)
                if len(v) != self.n_features:
                    raise ValidationError(f"{name} needs one entry per feature")
                object.__setattr__(self, name, v)
        if self.effect == "linear" and self.weights is None:
            raise ValidationError("linear effect needs a weight vector")

    def effect_of(self, X: np.ndarray) -> np.ndarray:
        """Arm-1 minus arm-0 potential outcome at features ``X``."""
        n = X.shape[0]
        if self.effect == "constant":
            return np.full(n, float(self.tau))
        if self.effect == "threshold":
            high = X[:, self.boundary_feature] > self.boundary
            return np.where(high, self.tau_high, self.tau_low)
        return X @ np.asarray(self.weights)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("weights", "prognostic"):
            if d[k] is not None:
                d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d) -> "ScenarioSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown scenario fields {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True, eq=False)
class OracleCohort:
    cohort: Cohort
    spec: ScenarioSpec
    potential_outcomes: np.ndarray     # (n, 2) raw PEC deltas under arm 0 / arm 1
    features: np.ndarray = field(repr=False, default=None)   # complete features before masking

    @property
    def potential_remission(self) -> np.ndarray:
        end = np.asarray(self.cohort.pec_start)[:, None] + self.potential_outcomes
        return (end < REMISSION_THRESHOLD).astype(float)

    @property
    def oracle_policy(self) -> Policy:
        y = self.potential_outcomes
        return Policy((y[:, 1] < y[:, 0]).astype(int), {"kind": "oracle"}, ids=self.cohort.ids)

    @property
    def oracle_value(self) -> float:
        return float(self.potential_outcomes.min(axis=1).mean())

    @property
    def true_effect(self) -> np.ndarray:
        return self.potential_outcomes[:, 1] - self.potential_outcomes[:, 0]


def generate(spec: ScenarioSpec) -> OracleCohort:
    """Draw one trial. Independent random streams keep arms and outcomes
    identical across missing rates for the same seed."""
    ss = np.random.SeedSequence(spec.seed)
    s_feat, s_arm, s_noise, s_pec, s_end, s_miss = (np.random.default_rng(s) for s in ss.spawn(6))
    n, d = spec.n_patients, spec.n_features

    X = s_feat.standard_normal((n, d))
    arms = s_arm.integers(0, 2, size=n)
    noise = spec.noise_sd * s_noise.standard_normal(n)
    pec_start = REMISSION_THRESHOLD + s_pec.exponential(spec.pec_excess_mean, size=n)
    X_end = X + spec.end_feature_noise_sd * s_end.standard_normal((n, d))

    base = np.full(n, spec.baseline)
    if spec.prognostic is not None:
        base = base + X @ np.asarray(spec.prognostic)
    tau = spec.effect_of(X)
    y = np.column_stack([base - 0.5 * tau + noise, base + 0.5 * tau + noise])
    pec_end_po = np.maximum(0.0, pec_start[:, None] + y)
    po = pec_end_po - pec_start[:, None]
    pec_end = pec_end_po[np.arange(n), arms]

    Xs, Xe = X.copy(), X_end.copy()
    if spec.missing_rate > 0:
        Xs[s_miss.random((n, d)) < spec.missing_rate] = np.nan
        Xe[s_miss.random((n, d)) < spec.missing_rate] = np.nan

    width = len(str(n - 1))
    ids = [f"p{i:0{width}d}" for i in range(n)]
    schema = FeatureSchema(tuple(f"x{j}" for j in range(d)))
    cohort = Cohort.from_arrays(schema, ids, arms, Xs, Xe, pec_start, pec_end)
    po.setflags(write=False)
    X.setflags(write=False)
    return OracleCohort(cohort, spec, po, X)


def _assigned(policy: Policy, oracle: OracleCohort) -> np.ndarray:
    if len(policy) != len(oracle.cohort):
        raise ValidationError(f"policy covers {len(policy)} patients, cohort has {len(oracle.cohort)}")
    if policy.ids is not None and policy.ids != oracle.cohort.ids:
        order = {pid: i for i, pid in enumerate(policy.ids)}
        try:
            return np.array([policy.assignment[order[pid]] for pid in oracle.cohort.ids])
        except KeyError as e:
            raise ValidationError(f"policy has no assignment for patient {e.args[0]!r}") from None
    return policy.assignment


def true_policy_value(policy: Policy, oracle: OracleCohort) -> float:
    """Mean potential outcome over all patients under the policy's arms."""
    a = _assigned(policy, oracle)
    return float(oracle.potential_outcomes[np.arange(a.size), a].mean())


def true_effectiveness(policy: Policy, oracle: OracleCohort) -> float:
    a = _assigned(policy, oracle)
    return float(oracle.potential_remission[np.arange(a.size), a].mean())


def save_oracle(oracle: OracleCohort, cohort_path, oracle_path) -> tuple[Path, Path]:
    """Write the factual cohort file and a JSON sidecar with the hidden potential outcomes."""
    cohort_path = save_cohort(oracle.cohort, cohort_path)
    sidecar = {
        "scenario": oracle.spec.to_dict(),
        "ids": list(oracle.cohort.ids),
        "potential_outcomes": [[repr(float(v)) for v in row] for row in oracle.potential_outcomes],
        "true_effect": [repr(float(v)) for v in oracle.true_effect],
        "oracle_policy": oracle.oracle_policy.assignment.tolist(),
        "oracle_value": oracle.oracle_value,
    }
    oracle_path = Path(oracle_path)
    oracle_path.write_text(json.dumps(sidecar, indent=1) + "\n", encoding="utf-8")
    return cohort_path, oracle_path


def load_oracle(cohort_path, oracle_path) -> OracleCohort:
    cohort = load_cohort(cohort_path)
    d = json.loads(Path(oracle_path).read_text(encoding="utf-8"))
    if list(cohort.ids) != d["ids"]:
        raise ValidationError("oracle sidecar ids do not match the cohort file")
    po = np.array([[float(v) for v in row] for row in d["potential_outcomes"]])
    return OracleCohort(cohort, ScenarioSpec.from_dict(d["scenario"]), po)
