"""Average treatment effect with a bootstrap CI and a permutation p-value."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import EstimationError

CHUNK = 1000


@dataclass(frozen=True)
class AteResult:
    feature: str
    ate: float
    ci_low: float
    ci_high: float
    p_value: float
    n_arm0: int
    n_arm1: int
    units: str = "standardized"
    n_bootstrap: int = 0
    n_permutations: int = 0

    def to_dict(self) -> dict:
        return {"feature": self.feature, "units": self.units, "ate": self.ate,
                "ci_95": [self.ci_low, self.ci_high], "p_value": self.p_value,
                "n_arm0": self.n_arm0, "n_arm1": self.n_arm1,
                "n_bootstrap": self.n_bootstrap, "n_permutations": self.n_permutations}


def _split(outcomes, arms):
    y = np.asarray(outcomes, dtype=float).ravel()
    a = np.asarray(arms).astype(int).ravel()
    if y.shape != a.shape:
        raise EstimationError("outcomes and arms must have the same length")
    keep = ~np.isnan(y)
    y, a = y[keep], a[keep]
    y0, y1 = y[a == 0], y[a == 1]
    if y0.size < 2 or y1.size < 2:
        raise EstimationError(
            f"ATE needs at least 2 observed outcomes per arm (arm 0: {y0.size}, arm 1: {y1.size})")
    return y0, y1


def difference_in_means(outcomes, arms) -> float:
    y0, y1 = _split(outcomes, arms)
    return float(y1.mean() - y0.mean())


def _chunks(total, seed):
    sizes = [min(CHUNK, total - s) for s in range(0, total, CHUNK)]
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    seqs = ss.spawn(len(sizes))
    return zip(sizes, (np.random.default_rng(s) for s in seqs))


def bootstrap_ate(y0, y1, n_resamples=10_000, seed=0) -> np.ndarray:
    """Resample each arm with replacement; returns one ATE per resample."""
    out = []
    for size, rng in _chunks(n_resamples, seed):
        i0 = rng.integers(0, y0.size, size=(size, y0.size))
        i1 = rng.integers(0, y1.size, size=(size, y1.size))
        out.append(y1[i1].mean(axis=1) - y0[i0].mean(axis=1))
    return np.concatenate(out) if out else np.empty(0)


def permutation_ate(y0, y1, n_permutations=10_000, seed=0) -> np.ndarray:
    """ATE under random relabeling of arms, arm sizes held fixed."""
    y = np.concatenate([y0, y1])
    n1 = y1.size
    labels = np.zeros(y.size)
    labels[y0.size:] = 1.0
    total = y.sum()
    out = []
    for size, rng in _chunks(n_permutations, seed):
        P = rng.permuted(np.broadcast_to(labels, (size, y.size)), axis=1)
        s1 = P @ y
        out.append(s1 / n1 - (total - s1) / y0.size)
    return np.concatenate(out) if out else np.empty(0)


def ate(outcomes, arms, feature: str = "", n_bootstrap: int = 10_000,
        n_permutations: int = 10_000, seed: int = 0, units: str = "standardized") -> AteResult:
    """Arm-1 minus arm-0 mean outcome over observed entries.

    The 95% interval is a percentile bootstrap resampling within each arm.
    The p-value is two-sided, ``(1 + #{|perm| >= |obs|}) / (B + 1)``.
    """
    y0, y1 = _split(outcomes, arms)
    est = float(y1.mean() - y0.mean())
    ss = np.random.SeedSequence(seed)
    boot_seed, perm_seed = ss.spawn(2)
    if n_bootstrap > 0:
        boot = bootstrap_ate(y0, y1, n_bootstrap, boot_seed)
        lo, hi = (float(v) for v in np.percentile(boot, [2.5, 97.5]))
    else:
        lo = hi = float("nan")
    if n_permutations > 0:
        perm = permutation_ate(y0, y1, n_permutations, perm_seed)
        tol = 1e-12 * (1.0 + abs(est))
        extreme = int(np.count_nonzero(np.abs(perm) >= abs(est) - tol))
        p = (1 + extreme) / (n_permutations + 1)
    else:
        p = float("nan")
    return AteResult(feature, est, lo, hi, float(p), int(y0.size), int(y1.size), units,
                     int(n_bootstrap), int(n_permutations))
