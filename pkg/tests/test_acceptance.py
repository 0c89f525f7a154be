"""Acceptance criteria, checked against the synthetic oracle.

Each test records one PASS/FAIL line; the lines are printed in the pytest
terminal summary (see conftest.py). The module also runs standalone:
``python3 tests/test_acceptance.py``.
"""

import json
import math
import time
import warnings

import numpy as np
import pytest

from rctpolicy.cli import main as cli_main
from rctpolicy.cohort import outcome_deltas, standardize
from rctpolicy.evaluation import (
    TrialData,
    ate,
    constant_policy,
    cross_validated_policy,
    make_fold_plan,
    policy_value,
    random_policy,
    random_policy_distribution,
    threshold_policy,
)
from rctpolicy.learners import LearnerSpec
from rctpolicy.meta import CounterfactualScores, MetaSpec, Policy, assign
from rctpolicy.synthetic import ScenarioSpec, generate, save_oracle, true_policy_value

RESULTS: list[str] = []
SEEDS = range(20)


def record(number: int, name: str, ok: bool, detail: str):
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {name}: {detail}"
    RESULTS.append(line)
    print(line)
    return ok


# --- 1. ATE recovery ---------------------------------------------------------------

def test_c01_ate_recovery():
    t0 = time.perf_counter()
    est, covered = [], 0
    for seed in range(200):
        o = generate(ScenarioSpec(n_patients=200, effect="constant", tau=-2.0, noise_sd=1.0, seed=seed))
        r = ate(outcome_deltas(o.cohort).column("pec"), o.cohort.arms, "pec", n_bootstrap=10_000,
                n_permutations=0, seed=seed, units="raw")
        est.append(r.ate)
        covered += r.ci_low <= -2.0 <= r.ci_high
    elapsed = time.perf_counter() - t0
    mean = float(np.mean(est))
    ok = abs(mean + 2.0) <= 0.1 and covered / 200 >= 0.91
    assert record(1, "ATE recovery", ok,
                  f"mean ATE {mean:.4f} (target -2 +/- 0.1), CI coverage {covered}/200 "
                  f"(need >= 91%), {elapsed:.1f}s")


# --- 2. null calibration -------------------------------------------------------------

def test_c02_null_calibration():
    rejections = 0
    for seed in range(200):
        o = generate(ScenarioSpec(n_patients=200, effect="constant", tau=0.0, noise_sd=1.0, seed=seed))
        r = ate(outcome_deltas(o.cohort).column("pec"), o.cohort.arms, n_bootstrap=0,
                n_permutations=10_000, seed=seed)
        rejections += r.p_value <= 0.05
    ok = rejections / 200 <= 0.07
    assert record(2, "null calibration", ok, f"p <= 0.05 in {rejections}/200 null cohorts (need <= 7%)")


# --- 3. policy-value unbiasedness ----------------------------------------------------

def test_c03_policy_value_unbiased():
    errors = {"constant 0": [], "constant 1": [], "random": [], "threshold": []}
    for seed in range(500):
        o = generate(ScenarioSpec(n_patients=500, effect="threshold", tau_low=-1, tau_high=1,
                                  noise_sd=1.0, seed=seed))
        d = TrialData.from_cohort(o.cohort)
        n = len(d)
        policies = {"constant 0": constant_policy(0, n), "constant 1": constant_policy(1, n),
                    "random": random_policy(n, seed + 10_000),
                    "threshold": threshold_policy(o.cohort.x_start[:, 0], 0.0, high_arm=0)}
        for name, pol in policies.items():
            errors[name].append(policy_value(pol, d).mean_outcome - true_policy_value(pol, o))
    parts, ok = [], True
    for name, e in errors.items():
        e = np.asarray(e)
        bias, se = e.mean(), e.std(ddof=1) / math.sqrt(e.size)
        ok &= abs(bias) <= 2 * se
        parts.append(f"{name} bias {bias:+.4f} ({abs(bias) / se:.2f} SE)")
    assert record(3, "policy-value unbiasedness", ok, "; ".join(parts))


# --- 4-6. heterogeneity scenario -----------------------------------------------------

def scenario4(seed: int) -> dict:
    o = generate(ScenarioSpec(n_patients=400, n_features=20, effect="threshold", tau_low=-1,
                              tau_high=1, noise_sd=0.5, seed=seed))
    d = TrialData.from_cohort(o.cohort)
    plan = make_fold_plan(d.ids, d.arms, 6, seed)
    base = LearnerSpec("boosted-trees", seed=seed)
    t_pol = cross_validated_policy(MetaSpec("t-learner", base), d, plan)
    s_pol = cross_validated_policy(MetaSpec("s-learner", base), d, plan)
    band = random_policy_distribution(d, 1000, seed)
    t_val = band.annotate(policy_value(t_pol, d))
    return {
        "t": t_val, "s": policy_value(s_pol, d), "band": band,
        "c0": policy_value(constant_policy(0, len(d)), d),
        "c1": policy_value(constant_policy(1, len(d)), d),
        "agree": float(np.mean(t_pol.assignment == o.oracle_policy.assignment)),
    }


@pytest.fixture(scope="module")
def scenario4_runs():
    t0 = time.perf_counter()
    runs = [scenario4(seed) for seed in SEEDS]
    return runs, (time.perf_counter() - t0) / len(runs)


def test_c04_heterogeneity_detection(scenario4_runs):
    runs, per_run = scenario4_runs
    detected = sum(r["t"].effectiveness > r["band"].quantiles()[2] and r["t"].empirical_p < 0.01
                   for r in runs)
    inside = sum(r["band"].in_band(r["c0"].effectiveness) and r["band"].in_band(r["c1"].effectiveness)
                 for r in runs)
    ok = detected >= 18 and inside >= 18
    assert record(4, "heterogeneity detection", ok,
                  f"T-learner above band with p < 0.01 in {detected}/20, both constants in band "
                  f"{inside}/20 (need 18 each), {per_run:.1f}s per run")


def test_c05_meta_learner_ordering(scenario4_runs):
    runs, _ = scenario4_runs
    wins = sum(r["t"].effectiveness >= r["s"].effectiveness for r in runs)
    wins_outcome = sum(r["t"].mean_outcome <= r["s"].mean_outcome for r in runs)
    assert record(5, "meta-learner ordering", wins >= 15,
                  f"T >= S effectiveness in {wins}/20 (need 15); mean-outcome ordering {wins_outcome}/20")


def test_c06_oracle_agreement(scenario4_runs):
    runs, _ = scenario4_runs
    agree = float(np.mean([r["agree"] for r in runs]))
    assert record(6, "oracle agreement", agree >= 0.85,
                  f"mean agreement {agree:.3f} (need >= 0.85), min {min(r['agree'] for r in runs):.3f}")


# --- 7. importance recovery -------------------------------------------------------------

def test_c07_importance_recovery(tmp_path):
    hits = 0
    for seed in SEEDS:
        o = generate(ScenarioSpec(n_patients=400, effect="linear", weights=(0, 0, 0, 1, 0),
                                  noise_sd=0.5, seed=seed))
        cohort, _ = save_oracle(o, tmp_path / "c.csv", tmp_path / "o.json")
        out = tmp_path / f"imp{seed}"
        assert cli_main(["importance", "--input", str(cohort), "--output-dir", str(out),
                         "--seed", str(seed)]) == 0
        panels = json.loads((out / "importance.json").read_text())["panels"]
        arm1 = next(p for p in panels if p["arm"] == 1)
        hits += arm1["features"][0]["feature"] == "x3"
    assert record(7, "importance recovery", hits >= 18, f"x3 ranked first for arm 1 in {hits}/20 (need 18)")


# --- 8. exact micro-oracles ---------------------------------------------------------------

def test_c08_micro_oracles():
    checks = {}
    arms = np.array([0, 1, 0, 1])
    d = TrialData(("p1", "p2", "p3", "p4"), arms, np.zeros((4, 1)), np.array([-10.0, -2, 3, -8]),
                  np.zeros(4), np.full(4, 20.0), np.zeros(4))
    v = policy_value(Policy(np.array([0, 0, 1, 1])), d)
    checks["policy_value"] = abs(v.mean_outcome + 9.0) <= 1e-9 and v.matched_count == 2
    r = ate([-1.0, -0.5, 0.0, 0.5], [1, 1, 0, 0], n_bootstrap=10, n_permutations=10)
    checks["ate"] = abs(r.ate + 1.0) <= 1e-9
    checks["assign"] = (assign(CounterfactualScores([-0.5, 1.0, 0.3], [0.2, -1.0, 0.3])).assignment.tolist()
                        == [0, 1, 0])
    z1 = standardize(np.array([1.0, 2.0, 3.0])).values[:, 0]
    z2 = standardize(np.array([-1.0, 1.0])).values[:, 0]
    checks["standardize"] = (np.allclose(z1, [-1.224744871391589, 0.0, 1.224744871391589], rtol=0, atol=1e-9)
                             and np.allclose(z2, [-1.0, 1.0], rtol=0, atol=1e-9))
    ok = all(checks.values())
    assert record(8, "exact micro-oracles", ok, ", ".join(f"{k} {'ok' if v else 'MISMATCH'}"
                                                           for k, v in checks.items()))


# --- 9. determinism ---------------------------------------------------------------------

def _snapshot(directory):
    return {str(p.relative_to(directory)): p.read_bytes()
            for p in sorted(directory.rglob("*")) if p.is_file()}


def test_c09_determinism(tmp_path):
    sim = ["simulate", "--output-dir", str(tmp_path / "sim"), "--n-patients", "150",
           "--effect", "threshold", "--missing-rate", "0.1", "--seed", "11"]
    cohort = str(tmp_path / "sim" / "cohort.csv")
    commands = {
        "simulate": sim,
        "ate": ["ate", "--input", cohort, "--bootstrap", "2000", "--permutations", "2000"],
        "policy": ["policy", "--input", cohort, "--jobs", "8", "--random-draws", "500"],
        "importance": ["importance", "--input", cohort, "--outcome-column", "pec",
                       "--outcome-column", "remission"],
    }
    same = {}
    for name, argv in commands.items():
        snaps = []
        for _ in range(2):
            args = argv if name == "simulate" else argv + ["--output-dir", str(tmp_path / name)]
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                assert cli_main(args) == 0
            snaps.append(_snapshot(tmp_path / ("sim" if name == "simulate" else name)))
        same[name] = snaps[0] == snaps[1] and len(snaps[0]) > 0
    assert record(9, "determinism", all(same.values()),
                  ", ".join(f"{k} {'identical' if v else 'DIFFERS'}" for k, v in same.items()))


# --- 10. report shape -------------------------------------------------------------------

def test_c10_report_shape(tmp_path):
    o = generate(ScenarioSpec(n_patients=200, effect="threshold", noise_sd=0.5, seed=2))
    cohort, _ = save_oracle(o, tmp_path / "c.csv", tmp_path / "o.json")
    assert cli_main(["ate", "--input", str(cohort), "--output-dir", str(tmp_path / "a"),
                     "--bootstrap", "500", "--permutations", "500"]) == 0
    assert cli_main(["policy", "--input", str(cohort), "--output-dir", str(tmp_path / "p"),
                     "--random-draws", "300"]) == 0
    ate_rep = json.loads((tmp_path / "a" / "ate.json").read_text())
    pol_rep = json.loads((tmp_path / "p" / "policy.json").read_text())
    problems = []
    outcomes = {r["feature"] for r in ate_rep["rows"]}
    if "pec" not in outcomes:
        problems.append("no pec row")
    for r in ate_rep["rows"]:
        if not (isinstance(r["ate"], float) and len(r["ci_95"]) == 2 and 0 < r["p_value"] <= 1):
            problems.append(f"bad ATE row {r['feature']}")
    by_label = {r["label"]: r for r in pol_rep["rows"]}
    for label in ("1FED", "6FED", "Random", "pec_start threshold (in-sample)",
                  "pec_start threshold (out-of-fold)", "S-learner (boosted-trees)",
                  "T-learner (boosted-trees)"):
        if label not in by_label:
            problems.append(f"missing row {label}")
    for label, r in by_label.items():
        need = {"outcome_decrease", "effectiveness", "matched_count"}
        need |= {"effectiveness_ci_95", "outcome_ci_95"} if r["family"] == "random" else {"empirical_p"}
        if not need <= set(r):
            problems.append(f"row {label} lacks {sorted(need - set(r))}")
    if "q97.5" not in pol_rep["random_band"]["effectiveness"]:
        problems.append("random band missing")
    assert record(10, "report shape", not problems,
                  "ATE and policy-value report fields present" if not problems else "; ".join(problems))


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
