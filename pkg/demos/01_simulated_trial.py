"""Walk through one simulated two-arm trial: effects, policies, the random band.

Run: python3 demos/01_simulated_trial.py
"""

import warnings

import numpy as np

from rctpolicy import (
    LearnerSpec,
    MetaSpec,
    ScenarioSpec,
    TrialData,
    ate,
    constant_policy,
    cross_validated_policy,
    generate,
    make_fold_plan,
    outcome_deltas,
    policy_value,
    random_policy_distribution,
    standardize,
    threshold_policy_sweep,
    true_policy_value,
)

# A trial where arm 1 helps patients with x0 > 0 and hurts the rest.
oracle = generate(ScenarioSpec(n_patients=400, n_features=8, effect="threshold",
                               tau_low=-1, tau_high=1, noise_sd=0.5, seed=0))
cohort = oracle.cohort
print("arm counts:", cohort.arm_counts())

# Average effect on the standardized PEC delta. It is near zero: the two
# subgroups cancel out, which is exactly why a policy can still help.
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    z = standardize(outcome_deltas(cohort))
r = ate(z.column("pec"), cohort.arms, "pec", n_bootstrap=2000, n_permutations=2000)
print(f"ATE on z(pec): {r.ate:+.3f}  CI [{r.ci_low:+.3f}, {r.ci_high:+.3f}]  p = {r.p_value:.3f}")

data = TrialData.from_cohort(cohort)
band = random_policy_distribution(data, n_draws=1000, seed=0)
lo, mid, hi = band.quantiles()
print(f"random policies: effectiveness {mid:.3f}, 95% band [{lo:.3f}, {hi:.3f}]")

for arm in (0, 1):
    v = policy_value(constant_policy(arm, len(data)), data)
    print(f"everyone on arm {arm}: effectiveness {v.effectiveness:.3f}")

sweep = threshold_policy_sweep(data)
print(f"best pec_start threshold (in-sample): {sweep.best.label}, "
      f"effectiveness {sweep.best_value.effectiveness:.3f}")

# Out-of-fold T-learner: each patient is scored by models that never saw them.
plan = make_fold_plan(data.ids, data.arms, k=6, seed=0)
policy = cross_validated_policy(MetaSpec("t-learner", LearnerSpec("boosted-trees")), data, plan)
v = band.annotate(policy_value(policy, data))
print(f"T-learner: effectiveness {v.effectiveness:.3f}, empirical p {v.empirical_p:.4f}, "
      f"matched {v.matched_count}/{len(data)}")

# The simulator knows both potential outcomes, so we can check against the truth.
agree = np.mean(policy.assignment == oracle.oracle_policy.assignment)
print(f"agreement with the oracle policy: {agree:.3f}")
print(f"true mean PEC delta under the T-learner policy: {true_policy_value(policy, oracle):+.3f} "
      f"(oracle {oracle.oracle_value:+.3f})")
