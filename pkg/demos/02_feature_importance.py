"""Which baseline features drive each arm's outcome model?

Run: python3 demos/02_feature_importance.py
"""

import numpy as np

from rctpolicy import LearnerSpec, MetaSpec, ScenarioSpec, TrialData, fit_meta, generate, standardize

# The arm-1 minus arm-0 effect depends on x3 only.
oracle = generate(ScenarioSpec(n_patients=400, effect="linear", weights=(0, 0, 0, 1, 0),
                               noise_sd=0.5, seed=3))
data = TrialData.from_cohort(oracle.cohort)
y = standardize(data.target).values[:, 0]

model = fit_meta(MetaSpec("t-learner", LearnerSpec("boosted-trees")), data.features, data.arms, y)
for arm, m in enumerate(model.models):
    gains = m.importance()
    order = np.argsort(-gains, kind="stable")
    top = ", ".join(f"{data.feature_names[i]} {gains[i]:.2f}" for i in order[:3])
    print(f"arm {arm} model, top gain shares: {top}")
