"""Estimate the model on choice-based samples drawn from known parameters.

Run: python3 demos/03_parameter_recovery.py [n_seeds]
"""
import sys

import numpy as np

from simsafe.domain import PARAM_NAMES
from simsafe.estimation import coefficient_table, estimate
from simsafe.nested import sampling_weights
from simsafe.synthetic import RECOVERY_PARAMETERS, choice_based_indices, synthesize_cells

n_seeds = int(sys.argv[1]) if len(sys.argv) > 1 else 3
truth = RECOVERY_PARAMETERS.vector()

z_scores = []
for seed in range(n_seeds):
    data = synthesize_cells(50000, RECOVERY_PARAMETERS, seed)
    population = data.outcome_counts()
    # keep every accident cell, NA cells at ten per accident
    target = population.astype(int)
    target[0] = 10 * target[1:].sum()
    sample = data.subset(choice_based_indices(data.labels, target, seed))
    w = sampling_weights(population, sample.outcome_counts())
    res = estimate(sample, w)
    print(f"seed {seed}: population {population.astype(int).tolist()}, sample {sample.n_cells} cells, "
          f"weights {np.round(w.array(), 4).tolist()}")
    if seed == 0:
        print(coefficient_table(res))
    if res.std_errors is not None:
        se = np.array(list(res.std_errors.values()))
        z_scores.append((res.params.vector() - truth) / se)

z = np.array(z_scores)
print("\nparameter      truth   share |z|<=2")
for j, name in enumerate(PARAM_NAMES):
    print(f"{name:12s} {truth[j]:7.2f}   {np.mean(np.abs(z[:, j]) <= 2):.2f}")
