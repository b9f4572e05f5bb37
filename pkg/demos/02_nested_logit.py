"""Nested logit probabilities: the role of the nest scale mu.

Run: python3 demos/02_nested_logit.py
"""
import numpy as np

from simsafe.domain import FeatureVector, paper_parameters
from simsafe.nested import mc_probability_oracle, nl_probabilities
from simsafe.scores import ScoreVector, score_vector

sv = ScoreVector(v_na=0.0, v_re=-3.0, v_lc=-3.5, v_ror=-5.0)
print("mu     P(NA)     P(RE)     P(LC)     P(ROR)")
for mu in (1.0, 1.622, 3.0, 10.0):
    p = nl_probabilities(sv, mu)
    print(f"{mu:5.3f}  " + "  ".join(f"{x:.6f}" for x in p))

# two-stage simulation agrees with the closed form
freq = mc_probability_oracle(sv, 1.622, 1_000_000, seed=0)
print("simulated at mu=1.622:", np.round(freq, 5))

# only RE available: mu drops out of a singleton nest
single = ScoreVector(0.0, -2.0, 0.0, 0.0, (True, True, False, False))
print("singleton nest:", [round(nl_probabilities(single, mu)[1], 6) for mu in (1.0, 2.0, 5.0)])

# reported motorway coefficients on a risky rear-end situation
paper = paper_parameters()
risky = FeatureVector(ra_need_pos=2.0, ra_lim=0.5, avail_re=True, avail_ror=True)
calm = FeatureVector(avail_re=True, avail_ror=True)
for name, f in (("risky", risky), ("calm", calm)):
    p = nl_probabilities(score_vector(f, paper), paper.mu)
    print(f"{name:5s} P(RE)={p[1]:.3e}  P(ROR)={p[3]:.3e}")
