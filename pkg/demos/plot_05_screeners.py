"""
Classic whole-respondent screeners
==================================

Longstring, personal reliability and psychometric antonyms give one score per
respondent and no onset. They are a baseline for comparison.
"""

import numpy as np

from coders.screeners import screen_all
from coders.simulator import SimulationSpec, simulate

data = simulate(SimulationSpec(n=300, gamma=0.2, seed=6))

# the simulated facets correlate around -0.4 across keying, so relax the pair threshold
scores = screen_all(data.matrix, data.design, pair_threshold=-0.3)

for name, result in scores.items():
    if result is None:
        print(f"{name}: unavailable")
        continue
    for kind in ("attentive", "random", "straightlining", "pattern"):
        rows = data.truth.types == kind
        print(f"{name:>11} {kind:>14}: flagged {np.mean(result.flags[rows]):.2f}")
