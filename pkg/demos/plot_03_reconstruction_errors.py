"""
Reconstruction errors from an autoencoder
=========================================

A bottleneck network learns how attentive answers hang together. Answers it
cannot reconstruct get a large error.
"""

import numpy as np

from coders.autoencoder import AutoencoderConfig, reconstruction_errors, train
from coders.simulator import BlockStructure, SimulationSpec, simulate

###############################################################################
# A smaller questionnaire keeps training quick: 60 items on 6 facets.
structure = BlockStructure(traits=2, facets_per_trait=3, items_per_facet=10)
data = simulate(SimulationSpec(n=300, structure=structure, gamma=0.2, seed=3))

cfg = AutoencoderConfig(p=data.matrix.p, bottleneck_size=data.design.s, epochs=40, seed=3)
fit = train(data.matrix, cfg)
print("final loss:", round(fit.loss_history[-1], 4))

###############################################################################
# Random responders should have larger errors after their onset.
re = reconstruction_errors(fit.params, data.matrix).values
for kind in ("attentive", "random"):
    rows = np.flatnonzero(data.truth.types == kind)
    after = [re[i, data.truth.onset[i] - 1:].mean() if kind != "attentive" else re[i].mean() for i in rows]
    print(f"{kind:>9}: mean error {np.mean(after):.3f}")
