"""
A small simulation study
========================

Replicates share derived seeds, so every cell of the design sees the same
random draws. The report comes back in long format.
"""

from coders.pipeline import CodersConfig, run_study
from coders.simulator import BlockStructure, SimulationSpec

spec = SimulationSpec(n=120, structure=BlockStructure(traits=2, facets_per_trait=3, items_per_facet=10), gamma=0.2)
report = run_study(
    spec, ("both", "lsp-only"), (0.01, 0.001), replicates=2,
    master_seed=7, regimes=("early", "late"), cfg=CodersConfig(epochs=20),
)

for row in report.rows:
    if row["type"] == "all":
        print(f"{row['metric']:>4} {row['variant']:>9} alpha={row['alpha']:<6} {row['regime']:>6}: {row['value']:.3f}")
