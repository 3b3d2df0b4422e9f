"""
Detecting careless onsets end to end
====================================

Simulate a survey, run the detector on both series, and score the result
against the known onsets.
"""

from coders.pipeline import CodersConfig, evaluate, run_coders
from coders.simulator import SimulationSpec, simulate

data = simulate(SimulationSpec(n=200, gamma=0.2, seed=5))
res = run_coders(data.matrix, data.design, CodersConfig(alpha=0.001, seed=5))

###############################################################################
# Overall error rates, then a breakdown per careless type.
report = evaluate(res.flagged, res.onsets, data.truth)
print(f"FPR {report.fpr:.3f}  FNR {report.fnr:.3f}  onset MAE {report.mae:.2f}")
for kind, stats in report.by_type.items():
    mae = "n/a" if stats["mae"] is None else f"{stats['mae']:.2f}"
    print(f"  {kind:>14}: FNR {stats['fnr']:.2f}  MAE {mae}")

###############################################################################
# Dropping the reconstruction error leaves only the pattern series; it never
# trains a network and misses most random responders.
lsp_only = run_coders(data.matrix, None, CodersConfig(dims="lsp-only", alpha=0.001))
print("random FNR, LSP only:", evaluate(lsp_only.flagged, lsp_only.onsets, data.truth).by_type["random"]["fnr"])
