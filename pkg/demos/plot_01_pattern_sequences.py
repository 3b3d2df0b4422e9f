"""
Scoring repeated response patterns
==================================

Each response gets a score for how long a repeating pattern of period ``l``
runs through it. Taking the maximum over periods gives the per-item LSP
series used by the detector.
"""

import numpy as np

from coders.lsp import l_pattern_values, longstring, lsp_sequence

###############################################################################
# A respondent alternating 1-2 for a while, then wandering, then alternating
# 4-5. Period 2 catches both stretches.
x = [1, 2, 1, 2, 1, 4, 3, 5, 4, 5, 4]
print("period 2:", l_pattern_values(x, 2))

###############################################################################
# Period 1 is ordinary straightlining, and its maximum is the classic
# longstring index.
y = [3, 2, 3, 3, 1, 4, 1, 1, 1]
print("period 1:", l_pattern_values(y, 1), "longstring:", longstring(y))

###############################################################################
# A careful first half followed by a 1-2-3 loop. LSP jumps where the loop starts.
rng = np.random.default_rng(0)
z = np.r_[rng.integers(1, 6, 20), np.tile([1, 2, 3], 7)]
print("LSP:", lsp_sequence(z, l_max=5).values)
