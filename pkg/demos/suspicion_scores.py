"""
How the suspicion score orders patterns
=======================================

A pattern with ``P_len`` labels seen in ``P_supp`` of ``I_total``
transactions scores ``P_len * (I_total / P_supp) ** 2``. Rarity dominates:
halving the support quadruples the score, while one extra label adds only
a linear share.
"""

import numpy as np

from fedpat.pattern_mining import Pattern
from fedpat.ranking import rank_patterns, suspicion_score

total = 569
print("supp  " + "".join(f"len={n:<9}" for n in (2, 4, 8)))
for supp in (1, 2, 6, 50, 300):
    print(f"{supp:<6}" + "".join(f"{suspicion_score(n, supp, total):<13.1f}" for n in (2, 4, 8)))

###############################################################################
# A long one-off pattern, a mid-sized recurring one, and a common pair.

patterns = [
    Pattern(("E29", "F22"), tuple(range(0, 560, 5))),
    Pattern(("E29", "E9", "F22", "F7"), (27, 315, 417, 422, 429, 556)),
    Pattern(("E2", "E29", "E3", "F5", "F6", "F7"), (295,)),
]
for rp in rank_patterns(patterns, total):
    print(f"rank {rp.rank}: log10(s)={rp.log10_score:6.3f}  {list(rp.pattern.labels)}")

# Scaling support and total together leaves the score unchanged.
s = np.array([suspicion_score(3, 4 * c, 100 * c) for c in (1, 10, 1000)])
print("scale check:", s, np.ptp(s))
