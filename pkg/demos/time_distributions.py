"""ASCII view of the five training-time distributions.

Where training spends its time budget along t is a first-order design
choice: mass near t=1 helps the hard, nearly-destroyed inputs, mass near
t=0 polishes the final steps of inference.
"""

import numpy as np

from restep.regressor import (
    TIME_DISTRIBUTION_KINDS,
    TimeDistribution,
    sample_times,
)
from restep.worlds import derive_rng

BINS = 20
WIDTH = 44

for kind in TIME_DISTRIBUTION_KINDS:
    dist = TimeDistribution(kind, a=1.0) if kind == "linear_a" \
        else TimeDistribution(kind)
    draws = sample_times(dist, derive_rng(1, "demo-pt", kind), 40_000)
    atom = float(np.mean(draws == 1.0))
    body = draws[draws < 1.0]
    hist, edges = np.histogram(body, bins=BINS, range=(0.0, 1.0))
    scale = WIDTH / max(hist.max(), 1)
    print(f"{kind}  (mean t = {draws.mean():.3f})")
    for count, lo in zip(hist, edges[:-1]):
        print(f"  {lo:4.2f} {'#' * int(round(count * scale))}")
    if atom > 0.001:
        print(f"  atom at t=1.0 with mass {atom:.3f}")
    print()
