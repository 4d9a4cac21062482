"""
How the precision transform spreads a sparse signal
===================================================

Multiplying a sparse mean by an AR(1) precision matrix turns each spike
into a spike plus two neighbours, so four nonzeros become twelve.
"""

import numpy as np

from hdmean.simlab import signal_transform_demo

theta, tilde = signal_transform_demo(p=200, n=100, k0=4, rho=0.6, seed=0)
print("nonzeros before:", np.count_nonzero(theta), "after:", np.count_nonzero(tilde))
for j in np.flatnonzero(theta):
    window = slice(max(j - 2, 0), j + 3)
    print(f"spike at {j:3d}: theta {np.round(theta[window], 3)} -> {np.round(tilde[window], 3)}")
