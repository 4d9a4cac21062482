"""
Oracle power as a function of signal strength
=============================================

With the precision matrix known, T(k) for several k is compared against
five equal spikes of size sqrt(2 r log p / n). Summing the top few scores
pays off once the signal is spread over more than one coordinate.
"""

from hdmean.simlab import power_curve

curve = power_curve(p=200, k0=5, ks=(1, 5, 10), r_grid=(0.1, 0.2, 0.3, 0.4), reps=5000, seed=0)
print("r     " + "  ".join(f"{name:>6s}" for name in curve.rejection_rates))
for i, r in enumerate(curve.grid):
    print(f"{r:.1f}   " + "  ".join(f"{rates[i]:6.3f}" for rates in curve.rejection_rates.values()))
