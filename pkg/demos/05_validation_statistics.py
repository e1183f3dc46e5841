"""Judge measurement quality: RMSE, Pearson correlation, paired t-test.

Simulates per-interval flow counts measured by the engine against
manually counted ground truth and runs the field-validation statistics.
The t-test asks whether the measurement is biased; the correlation asks
whether it tracks the traffic dynamics.
"""

import numpy as np

from trafficstate import paired_t_test, pearson, rmse

rng = np.random.default_rng(3)

# Ground-truth vehicles per one-minute interval over an hour.
truth = np.clip(rng.normal(38, 9, size=60).round(), 5, None)

# The engine's counts: small unbiased noise plus an occasional missed vehicle.
measured = truth + rng.normal(0, 2.2, size=60).round() - (rng.random(60) < 0.2)

print("interval counts (first 10):")
print("  truth    :", truth[:10].astype(int).tolist())
print("  measured :", measured[:10].astype(int).tolist())

r = rmse(measured, truth)
corr = pearson(measured, truth)
t, p = paired_t_test(measured, truth)

print(f"\nRMSE               : {r:.2f} vehicles")
print(f"Pearson correlation: {corr:.3f}")
print(f"paired t-test      : t = {t:.3f}, p = {p:.3f}")
if p > 0.05:
    print("-> no significant bias at the 95% level; the counts are usable")
else:
    print("-> significant bias; the measurement systematically drifts")

# A deliberately biased measurement for contrast: always 3 vehicles high.
biased = truth + 3.0
t_b, p_b = paired_t_test(biased, truth)
print(f"\nconstant +3 bias   : r = {pearson(biased, truth):.3f}, "
      f"t = {t_b if np.isfinite(t_b) else float('inf')}, p = {p_b:.3g}")
print("-> correlation stays perfect, the t-test flags the offset")
