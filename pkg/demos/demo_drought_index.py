"""
From monthly rainfall to a regional drought count
=================================================

Simulate Gamma-distributed rainfall at a handful of grid points, convert each
point to a 12-month standardized precipitation index and count how many
points are in drought each month.
"""
import numpy as np

from droughtcause.spi import drought_count_series, fit_gamma, spi_field, spi_series
from droughtcause.synthetic import gen_gamma_rainfall

# 70 years of monthly rain at 10 points; roughly one month in ten is dry
rain = np.column_stack([gen_gamma_rainfall(2.0, 50.0, 0.1, 840, seed=s) for s in range(10)])
print("rain shape (months, points):", rain.shape)

# dry months make the sums only roughly Gamma, but the fitted mean should sit
# near 12 * 0.9 * 100 = 1080
sums = np.convolve(rain[:, 0], np.ones(12), mode="valid")
params = fit_gamma(sums[:360])
print(f"fitted shape {params.shape:.2f}, scale {params.scale:.2f}, "
      f"mean {params.shape * params.scale:.0f}, zero fraction {params.q_zero:.3f}")

# each month is scored against the 30 years that precede its window
one = spi_series(rain[:, 0])
valid = one.values[~one.missing]
print(f"point 0: {valid.size} evaluated months, mean {valid.mean():+.3f}, sd {valid.std():.3f}")

spi = spi_field(rain)
drought = drought_count_series(spi, threshold=-1.0)
ok = ~drought.missing
print("months with a drought count:", ok.sum())
print("mean fraction of points in drought:", drought.fraction[ok].mean().round(3))
print("worst month index:", int(np.argmax(np.where(ok, drought.count, -1))),
      "with", int(drought.count[ok].max()), "of", drought.n_points, "points")
