"""Standardized precipitation index and the national drought series.

Rain at each point is accumulated over 12 months, the accumulation is placed
in the distribution of accumulations from the preceding 30 years (a Gamma fit
plus a point mass at zero), and the resulting probability is mapped to a
standard-normal z-score.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DataError, NumericalError

#: Smallest number of strictly positive accumulations accepted for a fit.
MIN_POSITIVE = 20
#: Probabilities are clamped to [CLAMP, 1 - CLAMP] before inversion.
CLAMP = 1e-7


class DegenerateWindowWarning(UserWarning):
    """A reference window could not support a Gamma fit."""


@dataclass(frozen=True)
class GammaParams:
    shape: float
    scale: float
    q_zero: float = 0.0

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ValueError(f"shape and scale must be positive, got {self.shape}, {self.scale}")
        if not 0.0 <= self.q_zero < 1.0:
            raise ValueError(f"q_zero must lie in [0, 1), got {self.q_zero}")


@dataclass(frozen=True, eq=False)
class SpiSeries:
    """SPI values for one point; NaN where the month could not be evaluated."""

    months: np.ndarray
    values: np.ndarray

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)


@dataclass(frozen=True, eq=False)
class DroughtSeries:
    months: np.ndarray
    count: np.ndarray
    fraction: np.ndarray
    missing: np.ndarray
    n_points: int


def rolling_sum(series, window: int = 12) -> np.ndarray:
    """Trailing sum over `window` months; the first ``window - 1`` entries are NaN."""
    if window <= 0:
        raise ValueError(f"window must be positive, got {window}")
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise ValueError("rolling_sum expects a 1-D series")
    if x.size < window:
        raise DataError(f"series of length {x.size} shorter than window {window}")
    if window == 1:
        return x.copy()
    out = np.full(x.size, np.nan)
    nan = np.isnan(x)
    # cumulative sums keep this O(n); gaps are zero-filled here and re-masked below
    c = np.concatenate([[0.0], np.cumsum(np.where(nan, 0.0, x))])
    out[window - 1:] = c[window:] - c[:-window]
    if nan.any():
        bad = np.convolve(nan.astype(int), np.ones(window, dtype=int))[: x.size] > 0
        out[bad] = np.nan
    return out


def fit_gamma(samples, tol: float = 1e-10, max_iter: int = 100) -> GammaParams:
    """Maximum-likelihood Gamma fit.

    The scale is profiled out (``scale = mean / shape``), leaving the
    one-dimensional equation ``log(shape) - digamma(shape) = A`` with
    ``A = log(mean) - mean(log x)``, solved by Newton's method from Thom's
    approximation. Iteration stops once the likelihood gradient with respect
    to the shape drops below `tol`.

    Returns parameters with ``q_zero = 0``; the zero fraction belongs to the
    caller, which knows the full window.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < MIN_POSITIVE:
        raise DataError(f"need at least {MIN_POSITIVE} samples, got {x.size}")
    if np.any(~np.isfinite(x)) or np.any(x <= 0):
        raise DataError("Gamma fit needs strictly positive finite samples")
    mean = x.mean()
    A = np.log(mean) - np.log(x).mean()
    if not A > 0 or np.ptp(x) == 0:
        raise DataError("degenerate sample: zero variance")

    n = x.size
    k = (1.0 + np.sqrt(1.0 + 4.0 * A / 3.0)) / (4.0 * A)
    for _ in range(max_iter):
        f = np.log(k) - special.digamma(k) - A
        if n * abs(f) < tol:
            break
        step = f / (1.0 / k - special.polygamma(1, k))
        k_new = k - step
        if k_new <= 0:
            k_new = k / 2.0
        if k_new == k:
            break
        k = k_new
    else:
        raise NumericalError("Gamma shape iteration did not converge")
    return GammaParams(shape=float(k), scale=float(mean / k))


def gamma_cdf(x, params: GammaParams):
    """Regularized lower incomplete Gamma function at x/scale."""
    return special.gammainc(params.shape, np.asarray(x, dtype=float) / params.scale)


def mixed_cdf(x, params: GammaParams):
    """Cumulative probability with a point mass ``q_zero`` at zero."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("cumulative rain must be non-negative")
    q = params.q_zero
    return q + (1.0 - q) * gamma_cdf(x, params)


def inv_std_normal(p):
    """Inverse of the standard normal CDF."""
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0) & (p < 1))):
        raise ValueError("probability must lie strictly inside (0, 1)")
    z = special.ndtri(p)
    return float(z) if z.ndim == 0 else z


def spi_series(point_rain, ref_len: int = 360, window: int = 12, months=None,
               clamp: float = CLAMP) -> SpiSeries:
    """SPI for a single point.

    The reference sample for month ``t`` is every `window`-month accumulation
    lying wholly inside the ``ref_len`` raw months that precede the
    accumulation window of ``t``. Its zero accumulations set ``q_zero`` and
    the positive ones are fitted by :func:`fit_gamma`. The first
    ``ref_len + window`` months of the record are spin-up, so an 840-month
    record yields 468 evaluated months.
    """
    rain = np.asarray(point_rain, dtype=float)
    if rain.ndim != 1:
        raise ValueError("spi_series expects a 1-D series")
    T = rain.size
    first = ref_len + window
    if T <= first:
        raise DataError(
            f"series of {T} months too short for a {ref_len}-month reference "
            f"and {window}-month accumulation"
        )
    sums = rolling_sum(rain, window)
    if months is None:
        months = np.arange(T)
    out = np.full(T, np.nan)
    for t in range(first, T):
        # reference raw months t-window-ref_len+1 .. t-window
        ref = sums[t - ref_len: t - window + 1]
        out[t] = _spi_one(sums[t], ref, clamp, t)
    return SpiSeries(months=np.asarray(months), values=out)


def _spi_one(x, ref, clamp, t):
    if np.isnan(x) or np.isnan(ref).any():
        return np.nan
    positive = ref[ref > 0]
    if positive.size < MIN_POSITIVE or np.ptp(positive) == 0:
        warnings.warn(f"month index {t}: degenerate reference window", DegenerateWindowWarning,
                      stacklevel=3)
        return np.nan
    q_zero = 1.0 - positive.size / ref.size
    try:
        params = fit_gamma(positive)
    except (DataError, NumericalError):
        warnings.warn(f"month index {t}: Gamma fit failed", DegenerateWindowWarning, stacklevel=3)
        return np.nan
    params = GammaParams(params.shape, params.scale, q_zero)
    h = float(mixed_cdf(x, params))
    return inv_std_normal(min(max(h, clamp), 1.0 - clamp))


def spi_field(rain: np.ndarray, ref_len: int = 360, window: int = 12) -> np.ndarray:
    """SPI for every column of a (time, points) rain matrix."""
    rain = np.asarray(rain, dtype=float)
    return np.column_stack(
        [spi_series(rain[:, j], ref_len, window).values for j in range(rain.shape[1])]
    )


def drought_count_series(spi, threshold: float = -1.0, months=None) -> DroughtSeries:
    """Count points at or below `threshold` each month.

    `spi` is a (time, points) array with NaN for unevaluated cells, or a list
    of :class:`SpiSeries` sharing one time axis. A month where every point is
    missing gets count 0 and is flagged missing.
    """
    if isinstance(spi, (list, tuple)) and spi and isinstance(spi[0], SpiSeries):
        axis = spi[0].months
        for s in spi[1:]:
            if not np.array_equal(s.months, axis):
                raise DataError("SPI series do not share a time axis")
        months = axis if months is None else months
        spi = np.column_stack([s.values for s in spi])
    spi = np.asarray(spi, dtype=float)
    if spi.ndim != 2 or spi.shape[1] == 0:
        raise DataError("empty point set")
    if months is None:
        months = np.arange(spi.shape[0])
    with np.errstate(invalid="ignore"):
        count = np.sum(spi <= threshold, axis=1)
    missing = np.isnan(spi).all(axis=1)
    n = spi.shape[1]
    return DroughtSeries(
        months=np.asarray(months),
        count=count.astype(np.int64),
        fraction=count / n,
        missing=missing,
        n_points=n,
    )
