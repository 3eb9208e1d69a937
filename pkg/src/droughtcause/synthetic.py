"""Seeded generators with known ground truth for every pipeline stage.

All randomness goes through :func:`make_rng`, a Philox counter-based
generator, so a (parameters, seed) pair reproduces the same numbers on any
platform.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .causal import TimeSeriesDataset
from .errors import DataError
from .grid import GriddedField, month_ordinal

RNG_NAME = "numpy.random.Philox"
VAR_BURN_IN = 500


def make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def _rng(seed_or_rng):
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return make_rng(seed_or_rng)


def gen_gamma_rainfall(shape: float, scale: float, p_zero: float, T: int, seed) -> np.ndarray:
    """Monthly rain: zero with probability `p_zero`, otherwise Gamma(shape, scale)."""
    if not (shape > 0 and scale > 0):
        raise ValueError("shape and scale must be positive")
    if not 0 <= p_zero < 1:
        raise ValueError("p_zero must lie in [0, 1)")
    if T < 1:
        raise ValueError("T must be positive")
    rng = _rng(seed)
    wet = rng.random(T) >= p_zero
    rain = rng.gamma(shape, scale, size=T)
    return np.where(wet, rain, 0.0)


def regular_grid(lat_range, lon_range, step: float):
    """Points of a regular lat/lon grid, inclusive of both ends."""
    lats = np.arange(lat_range[0], lat_range[1] + step / 2, step)
    lons = np.arange(lon_range[0], lon_range[1] + step / 2, step)
    glat, glon = np.meshgrid(lats, lons, indexing="ij")
    return glat.ravel(), glon.ravel()


def blob_patterns(lats, lons, centers, radius: float) -> np.ndarray:
    """Unit-norm, non-negative, disjoint patterns around the given centers.

    Each point belongs to at most one blob (its nearest center within
    `radius` degrees), so the patterns are exactly orthogonal.
    """
    lats = np.asarray(lats, dtype=float)
    lons = np.asarray(lons, dtype=float)
    d = np.stack([np.hypot(lats - c[0], lons - c[1]) for c in centers])
    nearest = np.argmin(d, axis=0)
    patterns = np.zeros((len(centers), lats.size))
    for k in range(len(centers)):
        inside = (nearest == k) & (d[k] <= radius)
        if not inside.any():
            raise DataError(f"blob {k} contains no grid points")
        patterns[k, inside] = np.cos(0.5 * np.pi * d[k, inside] / radius) + 0.1
        patterns[k] /= np.linalg.norm(patterns[k])
    return patterns


def random_orthonormal_patterns(n: int, k: int, seed) -> np.ndarray:
    q, _ = np.linalg.qr(_rng(seed).standard_normal((n, k)))
    return q.T


def ar1_series(T: int, phi, sd, seed, burn_in: int = 200) -> np.ndarray:
    """Independent AR(1) columns with stationary standard deviation `sd`."""
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    sd = np.atleast_1d(np.asarray(sd, dtype=float))
    k = max(phi.size, sd.size)
    phi = np.broadcast_to(phi, (k,))
    sd = np.broadcast_to(sd, (k,))
    if np.any(np.abs(phi) >= 1):
        raise ValueError("AR(1) coefficient must lie inside (-1, 1)")
    rng = _rng(seed)
    eps = rng.standard_normal((T + burn_in, k)) * sd * np.sqrt(1 - phi ** 2)
    x = np.zeros((T + burn_in, k))
    x[0] = rng.standard_normal(k) * sd
    for t in range(1, T + burn_in):
        x[t] = phi * x[t - 1] + eps[t]
    return x[burn_in:]


def gen_spatial_modes(lats, lons, patterns, amplitudes, noise_sd: float, seed,
                      start=(1946, 1)) -> GriddedField:
    """Field = sum over k of amplitude_k(t) * pattern_k(s) + iid Gaussian noise.

    Parameters
    ----------
    patterns : array, shape (k, n_points)
        Mutually orthogonal spatial patterns.
    amplitudes : array, shape (n_times, k)
        Mode time series.
    """
    lats = np.asarray(lats, dtype=float)
    patterns = np.atleast_2d(np.asarray(patterns, dtype=float))
    amplitudes = np.asarray(amplitudes, dtype=float)
    if amplitudes.ndim == 1:
        amplitudes = amplitudes[:, None]
    k = patterns.shape[0]
    if patterns.size and patterns.shape[1] != lats.size:
        raise DataError(f"patterns have {patterns.shape[1]} points, grid has {lats.size}")
    if amplitudes.shape[1] != k:
        raise DataError("amplitudes and patterns disagree on the number of modes")
    if k:
        gram = patterns @ patterns.T
        off = gram - np.diag(np.diag(gram))
        if np.max(np.abs(off)) > 1e-8 * max(1.0, np.max(np.abs(gram))):
            raise DataError("patterns are not orthogonal")
    T = amplitudes.shape[0]
    rng = _rng(seed)
    values = amplitudes @ patterns if k else np.zeros((T, lats.size))
    values = values + noise_sd * rng.standard_normal((T, lats.size))
    first = month_ordinal(*start)
    return GriddedField(np.arange(first, first + T), lats, lons, values)


@dataclass
class VarSpec:
    """Linear vector autoregression with explicit lagged links.

    `links` holds ``(source, lag, target, coefficient)`` tuples with
    ``lag >= 1``.
    """

    n_vars: int
    links: list
    T: int
    seed: int = 0
    noise_sd: object = 1.0
    names: list = field(default=None)

    @property
    def max_lag(self) -> int:
        return max((lag for _, lag, _, _ in self.links), default=1)

    def coefficient_matrices(self) -> np.ndarray:
        """Array ``C[lag-1, target, source]``."""
        C = np.zeros((self.max_lag, self.n_vars, self.n_vars))
        for src, lag, tgt, coef in self.links:
            if lag < 1:
                raise ValueError("lags must be >= 1")
            C[lag - 1, tgt, src] += coef
        return C

    def spectral_radius(self) -> float:
        C = self.coefficient_matrices()
        p, n = C.shape[0], self.n_vars
        companion = np.zeros((n * p, n * p))
        companion[:n, :] = np.hstack(list(C))
        if p > 1:
            companion[n:, :-n] = np.eye(n * (p - 1))
        return float(np.max(np.abs(np.linalg.eigvals(companion))))


def gen_linear_var(spec: VarSpec) -> TimeSeriesDataset:
    """Simulate `spec`; the first 500 steps are discarded as burn-in."""
    rho = spec.spectral_radius()
    if rho >= 1:
        raise DataError(f"non-stationary VAR (spectral radius {rho:.4f})")
    n = spec.n_vars
    C = spec.coefficient_matrices()
    p = C.shape[0]
    sd = np.broadcast_to(np.asarray(spec.noise_sd, dtype=float), (n,))
    total = spec.T + VAR_BURN_IN
    rng = make_rng(spec.seed)
    eps = rng.standard_normal((total, n)) * sd
    x = np.zeros((total + p, n))
    for t in range(p, total + p):
        acc = eps[t - p].copy()
        for lag in range(1, p + 1):
            acc += C[lag - 1] @ x[t - lag]
        x[t] = acc
    names = spec.names or [f"x{i}" for i in range(n)]
    return TimeSeriesDataset(x[p + VAR_BURN_IN:], names)


def gen_driven_series(T: int, coupling: float, lag: int = 12, phi: float = 0.5,
                      driver_phi: float = 0.6, noise_sd: float = 1.0, seed=0,
                      level: float = 0.0):
    """AR(1) target driven by an exogenous AR(1) driver at a fixed lag.

    ``y[t] = level + phi * (y[t-1] - level) + coupling * driver[t-lag] + noise``.
    Returns ``(y, driver)``.
    """
    rng = make_rng(seed)
    burn = 200
    driver = ar1_series(T + burn + lag, driver_phi, 1.0, rng, burn_in=0)[:, 0]
    eps = rng.standard_normal(T + burn + lag) * noise_sd
    y = np.zeros(T + burn + lag)
    for t in range(lag, y.size):
        y[t] = phi * y[t - 1] + coupling * driver[t - lag] + eps[t]
    return y[burn + lag:] + level, driver[burn + lag:]


@dataclass
class SyntheticBundle:
    """Rain and SST fields with a planted lag-12 SST-to-drought coupling."""

    rain: GriddedField
    sst: GriddedField
    sst_patterns: np.ndarray
    sst_amplitudes: np.ndarray
    driver_mode: int
    coupling: float
    lag: int

    def truth(self) -> dict:
        return {
            "driver_mode": int(self.driver_mode),
            "coupling": float(self.coupling),
            "lag": int(self.lag),
            "n_sst_modes": int(self.sst_patterns.shape[0]),
            "rng": RNG_NAME,
        }


def synthetic_bundle(seed=0, n_months: int = 840, n_rain_points: int = 24,
                     coupling: float = -0.35, lag: int = 12, driver_mode: int = 1,
                     start=(1946, 1)) -> SyntheticBundle:
    """End-to-end benchmark inputs.

    The SST field carries four localized modes with decreasing variance.
    Rain at every point of a small Horn-of-Africa grid is Gamma distributed
    with a log-scale shifted by ``-coupling * amplitude[t - lag]`` of mode
    `driver_mode` (zero-based). `coupling` is thus the sign and strength of
    the effect on drought: when negative, a low mode amplitude brings drier
    months, and more points in drought, `lag` months later.
    """
    rng = make_rng(seed)
    slat, slon = regular_grid((-20.0, 20.0), (40.0, 280.0), 8.0)
    centers = [(0.0, 220.0), (0.0, 80.0), (12.0, 150.0), (-12.0, 260.0)]
    patterns = blob_patterns(slat, slon, centers, radius=20.0)
    sd = np.array([3.0, 2.5, 2.0, 1.5])
    amps = ar1_series(n_months + lag, 0.6, sd, rng)
    sst = gen_spatial_modes(slat, slon, patterns, amps[lag:], 0.5, rng, start=start)

    driver = amps[:, driver_mode] / sd[driver_mode]
    # driver[t] in `lagged` is the mode amplitude `lag` months before month t
    lagged = driver[:n_months]
    rlat, rlon = regular_grid((4.0, 13.5), (34.0, 46.0), 2.0)
    idx = rng.choice(rlat.size, size=min(n_rain_points, rlat.size), replace=False)
    idx.sort()
    rlat, rlon = rlat[idx], rlon[idx]
    P = rlat.size
    scale = 50.0 * np.exp(-coupling * lagged)[:, None]
    wet = rng.random((n_months, P)) >= 0.1
    rain = np.where(wet, rng.gamma(2.0, 1.0, size=(n_months, P)) * scale, 0.0)
    first = month_ordinal(*start)
    rain_field = GriddedField(np.arange(first, first + n_months), rlat, rlon, rain)
    return SyntheticBundle(rain_field, sst, patterns, amps[lag:], driver_mode, coupling, lag)
