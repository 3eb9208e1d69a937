"""Rolling-window check of a driver's predictive value for the drought series.

A one-step regressor maps the last ``n_lags`` drought values (optionally plus
the driver ``n_lags - 1`` months back) to the next value. Forecasts over the
test span are recurrent: each prediction is fed back into the lag window,
while driver values stay true observations, available thanks to the lag.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DataError


@dataclass(frozen=True, eq=False)
class SupervisedSet:
    features: np.ndarray
    labels: np.ndarray
    index: np.ndarray
    n_lags: int
    n_driver: int = 0


class RidgeRegressor:
    """Linear least squares with an L2 penalty on the slopes only.

    Follows the ``fit(X, y)`` / ``predict(X)`` convention, so scikit-learn
    regressors can stand in wherever this one is used.
    """

    def __init__(self, alpha: float = 1.0):
        if alpha < 0:
            raise ValueError("ridge penalty must be non-negative")
        self.alpha = alpha

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        xm = X.mean(axis=0)
        ym = y.mean()
        Xc = X - xm
        gram = Xc.T @ Xc + self.alpha * np.eye(X.shape[1])
        rhs = Xc.T @ (y - ym)
        if self.alpha > 0:
            self.coef_ = np.linalg.solve(gram, rhs)
        else:
            self.coef_ = np.linalg.lstsq(Xc, y - ym, rcond=None)[0]
        self.intercept_ = float(ym - xm @ self.coef_)
        return self

    def predict(self, X):
        return np.asarray(X, dtype=float) @ self.coef_ + self.intercept_


@dataclass
class ForecastReport:
    window_start: np.ndarray
    rmse_base: np.ndarray
    rmse_with_driver: np.ndarray
    config: dict = field(default_factory=dict)

    @property
    def window_count(self) -> int:
        return int(self.window_start.size)

    @property
    def mean_rmse_base(self) -> float:
        return float(np.mean(self.rmse_base))

    @property
    def mean_rmse_with_driver(self) -> float:
        return float(np.mean(self.rmse_with_driver))

    @property
    def per_window(self):
        return list(zip(self.window_start.tolist(), self.rmse_base.tolist(),
                        self.rmse_with_driver.tolist()))


def _driver_matrix(driver, length):
    if driver is None:
        return None
    d = np.asarray(driver, dtype=float)
    if d.ndim == 1:
        d = d[:, None]
    if d.shape[0] != length:
        raise DataError(f"driver of length {d.shape[0]} misaligned with series of length {length}")
    return d


def make_supervised(drought, driver=None, n_lags: int = 12) -> SupervisedSet:
    """Rows ``(d[t-n_lags+1..t], driver[t-n_lags+1]) -> d[t+1]`` for every eligible t."""
    d = np.asarray(drought, dtype=float).ravel()
    L = d.size
    if L <= n_lags + 1:
        raise DataError(f"series of length {L} too short for {n_lags} lags")
    drv = _driver_matrix(driver, L)
    t = np.arange(n_lags - 1, L - 1)
    lags = np.stack([d[t - n_lags + 1 + k] for k in range(n_lags)], axis=1)
    if drv is not None:
        lags = np.hstack([lags, drv[t - n_lags + 1]])
    return SupervisedSet(lags, d[t + 1], t + 1, n_lags, 0 if drv is None else drv.shape[1])


def fit_baseline(train: SupervisedSet, ridge: float = 1.0) -> RidgeRegressor:
    if train.labels.size < 30:
        raise DataError(f"need at least 30 training rows, got {train.labels.size}")
    return RidgeRegressor(ridge).fit(train.features, train.labels)


def recurrent_forecast(model, history, driver_history=None, horizon: int = 12) -> np.ndarray:
    """Forecast `horizon` steps by feeding predictions back as lags.

    `driver_history` holds the true driver values for the months
    ``n_lags - 1`` steps behind each forecast target, i.e. the ``n_lags``
    months ending at the forecast origin when the lag equals ``n_lags``.
    """
    window = list(np.asarray(history, dtype=float).ravel())
    n_lags = len(window)
    drv = None
    if driver_history is not None:
        drv = np.asarray(driver_history, dtype=float)
        if drv.ndim == 1:
            drv = drv[:, None]
        if horizon > drv.shape[0]:
            raise DataError(f"horizon {horizon} exceeds {drv.shape[0]} available driver values")
    preds = np.empty(horizon)
    for h in range(horizon):
        row = np.asarray(window[-n_lags:])
        if drv is not None:
            row = np.concatenate([row, drv[h]])
        preds[h] = float(np.ravel(model.predict(row[None, :]))[0])
        window.append(preds[h])
    return preds


def rmse(y, y_hat) -> float:
    y = np.asarray(y, dtype=float).ravel()
    y_hat = np.asarray(y_hat, dtype=float).ravel()
    if y.size == 0 or y.size != y_hat.size:
        raise ValueError("rmse needs two non-empty vectors of equal length")
    return float(np.sqrt(np.mean((y - y_hat) ** 2)))


def window_count(length: int, n_lags: int = 12, train: int = 360, test: int = 12,
                 step: int = 1) -> int:
    span = n_lags + train + test
    if length < span:
        return 0
    return (length - span) // step + 1


def _evaluate_window(d, drv, s, n_lags, train, test, make_model):
    fit_end = s + n_lags + train          # first test label index
    seg = make_supervised(d[s:fit_end], None if drv is None else drv[s:fit_end], n_lags)
    model = make_model()
    model.fit(seg.features, seg.labels)
    history = d[fit_end - n_lags: fit_end]
    drv_hist = None if drv is None else drv[fit_end - n_lags: fit_end - n_lags + test]
    preds = recurrent_forecast(model, history, drv_hist, horizon=test)
    return rmse(d[fit_end: fit_end + test], preds)


def rolling_eval(drought, driver=None, train: int = 360, test: int = 12, step: int = 1,
                 n_lags: int = 12, ridge: float = 1.0,
                 regressor: Callable | None = None) -> ForecastReport:
    """Rolling-window evaluation with and without the driver feature.

    Window ``w`` starts at ``s = w * step``: the first `n_lags` values seed
    the features, the next `train` values are training labels and the
    following `test` values are forecast recurrently. Both variants use the
    same windows. Without a driver, ``rmse_with_driver`` is NaN.

    `regressor` is a zero-argument factory of objects with ``fit`` and
    ``predict``; it defaults to :class:`RidgeRegressor` with penalty `ridge`.
    """
    d = np.asarray(drought, dtype=float).ravel()
    drv = _driver_matrix(driver, d.size)
    if test > n_lags and drv is not None:
        raise DataError("test span longer than the driver lag cannot use true driver values")
    if step < 1:
        raise ValueError("step must be >= 1")
    n = window_count(d.size, n_lags, train, test, step)
    if n == 0:
        raise DataError(
            f"series of length {d.size} holds no complete window of "
            f"{n_lags} + {train} + {test} months"
        )
    make_model = regressor or (lambda: RidgeRegressor(ridge))
    starts = np.arange(n) * step
    base = np.array([_evaluate_window(d, None, s, n_lags, train, test, make_model)
                     for s in starts])
    if drv is None:
        with_drv = np.full(n, np.nan)
    else:
        with_drv = np.array([_evaluate_window(d, drv, s, n_lags, train, test, make_model)
                             for s in starts])
    cfg = dict(train=train, test=test, step=step, n_lags=n_lags, ridge=ridge)
    return ForecastReport(starts, base, with_drv, cfg)
