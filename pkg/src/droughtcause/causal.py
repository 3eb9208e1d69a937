"""Lagged causal discovery: partial-correlation tests, PC1 condition selection,
momentary conditional independence (MCI) and Benjamini-Hochberg q-values.

Lagged variables are addressed as ``(variable_index, lag)`` with ``lag >= 1``
for the past; the target of a test is ``(j, 0)``.
"""
from __future__ import annotations

import warnings
from itertools import combinations
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .errors import DataError

DEFAULT_ALPHA_PC_GRID = (0.05, 0.1, 0.2, 0.3, 0.4, 0.5)


class CollinearityWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class TimeSeriesDataset:
    values: np.ndarray
    names: Sequence[str] = None
    tau_max: int = 12

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.size == 0:
            raise DataError("empty dataset")
        if not np.all(np.isfinite(v)):
            raise DataError("dataset holds missing or non-finite values")
        names = list(self.names) if self.names is not None else [f"x{i}" for i in range(v.shape[1])]
        if len(names) != v.shape[1]:
            raise DataError("one name per variable required")
        if self.tau_max < 1:
            raise ValueError("tau_max must be >= 1")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "names", names)

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def N(self) -> int:
        return self.values.shape[1]

    def with_tau_max(self, tau_max: int) -> "TimeSeriesDataset":
        return TimeSeriesDataset(self.values, self.names, tau_max)

    def standardized(self) -> "TimeSeriesDataset":
        sd = self.values.std(axis=0)
        if np.any(sd == 0):
            bad = [self.names[i] for i in np.flatnonzero(sd == 0)]
            raise DataError(f"constant variable(s): {bad}")
        z = (self.values - self.values.mean(axis=0)) / sd
        return TimeSeriesDataset(z, self.names, self.tau_max)

    def lagged(self, node, cut: int) -> np.ndarray:
        """Column of `node` aligned so that row r corresponds to time ``cut + r``."""
        var, lag = node
        return self.values[cut - lag: self.T - lag, var]


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    dof: int

    __test__ = False


@dataclass
class ParentSet:
    target: int
    parents: list
    statistic: dict = field(default_factory=dict)
    p_value: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.parents)

    def __iter__(self):
        return iter(self.parents)


@dataclass(frozen=True)
class Link:
    source: str
    lag: int
    target: str
    coefficient: float
    p_value: float
    q_value: float

    @property
    def is_auto(self) -> bool:
        return self.source == self.target


@dataclass
class CausalGraph:
    """Significant lagged links plus the full matrices of MCI results.

    ``val_matrix[i, j, tau]`` is the MCI partial correlation of
    ``x_i(t - tau)`` with ``x_j(t)``; index ``tau = 0`` is unused.
    """

    names: list
    links: list
    alpha: float
    alpha_pc: float | None
    tau_max: int
    val_matrix: np.ndarray
    p_matrix: np.ndarray
    q_matrix: np.ndarray
    parents: dict = field(default_factory=dict)

    def links_to(self, target: str, include_auto: bool = True) -> list:
        return [l for l in self.links
                if l.target == target and (include_auto or not l.is_auto)]

    def strongest_driver(self, target: str):
        """Strongest non-auto link into `target`, or None."""
        links = self.links_to(target, include_auto=False)
        return links[0] if links else None


def _residualize(design, targets):
    coef, _, rank, _ = np.linalg.lstsq(design, targets, rcond=None)
    return targets - design @ coef, rank


def _independent_columns(Z, tol=1e-10):
    """Indices of a maximal linearly independent subset of the columns of Z."""
    keep = []
    basis = np.empty((Z.shape[0], 0))
    for k in range(Z.shape[1]):
        col = Z[:, k]
        norm = np.linalg.norm(col)
        if norm == 0:
            continue
        if basis.shape[1]:
            col = col - basis @ (basis.T @ col)
        if np.linalg.norm(col) > tol * norm:
            keep.append(k)
            basis = np.column_stack([basis, col / np.linalg.norm(col)])
    return keep


def parcorr_test(x, y, Z=None) -> TestResult:
    """Partial correlation of x and y given Z, with a two-sided t-test.

    x and y are regressed on Z (plus an intercept) by least squares and the
    Pearson correlation of the residuals is returned together with a p-value
    on ``T - |Z| - 2`` degrees of freedom. Columns of Z that are linear
    combinations of others (or of the intercept) are dropped with a warning.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    T = x.size
    if y.size != T:
        raise DataError("x and y differ in length")
    if Z is None:
        Z = np.empty((T, 0))
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    if Z.shape[0] != T:
        raise DataError("conditions differ in length from x")
    if T <= Z.shape[1] + 3:
        raise DataError(f"sample of {T} too small for {Z.shape[1]} conditions")

    design = np.column_stack([np.ones(T), Z])
    resid, rank = _residualize(design, np.column_stack([x, y]))
    if rank < design.shape[1]:
        keep = _independent_columns(design)
        warnings.warn(f"dropped {design.shape[1] - len(keep)} collinear condition(s)",
                      CollinearityWarning, stacklevel=2)
        design = design[:, keep]
        resid, rank = _residualize(design, np.column_stack([x, y]))
    k = design.shape[1] - 1
    dof = T - k - 2
    rx, ry = resid[:, 0], resid[:, 1]
    denom = np.sqrt(np.dot(rx, rx) * np.dot(ry, ry))
    if denom == 0:
        return TestResult(0.0, 1.0, dof)
    r = float(np.clip(np.dot(rx, ry) / denom, -1.0, 1.0))
    if abs(r) >= 1.0:
        return TestResult(r, 0.0, dof)
    tstat = r * np.sqrt(dof / (1.0 - r * r))
    p = float(2.0 * stats.t.sf(abs(tstat), dof))
    return TestResult(r, min(max(p, 0.0), 1.0), dof)


def _test_nodes(data, X, Y, Z, ci_test, cut=None):
    nodes = [X, Y, *Z]
    if cut is None:
        cut = max(data.tau_max, max(lag for _, lag in nodes))
    n_eff = data.T - cut
    if n_eff < len(Z) + 4:
        raise DataError(
            f"effective sample {n_eff} too short for {len(Z)} conditions after lag alignment"
        )
    x = data.lagged(X, cut)
    y = data.lagged(Y, cut)
    z = np.column_stack([data.lagged(c, cut) for c in Z]) if Z else None
    return ci_test(x, y, z)


def pc1_parents(data: TimeSeriesDataset, target: int, alpha_pc: float,
                max_conds_dim: int | None = 3, max_combinations: int = 1,
                ci_test: Callable = parcorr_test) -> ParentSet:
    """Condition selection for one target by iterative candidate removal.

    All lagged variables ``(i, 1..tau_max)`` start as candidates. Pass ``p``
    tests every candidate against the target conditional on the ``p``
    strongest other candidates (by smallest absolute statistic seen so far);
    candidates with p-value above `alpha_pc` are removed after the pass. Passes
    continue with ``p + 1`` while enough candidates remain and ``p`` does not
    exceed `max_conds_dim`.

    With ``max_combinations > 1``, further condition subsets are drawn from
    the next strongest candidates, and a candidate is removed as soon as any
    subset renders it independent.
    """
    if not 0.0 <= alpha_pc <= 1.0:
        raise ValueError("alpha_pc must lie in [0, 1]")
    tau_max = data.tau_max
    Y = (target, 0)
    cands = [(i, lag) for i in range(data.N) for lag in range(1, tau_max + 1)]
    stat_min = {c: np.inf for c in cands}
    pval_max = {c: 0.0 for c in cands}
    p = 0
    while True:
        if max_conds_dim is not None and p > max_conds_dim:
            break
        if len(cands) - 1 < p:
            break
        removed = set()
        for c in cands:
            others = [o for o in cands if o != c]
            for comb in _condition_subsets(others, p, max_combinations):
                res = _test_nodes(data, c, Y, comb, ci_test, cut=tau_max)
                stat_min[c] = min(stat_min[c], abs(res.statistic))
                pval_max[c] = max(pval_max[c], res.p_value)
                if res.p_value > alpha_pc:
                    removed.add(c)
                    break
        cands = [c for c in cands if c not in removed]
        cands.sort(key=lambda c: -stat_min[c])
        p += 1
    return ParentSet(
        target=target,
        parents=cands,
        statistic={c: float(stat_min[c]) for c in cands},
        p_value={c: float(pval_max[c]) for c in cands},
    )


def _condition_subsets(others, p, max_combinations):
    if p == 0:
        yield []
        return
    for n, comb in enumerate(combinations(others, p)):
        if n >= max_combinations:
            return
        yield list(comb)


def _fit_rss(data, target, parents, cut):
    y = data.lagged((target, 0), cut)
    design = np.column_stack([np.ones(y.size)] + [data.lagged(c, cut) for c in parents])
    resid, _ = _residualize(design, y)
    return float(np.dot(resid, resid)), y.size


def aic_score(data: TimeSeriesDataset, parents: dict) -> float:
    """Summed AIC of least-squares models of each variable on its parents."""
    total = 0.0
    for j in range(data.N):
        pa = list(parents[j])
        rss, n = _fit_rss(data, j, pa, data.tau_max)
        rss = max(rss, np.finfo(float).tiny)
        total += n * np.log(rss / n) + 2 * (len(pa) + 1)
    return total


def _alpha_pc_search(data, grid, **pc_kwargs):
    grid = sorted(float(a) for a in grid)
    if not grid:
        raise ValueError("alpha_pc grid is empty")
    for a in grid:
        if not 0 < a <= 1:
            raise ValueError(f"alpha_pc level {a} outside (0, 1]")
    best = None
    scores = {}
    parents_at = {}
    for a in grid:
        parents = {j: pc1_parents(data, j, a, **pc_kwargs) for j in range(data.N)}
        score = aic_score(data, parents)
        scores[a] = score
        parents_at[a] = parents
        if best is None or score < scores[best]:
            best = a
    return best, scores, parents_at


def select_alpha_pc(data: TimeSeriesDataset, grid=DEFAULT_ALPHA_PC_GRID, **pc_kwargs) -> float:
    """Level from `grid` that minimizes the summed AIC; ties go to the smaller level."""
    return _alpha_pc_search(data, grid, **pc_kwargs)[0]


def bh_adjust(p_values, monotone: bool = False) -> np.ndarray:
    """Benjamini-Hochberg q-values, ``q = min(p * m / rank, 1)``.

    Ranks are ordinal in ascending p (ties keep input order). With
    `monotone`, the step-up cumulative minimum from the largest rank is
    applied as well.
    """
    p = np.asarray(p_values, dtype=float)
    shape = p.shape
    p = p.ravel()
    if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
        raise ValueError("p-values must lie in [0, 1]")
    m = p.size
    if m == 0:
        return p.reshape(shape)
    order = np.argsort(p, kind="stable")
    ranks = np.empty(m, dtype=np.int64)
    ranks[order] = np.arange(1, m + 1)
    q = np.minimum(p * m / ranks, 1.0)
    if monotone:
        qs = np.minimum.accumulate(q[order][::-1])[::-1]
        q[order] = qs
    return q.reshape(shape)


def mci_links(data: TimeSeriesDataset, parents: dict, alpha: float = 0.05,
              max_conds_px: int | None = None, fdr_scope: str = "all",
              fdr_monotone: bool = False, ci_test: Callable = parcorr_test,
              alpha_pc: float | None = None) -> CausalGraph:
    """MCI test of every lagged pair ``x_i(t - tau) -> x_j(t)``, tau in 1..tau_max.

    The conditions are the parents of ``x_j(t)`` without ``x_i(t - tau)``
    together with the parents of ``x_i`` shifted back by tau (the strongest
    `max_conds_px` of them when given). Links with p-value at most `alpha`
    are reported, strongest first.

    q-values come from :func:`bh_adjust` over all tests
    (``fdr_scope="all"``) or over the links that pass `alpha` only
    (``fdr_scope="significant"``).
    """
    N, tau_max = data.N, data.tau_max
    pa = {j: list(parents[j]) for j in range(N)}
    val = np.zeros((N, N, tau_max + 1))
    pval = np.ones((N, N, tau_max + 1))
    for i in range(N):
        px = pa[i] if max_conds_px is None else pa[i][:max_conds_px]
        for tau in range(1, tau_max + 1):
            X = (i, tau)
            shifted = [(k, lag + tau) for k, lag in px]
            for j in range(N):
                Z = [c for c in pa[j] if c != X]
                Z += [c for c in shifted if c not in Z and c != X]
                res = _test_nodes(data, X, (j, 0), Z, ci_test)
                val[i, j, tau] = res.statistic
                pval[i, j, tau] = res.p_value

    qval = np.ones_like(pval)
    tested = np.zeros_like(pval, dtype=bool)
    tested[:, :, 1:] = True
    if fdr_scope == "all":
        qval[tested] = bh_adjust(pval[tested], fdr_monotone)
    elif fdr_scope == "significant":
        sel = tested & (pval <= alpha)
        if sel.any():
            qval[sel] = bh_adjust(pval[sel], fdr_monotone)
    else:
        raise ValueError(f"unknown fdr_scope {fdr_scope!r}")

    links = []
    for i in range(N):
        for tau in range(1, tau_max + 1):
            for j in range(N):
                if pval[i, j, tau] <= alpha:
                    links.append(Link(data.names[i], tau, data.names[j],
                                      float(val[i, j, tau]), float(pval[i, j, tau]),
                                      float(qval[i, j, tau])))
    links.sort(key=lambda l: -abs(l.coefficient))
    return CausalGraph(
        names=list(data.names), links=links, alpha=alpha, alpha_pc=alpha_pc,
        tau_max=tau_max, val_matrix=val, p_matrix=pval, q_matrix=qval,
        parents={j: list(pa[j]) for j in range(N)},
    )


@dataclass
class PcmciConfig:
    tau_max: int = 12
    alpha: float = 0.05
    alpha_pc: float | None = None
    alpha_pc_grid: tuple = DEFAULT_ALPHA_PC_GRID
    max_conds_dim: int | None = 3
    max_combinations: int = 1
    max_conds_px: int | None = None
    fdr_scope: str = "all"
    fdr_monotone: bool = False
    ci_test: Callable = parcorr_test


def pcmci(data: TimeSeriesDataset, config: PcmciConfig | None = None, **overrides) -> CausalGraph:
    """Standardize, select conditions (choosing alpha_pc by AIC unless fixed), run MCI."""
    cfg = config or PcmciConfig()
    if overrides:
        cfg = PcmciConfig(**{**cfg.__dict__, **overrides})
    if data is None or data.T == 0 or data.N == 0:
        raise DataError("empty dataset")
    if cfg.tau_max < 1:
        raise ValueError("tau_max must be >= 1")
    z = data.with_tau_max(cfg.tau_max).standardized()
    pc_kwargs = dict(max_conds_dim=cfg.max_conds_dim, max_combinations=cfg.max_combinations,
                     ci_test=cfg.ci_test)
    if cfg.alpha_pc is None:
        alpha_pc, _, parents_at = _alpha_pc_search(z, cfg.alpha_pc_grid, **pc_kwargs)
        parents = parents_at[alpha_pc]
    else:
        alpha_pc = float(cfg.alpha_pc)
        parents = {j: pc1_parents(z, j, alpha_pc, **pc_kwargs) for j in range(z.N)}
    return mci_links(z, parents, alpha=cfg.alpha, max_conds_px=cfg.max_conds_px,
                     fdr_scope=cfg.fdr_scope, fdr_monotone=cfg.fdr_monotone,
                     ci_test=cfg.ci_test, alpha_pc=alpha_pc)
