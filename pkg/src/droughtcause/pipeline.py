"""File-based orchestration of the five stages and plot-data export.

Stages communicate only through CSV artifacts in the output directory, so
each can be rerun on its own. Files are first written with a ``.partial``
suffix and renamed once the stage finishes; a failed stage leaves its
partial files behind for inspection.
"""
from __future__ import annotations

import csv
import hashlib
import json
import platform
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import scipy
from threadpoolctl import threadpool_limits

from . import __version__
from .causal import PcmciConfig, TimeSeriesDataset, pcmci
from .config import RunConfig
from .errors import DataError, DroughtCauseError
from .forecast import rolling_eval
from .grid import (
    GriddedField, flatten_to_matrix, format_float, format_month, latitude_weight,
    load_gridded_csv, parse_month, phase_average_anomaly, region_mask, write_gridded_csv,
)
from .modes import compute_modes
from .spi import drought_count_series, spi_field
from .synthetic import RNG_NAME

DROUGHT_NAME = "drought"


class StageError(DroughtCauseError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


class _StageWriter:
    def __init__(self, out: Path):
        self.out = out
        self.pending: list[Path] = []

    def path(self, name: str) -> Path:
        final = self.out / name
        partial = final.with_name(final.name + ".partial")
        self.pending.append(final)
        return partial

    def commit(self):
        for final in self.pending:
            final.with_name(final.name + ".partial").replace(final)
        return [p.name for p in self.pending]


@contextmanager
def _thread_limit(n):
    with threadpool_limits(limits=n):
        yield


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _read_csv(path: Path):
    if not path.exists():
        raise DataError(f"missing artifact {path}")
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"empty artifact {path}")
    return rows[0], rows[1:]


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _input_field(cfg: RunConfig, out: Path, name: str) -> GriddedField:
    staged = out / f"{name}.csv"
    if staged.exists():
        return load_gridded_csv(staged)
    src = cfg.resolve(getattr(cfg.paths, name))
    if src is None:
        raise DataError(f"no {name} input: set paths.{name} or run the ingest stage")
    field = load_gridded_csv(src)
    bbox = getattr(cfg.ingest, f"{name}_bbox")
    return region_mask(field, bbox) if bbox is not None else field


# -- stages -----------------------------------------------------------------

def stage_ingest(cfg: RunConfig, out: Path, w: _StageWriter) -> dict:
    info = {}
    for name in ("rain", "sst"):
        src = cfg.resolve(getattr(cfg.paths, name))
        if src is None:
            continue
        field = load_gridded_csv(src)
        bbox = getattr(cfg.ingest, f"{name}_bbox")
        if bbox is not None:
            field = region_mask(field, bbox)
        write_gridded_csv(field, w.path(f"{name}.csv"))
        info[name] = {"times": field.n_times, "points": field.n_points,
                      "missing_cells": int(field.mask.sum())}
    if not info:
        raise DataError("ingest: neither paths.rain nor paths.sst is set")
    return info


def stage_spi(cfg: RunConfig, out: Path, w: _StageWriter) -> dict:
    rain = _input_field(cfg, out, "rain")
    if rain.mask.any():
        if cfg.ingest.missing == "reject":
            raise DataError("rain field holds missing values")
        keep = ~rain.mask.any(axis=0)
        rain = GriddedField(rain.months, rain.lats[keep], rain.lons[keep], rain.values[:, keep])
    spi = spi_field(rain.values, cfg.spi.ref_len, cfg.spi.window)
    write_gridded_csv(rain.with_values(spi), w.path("spi.csv"))
    ds = drought_count_series(spi, cfg.spi.threshold, rain.months)
    rows = [(format_month(m), int(c), format_float(f))
            for m, c, f, miss in zip(ds.months, ds.count, ds.fraction, ds.missing) if not miss]
    _write_csv(w.path("drought.csv"), ["time", "count", "fraction"], rows)
    return {"points": rain.n_points, "evaluated_months": len(rows)}


def stage_modes(cfg: RunConfig, out: Path, w: _StageWriter) -> dict:
    m = cfg.modes
    field = _input_field(cfg, out, "sst")
    if m.phase_average:
        field = phase_average_anomaly(field)
    if m.latitude_weight:
        field = latitude_weight(field)
    A = flatten_to_matrix(field, cfg.ingest.missing)
    ms = compute_modes(A.matrix, normalize=m.normalize, rotate=m.rotate,
                       scaled_rotation=m.scaled_rotation, n_modes=m.n_modes,
                       varimax_tol=m.varimax_tol, varimax_max_sweeps=m.varimax_max_sweeps)
    k = ms.pcs.shape[1]
    if k == 0:
        raise DataError("no non-random modes found")
    _write_csv(w.path("eigenvalues.csv"), ["rank", "lambda2", "selected"],
               [(r + 1, format_float(v), int(r < ms.k_selected))
                for r, v in enumerate(ms.eigenvalues)])
    _write_csv(w.path("eofs.csv"), ["point", "lat", "lon", "mode", "loading"],
               [(p, format_float(A.lats[p]), format_float(A.lons[p]), mode + 1,
                 format_float(ms.eofs_rotated[p, mode]))
                for mode in range(k) for p in range(A.shape[1])])
    times = [format_month(t) for t in A.months]
    _write_csv(w.path("pcs.csv"), ["time", "mode", "value"],
               [(times[i], mode + 1, format_float(ms.pcs[i, mode]))
                for mode in range(k) for i in range(len(times))])
    summary = {
        "n_points": int(A.shape[1]), "n_times": int(A.shape[0]),
        "lambda_minus": ms.bounds[0], "lambda_plus": ms.bounds[1],
        "k_selected": ms.k_selected, "k_used": k, "normalized": ms.normalized,
        "varimax_sweeps": max(len(ms.criterion_history) - 1, 0),
        "dropped_points": list(A.dropped_points),
    }
    _write_json(w.path("modes_summary.json"), summary)
    return summary


def read_drought(out: Path):
    _, rows = _read_csv(out / "drought.csv")
    months = np.array([parse_month(r[0]) for r in rows])
    count = np.array([float(r[1]) for r in rows])
    fraction = np.array([float(r[2]) for r in rows])
    return months, count, fraction


def read_pcs(out: Path):
    _, rows = _read_csv(out / "pcs.csv")
    months = sorted({parse_month(r[0]) for r in rows})
    modes = sorted({int(r[1]) for r in rows})
    mi = {m: i for i, m in enumerate(months)}
    pcs = np.full((len(months), len(modes)), np.nan)
    for r in rows:
        pcs[mi[parse_month(r[0])], int(r[1]) - 1] = float(r[2])
    return np.array(months), pcs


def _aligned_panel(cfg, out):
    dm, count, fraction = read_drought(out)
    pm, pcs = read_pcs(out)
    common = np.intersect1d(dm, pm)
    if common.size == 0:
        raise DataError("drought and PC series share no months")
    d = count if cfg.forecast.units == "count" else fraction
    d = d[np.isin(dm, common)]
    pcs = pcs[np.isin(pm, common)]
    names = [DROUGHT_NAME] + [f"pc{k + 1}" for k in range(pcs.shape[1])]
    return common, names, np.column_stack([d, pcs])


def stage_pcmci(cfg: RunConfig, out: Path, w: _StageWriter) -> dict:
    p = cfg.pcmci
    months, names, values = _aligned_panel(cfg, out)
    data = TimeSeriesDataset(values, names, p.tau_max)
    pc = PcmciConfig(tau_max=p.tau_max, alpha=p.alpha, alpha_pc=p.alpha_pc,
                     alpha_pc_grid=tuple(p.alpha_pc_grid), max_conds_dim=p.max_conds_dim,
                     max_combinations=p.max_combinations, max_conds_px=p.max_conds_px,
                     fdr_scope=p.fdr_scope, fdr_monotone=p.fdr_monotone)
    graph = pcmci(data, pc)
    _write_csv(w.path("causal_graph.csv"),
               ["source", "lag", "target", "coefficient", "p_value", "q_value", "is_auto"],
               [(l.source, l.lag, l.target, format_float(l.coefficient), format_float(l.p_value),
                 format_float(l.q_value), int(l.is_auto)) for l in graph.links])
    fingerprint = hashlib.sha256(np.ascontiguousarray(values).tobytes()).hexdigest()
    manifest = {
        "config": {k: v for k, v in pc.__dict__.items() if k != "ci_test"},
        "ci_test": "parcorr",
        "alpha_pc_chosen": graph.alpha_pc,
        "seed": cfg.run.seed,
        "data_fingerprint": fingerprint,
        "variables": names,
        "T": int(values.shape[0]),
        "first_month": format_month(months[0]),
        "n_links": len(graph.links),
    }
    _write_json(w.path("causal_manifest.json"), manifest)
    top = graph.strongest_driver(DROUGHT_NAME)
    return {"alpha_pc": graph.alpha_pc, "n_links": len(graph.links),
            "strongest_driver": None if top is None else [top.source, top.lag, top.coefficient]}


def _choose_driver(cfg, out, names):
    choice = cfg.forecast.driver
    if choice == "none":
        return None, None
    if choice != "auto":
        if choice not in names:
            raise DataError(f"forecast.driver {choice!r} is not a variable ({names})")
        return choice, None
    _, rows = _read_csv(out / "causal_graph.csv")
    for source, lag, target, coef, *_ in rows:
        if target == DROUGHT_NAME and source != DROUGHT_NAME:
            return source, int(lag)
    return None, None


def stage_forecast(cfg: RunConfig, out: Path, w: _StageWriter) -> dict:
    f = cfg.forecast
    months, names, values = _aligned_panel(cfg, out)
    driver_name, driver_lag = _choose_driver(cfg, out, names)
    driver = None if driver_name is None else values[:, names.index(driver_name)]
    report = rolling_eval(values[:, 0], driver, train=f.train, test=f.test, step=f.step,
                          n_lags=f.n_lags, ridge=f.ridge)
    _write_csv(w.path("forecast_report.csv"), ["window_start", "rmse_base", "rmse_with_driver"],
               [(format_month(months[s]), format_float(b), format_float(d))
                for s, b, d in zip(report.window_start, report.rmse_base, report.rmse_with_driver)])
    summary = {
        "config": report.config, "units": f.units, "driver": driver_name,
        "driver_lag_found": driver_lag, "window_count": report.window_count,
        "mean_rmse_base": report.mean_rmse_base,
        "mean_rmse_with_driver": None if driver is None else report.mean_rmse_with_driver,
        "seed": cfg.run.seed,
    }
    _write_json(w.path("forecast_summary.json"), summary)
    return summary


STAGE_FUNCS = {
    "ingest": stage_ingest,
    "spi": stage_spi,
    "modes": stage_modes,
    "pcmci": stage_pcmci,
    "forecast": stage_forecast,
}


def run_pipeline(cfg: RunConfig, out, stages=None) -> Path:
    """Run the enabled stages in order and write ``manifest.json``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    order = [s for s in STAGE_FUNCS if s in (stages or cfg.run.stages)]
    timings, info, artifacts = {}, {}, {}
    with _thread_limit(cfg.run.threads):
        for stage in order:
            w = _StageWriter(out)
            t0 = time.perf_counter()
            try:
                info[stage] = STAGE_FUNCS[stage](cfg, out, w)
            except Exception as exc:
                raise StageError(stage, exc) from exc
            artifacts[stage] = w.commit()
            timings[stage] = time.perf_counter() - t0
    manifest = {
        "package": "droughtcause", "version": __version__,
        "versions": {"python": platform.python_version(), "numpy": np.__version__,
                     "scipy": scipy.__version__},
        "config": cfg.as_dict(),
        "config_hash": cfg.config_hash(),
        "defaults_applied": cfg.defaults_applied(),
        "seed": cfg.run.seed, "rng": RNG_NAME, "threads": cfg.run.threads,
        "stages": order, "artifacts": artifacts, "stage_info": info,
        "timings_seconds": timings,
        "artifact_sha256": {
            name: hashlib.sha256((out / name).read_bytes()).hexdigest()
            for names in artifacts.values() for name in names
        },
    }
    _write_json(out / "manifest.json", manifest)
    return out


def export_plot_data(directory) -> list:
    """Write long-format CSVs for external plotting into ``<directory>/plots``."""
    directory = Path(directory)
    plots = directory / "plots"
    written = []
    have = {n: (directory / n).exists() for n in ("drought.csv", "eofs.csv", "eigenvalues.csv")}
    if not any(have.values()):
        raise DataError(f"no plottable artifacts in {directory}")
    plots.mkdir(exist_ok=True)
    if have["drought.csv"]:
        _, rows = _read_csv(directory / "drought.csv")
        p = plots / "fig1_drought_fraction.csv"
        _write_csv(p, ["time", "fraction"], [(r[0], r[2]) for r in rows])
        written.append(p)
    if have["eofs.csv"]:
        _, rows = _read_csv(directory / "eofs.csv")
        by_mode: dict[int, list] = {}
        for point, lat, lon, mode, loading in rows:
            by_mode.setdefault(int(mode), []).append((lat, lon, loading))
        for mode, mrows in sorted(by_mode.items()):
            p = plots / f"fig_eof_{mode}.csv"
            _write_csv(p, ["lat", "lon", "loading"], mrows)
            written.append(p)
    if have["eigenvalues.csv"]:
        _, rows = _read_csv(directory / "eigenvalues.csv")
        lam = np.array([float(r[1]) for r in rows])
        summary_path = directory / "modes_summary.json"
        if summary_path.exists():
            s = json.loads(summary_path.read_text())
            lo, hi, normalized = s["lambda_minus"], s["lambda_plus"], s["normalized"]
        else:
            raise DataError("modes_summary.json missing; cannot place the eigenvalue bounds")
        mean = lam.mean() if normalized and lam.mean() > 0 else 1.0
        p = plots / "fig_mp.csv"
        _write_csv(p, ["rank", "eigenvalue", "normalized_eigenvalue", "lambda_minus",
                       "lambda_plus", "selected"],
                   [(r[0], r[1], format_float(float(r[1]) / mean), format_float(lo),
                     format_float(hi), r[2]) for r in rows])
        written.append(p)
    return written
