"""Monthly gridded fields: CSV ingestion, deseasonalization, latitude weighting.

A field is stored as a dense ``(n_times, n_points)`` matrix. Missing cells are
NaN. Months are kept as integer ordinals ``year * 12 + (month - 1)`` so that
consecutive calendar months differ by exactly one.
"""
from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field as dc_field, replace
from pathlib import Path

import numpy as np

from .errors import DataError

CSV_HEADER = ["time", "lat", "lon", "value"]
_TIME_RE = re.compile(r"^(\d{4})-(\d{2})$")


def month_ordinal(year: int, month: int) -> int:
    if not 1 <= month <= 12:
        raise ValueError(f"month out of range: {month}")
    return year * 12 + (month - 1)


def ordinal_to_month(ordinal: int) -> tuple[int, int]:
    return int(ordinal) // 12, int(ordinal) % 12 + 1


def format_month(ordinal: int) -> str:
    year, month = ordinal_to_month(ordinal)
    return f"{year:04d}-{month:02d}"


def parse_month(text: str) -> int:
    m = _TIME_RE.match(text.strip())
    if m is None:
        raise ValueError(f"bad time {text!r}, expected YYYY-MM")
    return month_ordinal(int(m.group(1)), int(m.group(2)))


def format_float(value: float) -> str:
    """Shortest decimal that round-trips to the same double; NaN becomes ``NA``."""
    value = float(value)
    if np.isnan(value):
        return "NA"
    return repr(value)


def normalize_lon(lon):
    return np.mod(np.asarray(lon, dtype=float), 360.0)


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class GriddedField:
    """Monthly space-time field on a set of lat/lon points.

    Parameters
    ----------
    months : array of int
        Consecutive month ordinals, one per row of `values`.
    lats, lons : array of float
        Point coordinates in degrees, one per column. Longitudes are
        normalized to [0, 360).
    values : array, shape (n_times, n_points)
        Field values; NaN marks a missing cell.
    """

    months: np.ndarray
    lats: np.ndarray
    lons: np.ndarray
    values: np.ndarray
    phase_averaged: bool = False
    lat_weighted: bool = False

    def __post_init__(self):
        months = _frozen(self.months, np.int64).ravel()
        lats = _frozen(self.lats).ravel()
        lons = _frozen(normalize_lon(self.lons)).ravel()
        values = _frozen(self.values)
        if values.ndim != 2 or values.shape != (months.size, lats.size):
            raise DataError(
                f"values shape {values.shape} does not match "
                f"{months.size} times x {lats.size} points"
            )
        if lats.size != lons.size:
            raise DataError("lats and lons differ in length")
        if months.size > 1 and np.any(np.diff(months) != 1):
            raise DataError("time axis must be consecutive calendar months")
        if np.any(np.abs(lats) > 90):
            raise DataError("latitude outside [-90, 90]")
        object.__setattr__(self, "months", months)
        object.__setattr__(self, "lats", lats)
        object.__setattr__(self, "lons", lons)
        object.__setattr__(self, "values", values)

    @property
    def shape(self):
        return self.values.shape

    @property
    def n_times(self) -> int:
        return self.values.shape[0]

    @property
    def n_points(self) -> int:
        return self.values.shape[1]

    @property
    def times(self) -> list[tuple[int, int]]:
        return [ordinal_to_month(m) for m in self.months]

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.lats.tolist(), self.lons.tolist()))

    @property
    def mask(self) -> np.ndarray:
        """True where a cell is missing."""
        return np.isnan(self.values)

    @property
    def calendar_months(self) -> np.ndarray:
        """Calendar month (1..12) of every row."""
        return self.months % 12 + 1

    def with_values(self, values, **flags) -> "GriddedField":
        return replace(self, values=values, **flags)


@dataclass(frozen=True, eq=False)
class AnomalyMatrix:
    """Time x points matrix ready for covariance analysis."""

    matrix: np.ndarray
    months: np.ndarray
    lats: np.ndarray
    lons: np.ndarray
    phase_averaged: bool = False
    lat_weighted: bool = False
    dropped_points: tuple = dc_field(default=())

    @property
    def shape(self):
        return self.matrix.shape


def load_gridded_csv(path) -> GriddedField:
    """Read a long-format ``time,lat,lon,value`` CSV into a GriddedField.

    Points keep the order of their first appearance in the file; rows may come
    in any order. A (time, point) cell absent from the file is treated as
    missing, like an explicit ``NA``.
    """
    path = Path(path)
    cells: dict[tuple[int, int], float] = {}
    point_index: dict[tuple[float, float], int] = {}
    lats: list[float] = []
    lons: list[float] = []
    months: set[int] = set()

    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if [h.strip() for h in header] != CSV_HEADER:
            raise DataError(f"{path}:1: header must be exactly {','.join(CSV_HEADER)}")
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            try:
                t = parse_month(row[0])
                lat = float(row[1])
                lon = float(normalize_lon(float(row[2])))
                raw = row[3].strip()
                value = np.nan if raw == "NA" else float(raw)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: malformed row ({exc})") from None
            if not np.isfinite(lat) or abs(lat) > 90:
                raise DataError(f"{path}:{lineno}: latitude {lat} outside [-90, 90]")
            if not np.isfinite(lon):
                raise DataError(f"{path}:{lineno}: non-finite longitude")
            key = (lat, lon)
            j = point_index.get(key)
            if j is None:
                j = point_index[key] = len(lats)
                lats.append(lat)
                lons.append(lon)
            if (t, j) in cells:
                raise DataError(
                    f"{path}:{lineno}: duplicate cell {format_month(t)} at ({lat}, {lon})"
                )
            cells[(t, j)] = value
            months.add(t)

    if not cells:
        raise DataError(f"{path}: no data rows")
    ordered = sorted(months)
    for a, b in zip(ordered, ordered[1:]):
        if b - a != 1:
            raise DataError(
                f"{path}: time gap between {format_month(a)} and {format_month(b)}"
            )
    first = ordered[0]
    values = np.full((len(ordered), len(lats)), np.nan)
    for (t, j), v in cells.items():
        values[t - first, j] = v
    return GriddedField(np.arange(first, first + len(ordered)), lats, lons, values)


def write_gridded_csv(field: GriddedField, path) -> None:
    """Write a field in the long format read by :func:`load_gridded_csv`."""
    path = Path(path)
    times = [format_month(m) for m in field.months]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for j in range(field.n_points):
            lat = format_float(field.lats[j])
            lon = format_float(field.lons[j])
            col = field.values[:, j]
            for i, t in enumerate(times):
                writer.writerow([t, lat, lon, format_float(col[i])])


def phase_average_anomaly(field: GriddedField) -> GriddedField:
    """Subtract each calendar month's mean from its members, per point."""
    cal = field.calendar_months
    counts = np.bincount(cal - 1, minlength=12)
    if np.any(counts < 2):
        short = [m + 1 for m in np.flatnonzero(counts < 2)]
        raise DataError(f"need at least 2 samples per calendar month; short months: {short}")
    out = np.array(field.values, dtype=float)
    for m in range(1, 13):
        rows = cal == m
        block = out[rows]
        with np.errstate(invalid="ignore"):
            mean = np.nanmean(block, axis=0) if np.isnan(block).any() else block.mean(axis=0)
        out[rows] = block - mean
    return field.with_values(out, phase_averaged=True)


def latitude_weight(field: GriddedField) -> GriddedField:
    """Scale each column by sqrt(cos(latitude))."""
    if np.any(np.abs(field.lats) > 90):
        raise DataError("latitude outside [-90, 90]")
    w = np.sqrt(np.clip(np.cos(np.deg2rad(field.lats)), 0.0, None))
    # cos(90 deg) evaluates to ~6e-17 in floating point
    w[np.abs(field.lats) == 90] = 0.0
    return field.with_values(field.values * w, lat_weighted=True)


def flatten_to_matrix(field: GriddedField, missing: str = "reject") -> AnomalyMatrix:
    """Turn a field into the time x points matrix used by the spectral analysis.

    ``missing="reject"`` raises on any missing cell; ``missing="drop-point"``
    removes every column holding at least one missing cell.
    """
    if field.n_times == 0 or field.n_points == 0:
        raise DataError("empty field")
    values = field.values
    keep = np.ones(field.n_points, dtype=bool)
    bad = np.isnan(values).any(axis=0)
    if bad.any():
        if missing == "reject":
            raise DataError(f"{int(bad.sum())} point(s) hold missing values")
        if missing != "drop-point":
            raise ValueError(f"unknown missing-value policy {missing!r}")
        keep = ~bad
        if not keep.any():
            raise DataError("every point holds missing values")
    matrix = np.array(values[:, keep], dtype=float)
    matrix.flags.writeable = False
    return AnomalyMatrix(
        matrix=matrix,
        months=field.months,
        lats=field.lats[keep],
        lons=field.lons[keep],
        phase_averaged=field.phase_averaged,
        lat_weighted=field.lat_weighted,
        dropped_points=tuple(int(j) for j in np.flatnonzero(~keep)),
    )


def _lon_inside(lons, lon_min, lon_max):
    lon_min, lon_max = float(normalize_lon(lon_min)), float(normalize_lon(lon_max))
    if lon_min <= lon_max:
        return (lons >= lon_min) & (lons <= lon_max)
    # box straddles the prime meridian
    return (lons >= lon_min) | (lons <= lon_max)


def region_mask(field: GriddedField, bbox) -> GriddedField:
    """Keep only the points inside ``bbox = (lat_min, lat_max, lon_min, lon_max)``.

    Bounds are inclusive. A box with ``lon_min > lon_max`` (after
    normalization to [0, 360)) wraps across 0 degrees.
    """
    lat_min, lat_max, lon_min, lon_max = map(float, bbox)
    if not lat_min < lat_max or normalize_lon(lon_min) == normalize_lon(lon_max):
        raise DataError(f"degenerate bounding box {bbox}")
    inside = (field.lats >= lat_min) & (field.lats <= lat_max)
    inside &= _lon_inside(field.lons, lon_min, lon_max)
    if not inside.any():
        raise DataError(f"no points inside bounding box {bbox}")
    return replace(
        field,
        lats=field.lats[inside],
        lons=field.lons[inside],
        values=field.values[:, inside],
    )
