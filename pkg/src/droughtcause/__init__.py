"""Causal drivers of drought from gridded rainfall and sea-surface temperature.

Stages: drought index from rainfall (:mod:`.spi`), modes of SST variability
(:mod:`.modes`), lagged causal discovery (:mod:`.causal`) and rolling-window
forecast checks (:mod:`.forecast`), with seeded benchmarks in
:mod:`.synthetic` and file-based orchestration in :mod:`.pipeline`.
"""
from .causal import (
    CausalGraph, ParentSet, PcmciConfig, TestResult, TimeSeriesDataset, bh_adjust,
    mci_links, parcorr_test, pc1_parents, pcmci, select_alpha_pc,
)
from .errors import ConfigError, DataError, DroughtCauseError, NumericalError
from .forecast import (
    ForecastReport, RidgeRegressor, SupervisedSet, fit_baseline, make_supervised,
    recurrent_forecast, rmse, rolling_eval,
)
from .grid import (
    AnomalyMatrix, GriddedField, flatten_to_matrix, latitude_weight, load_gridded_csv,
    phase_average_anomaly, region_mask, write_gridded_csv,
)
from .modes import (
    ModeSet, compute_modes, compute_pcs, covariance, eigendecompose, mp_bounds,
    select_nonrandom, varimax_criterion, varimax_rotate,
)
from .spi import (
    DroughtSeries, GammaParams, SpiSeries, drought_count_series, fit_gamma,
    inv_std_normal, mixed_cdf, rolling_sum, spi_series,
)

__version__ = "0.1.0"
