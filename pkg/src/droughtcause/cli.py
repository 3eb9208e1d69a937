"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import STAGES, RunConfig, load_config, validate
from .errors import ConfigError, DataError, NumericalError
from .grid import write_gridded_csv
from .pipeline import StageError, export_plot_data, run_pipeline
from .synthetic import synthetic_bundle

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4

BENCH_CONFIG = """\
[run]
stages = ingest, spi, modes, pcmci, forecast
seed = {seed}

[paths]
rain = rain.csv
sst = sst.csv
"""


def _config_from_args(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.run.seed = args.seed
        cfg.explicit = cfg.explicit | {"run.seed"}
    if args.threads is not None:
        cfg.run.threads = args.threads
        cfg.explicit = cfg.explicit | {"run.threads"}
    validate(cfg)
    return cfg


def _bench(args) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = 0 if args.seed is None else args.seed
    bundle = synthetic_bundle(seed=seed)
    write_gridded_csv(bundle.rain, out / "rain.csv")
    write_gridded_csv(bundle.sst, out / "sst.csv")
    (out / "truth.json").write_text(json.dumps(bundle.truth(), indent=2, sort_keys=True) + "\n")
    np.savetxt(out / "truth_patterns.csv", bundle.sst_patterns.T, delimiter=",", fmt="%.17g")
    (out / "config.ini").write_text(BENCH_CONFIG.format(seed=seed))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="droughtcause", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (*STAGES, "pipeline", "bench", "export-plots"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI run configuration")
        p.add_argument("--out", required=True, help="artifact directory")
        p.add_argument("--seed", type=int, help="seed (u64)")
        p.add_argument("--threads", type=int, help="BLAS/OpenMP thread count")
        if name == "pipeline":
            p.add_argument("--stage", action="append", choices=STAGES,
                           help="restrict to this stage (repeatable)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "bench":
            _bench(args)
        elif args.command == "export-plots":
            for p in export_plot_data(args.out):
                print(p)
        else:
            cfg = _config_from_args(args)
            stages = [args.command] if args.command in STAGES else args.stage
            run_pipeline(cfg, args.out, stages)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _code_for(exc.cause)
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _code_for(exc) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (NumericalError, np.linalg.LinAlgError, FloatingPointError)):
        return EXIT_NUMERICAL
    return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
