"""geodet CLI --- batch geographical-detector analyses from CSV files.

Usage::

    geodet synth --seed 7 --out work/          # synthetic stations/cases/cities + config.json
    geodet ingest work/stations.csv work/cases.csv work/cities.csv
    geodet run work/config.json --jobs 4
    geodet report work/report/

Stage commands write the intermediate tables on their own::

    geodet aggregate stations.csv --out work/            # station_months.csv
    geodet interpolate work/station_months.csv cities.csv --out work/   # city_months.csv
    geodet rates cases.csv cities.csv --out work/        # rates.csv

Values come from command-line flags first, then the config file, then
``GEODET_SEED`` (seed only), then built-in defaults.

Exit status is 0 on success, 1 on a runtime failure and 2 on a usage,
schema or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any

from geodet import __version__
from geodet._csv_io import (
    Workspace,
    city_panels_frame,
    load_workspace,
    outcomes_frame,
    read_cases,
    read_cities,
    read_station_months,
    read_stations,
    write_frame,
)
from geodet._report_format import read_report, render_q_table, write_matrices, write_report
from geodet.common import BadSpecError, ConfigError, GeodetError, SchemaError
from geodet.config import AnalysisConfig
from geodet.pipeline import (
    aggregate_stations,
    build_outcomes,
    interpolate_cities,
    prepare_inputs,
    region_membership,
    run_analysis,
)
from geodet.synthetic import SeasonalSpec, write_workspace

logger = logging.getLogger("geodet")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _configure_logging(verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("geodet: %(levelname)s: %(message)s"))
    logger.handlers[:] = [handler]
    logger.setLevel(level)
    logger.propagate = False


def _load_config(args: argparse.Namespace) -> AnalysisConfig:
    config = AnalysisConfig.load(args.config) if getattr(args, "config", None) else AnalysisConfig()
    overrides: dict[str, Any] = {
        "seed": getattr(args, "seed", None),
        "strata": getattr(args, "strata", None),
        "idw_power": getattr(args, "power", None),
        "idw_neighbors": getattr(args, "neighbors", None),
        "out": getattr(args, "out", None),
        "jobs": getattr(args, "jobs", None),
    }
    return config.with_overrides(**overrides).with_env_seed()


def _input_path(given: str | None, config: AnalysisConfig, name: str) -> str:
    path = given or getattr(config, name)
    if not path:
        raise ConfigError(f"no {name} file: pass it as an argument or set {name!r} in the config")
    return path


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_ingest(args: argparse.Namespace) -> int:
    config = _load_config(args)
    paths = {name: _input_path(getattr(args, name), config, name) for name in ("stations", "cases", "cities")}
    errors: list[SchemaError] = []
    cities = stations = cases = None
    try:
        cities = read_cities(paths["cities"])
    except SchemaError as exc:
        errors.append(exc)
    try:
        stations = read_stations(paths["stations"])
    except SchemaError as exc:
        errors.append(exc)
    try:
        cases = read_cases(paths["cases"], cities)
    except SchemaError as exc:
        errors.append(exc)
    if errors or cities is None or stations is None or cases is None:
        for exc in errors:
            print(exc, file=sys.stderr)
        return EXIT_USAGE
    summary = Workspace(stations, cases, cities).summary()
    print(f"stations:      {summary['stations']} ({summary['station_days']} station-days, {summary['date_range']})")
    print(f"cities:        {summary['cities']}")
    print(f"case rows:     {summary['case_rows']} ({summary['case_months']}; {', '.join(summary['viruses'])})")
    print("missing daily values:")
    for name, rate in summary["missing"].items():
        print(f"  {name:<9} {rate:6.1%}")
    return EXIT_OK


def cmd_aggregate(args: argparse.Namespace) -> int:
    config = _load_config(args)
    stations = read_stations(_input_path(args.stations, config, "stations"))
    frame = aggregate_stations(stations, min_coverage=config.min_coverage)
    path = Path(config.out) / "station_months.csv"
    write_frame(frame, path)
    logger.info("wrote %d station-months to %s", len(frame), path)
    return EXIT_OK


def cmd_interpolate(args: argparse.Namespace) -> int:
    config = _load_config(args)
    station_months = read_station_months(args.station_months)
    cities = read_cities(_input_path(args.cities, config, "cities"))
    panels = interpolate_cities(station_months, cities, power=config.idw_power, k=config.idw_neighbors)
    path = Path(config.out) / "city_months.csv"
    write_frame(city_panels_frame(panels), path)
    logger.info("wrote %d city-months to %s", len(panels), path)
    return EXIT_OK


def cmd_rates(args: argparse.Namespace) -> int:
    config = _load_config(args)
    cities = read_cities(_input_path(args.cities, config, "cities"))
    cases = read_cases(_input_path(args.cases, config, "cases"), cities)
    outcomes = build_outcomes(cases, region_membership(cities, config.regions))
    path = Path(config.out) / "rates.csv"
    write_frame(outcomes_frame(outcomes), path)
    logger.info("wrote %d rate series to %s", len(outcomes), path)
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    config = _load_config(args)
    if config.significance == "permutation":
        config.require_seed()
    inputs = {name: _input_path(None, config, name) for name in ("stations", "cases", "cities")}
    workspace = load_workspace(inputs["stations"], inputs["cases"], inputs["cities"])
    outcomes, panels = prepare_inputs(config, workspace.stations, workspace.cases, workspace.cities)
    bundle = run_analysis(config, outcomes, panels)
    written = write_report(bundle, config, config.out, inputs=inputs, version=__version__)
    logger.info("wrote %d file(s) to %s", len(written), config.out)
    print(render_q_table(bundle), end="")
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    spec = SeasonalSpec.load(args.spec) if args.spec else SeasonalSpec()
    seed = _load_config(args).require_seed()
    out = Path(args.out or "geodet-synth")
    paths = write_workspace(spec, seed, out)
    config = {
        "stations": paths["stations"].name,
        "cases": paths["cases"].name,
        "cities": paths["cities"].name,
        "seed": seed,
        "viruses": list(spec.viruses),
        "out": "report",
    }
    (out / "config.json").write_text(json.dumps(config, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("wrote synthetic workspace to %s", out)
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    bundle = read_report(args.report_dir)
    print(render_q_table(bundle), end="")
    if not args.no_svg:
        written = write_matrices(bundle, Path(args.report_dir))
        logger.info("regenerated %d interaction file(s)", len(written))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log debug detail to stderr")
    common.add_argument("-q", "--quiet", action="store_true", help="log warnings and errors only")
    common.add_argument("--config", help="JSON analysis config")
    common.add_argument("--out", help="output directory")

    parser = argparse.ArgumentParser(prog="geodet", description="Geographical-detector analysis of monthly case rates.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="validate input tables and print a summary")
    p.add_argument("stations", nargs="?")
    p.add_argument("cases", nargs="?")
    p.add_argument("cities", nargs="?")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("aggregate", parents=[common], help="daily station readings to station-months")
    p.add_argument("stations", nargs="?")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("interpolate", parents=[common], help="station-months onto cities by IDW")
    p.add_argument("station_months")
    p.add_argument("cities", nargs="?")
    p.add_argument("--power", type=float, help="inverse-distance exponent")
    p.add_argument("--neighbors", type=int, help="nearest stations per city")
    p.set_defaults(func=cmd_interpolate)

    p = sub.add_parser("rates", parents=[common], help="monthly positive rates per group")
    p.add_argument("cases", nargs="?")
    p.add_argument("cities", nargs="?")
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("run", parents=[common], help="full analysis and report")
    p.add_argument("config_file", nargs="?", metavar="config.json")
    p.add_argument("--seed", type=int)
    p.add_argument("--strata", help="default strategy, e.g. quantile:6, equal:5, jenks:4, manual:0,10")
    p.add_argument("--power", type=float, help="inverse-distance exponent")
    p.add_argument("--neighbors", type=int, help="nearest stations per city")
    p.add_argument("--jobs", type=int, help="worker threads")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic CSV workspace")
    p.add_argument("spec", nargs="?", help="JSON synthetic spec (defaults if omitted)")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", parents=[common], help="print q tables and redraw heatmaps of a finished run")
    p.add_argument("report_dir")
    p.add_argument("--no-svg", action="store_true", help="only print the tables")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point for the ``geodet`` command."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "config_file", None):
        if args.config:
            print("geodet: give the config either as an argument or with --config, not both", file=sys.stderr)
            return EXIT_USAGE
        args.config = args.config_file
    _configure_logging(args.verbose, args.quiet)

    try:
        return args.func(args)
    except SchemaError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, BadSpecError) as exc:
        print(f"geodet: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GeodetError, OSError) as exc:
        print(f"geodet: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
