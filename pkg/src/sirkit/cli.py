"""Command-line front end for the tracking benchmark.

``sirkit run`` executes a Monte-Carlo comparison and prints a table with one
RMSE row per state component and an ANEES row; ``sirkit validate`` lists
configuration problems without running anything.

Configuration files are INI files with optional ``[scenario]``, ``[sir]``,
``[ukf]`` and ``[run]`` sections; any key left out keeps its default, so
running without a file reproduces the reference experiment. Command-line
flags override the file.

Exit status is 0 on success, 1 for configuration errors and 2 for runtime
errors.
"""
import argparse
import configparser
import csv
import dataclasses
import io
import json
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

from .baselines import UkfParams
from .exceptions import ConfigError, InvalidScaling
from .scenario import FILTER_NAMES, ScenarioConfig, make_filter, run_monte_carlo

__all__ = ["RunSpec", "load_spec", "validate", "run", "format_summary", "main"]

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2

N_STATE = 4


@dataclass
class RunSpec:
    """Everything one ``run`` invocation needs."""

    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    filters: tuple = ("ekf", "ukf", "sif")
    smooth: bool = False
    sqrt: bool = False
    max_iterations: int = 10
    error_tolerance: float = 0.0
    inflate_mean_error: bool = False
    alpha: float = 0.5
    beta: float = 2.0
    kappa: float = None
    threads: int = 1
    out: str = None
    format: str = "text"

    def resolved_filters(self):
        """Filter names after applying the ``sqrt`` switch."""
        names = []
        for name in self.filters:
            if self.sqrt and name == "sif":
                name = "sif-sqrt"
            if name not in names:
                names.append(name)
        return names


def _parse_value(raw, default):
    if isinstance(default, bool):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if isinstance(default, tuple):
        return tuple(float(v) for v in raw.split(","))
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw.strip()


def _apply_section(obj, section, allowed):
    updates = {}
    for key, raw in section.items():
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in [{section.name}]")
        try:
            if key == "kappa":
                updates[key] = None if raw.strip().lower() in ("", "none") else float(raw)
            elif key == "filters":
                updates[key] = tuple(v.strip() for v in raw.split(",") if v.strip())
            elif key == "out":
                updates[key] = raw.strip() or None
            else:
                updates[key] = _parse_value(raw, allowed[key])
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r} in [{section.name}]: {exc}") from exc
    return dataclasses.replace(obj, **updates)


def read_config(path, spec=None):
    """Apply an INI file on top of ``spec`` (defaults when omitted)."""
    spec = RunSpec() if spec is None else spec
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    scenario_keys = {f.name: getattr(spec.scenario, f.name) for f in fields(ScenarioConfig)}
    spec_keys = {f.name: getattr(spec, f.name) for f in fields(RunSpec) if f.name != "scenario"}
    sir_keys = {k: spec_keys[k] for k in ("max_iterations", "error_tolerance", "inflate_mean_error")}
    ukf_keys = {k: spec_keys[k] for k in ("alpha", "beta", "kappa")}
    run_keys = {k: v for k, v in spec_keys.items() if k not in sir_keys and k not in ukf_keys}
    for name in parser.sections():
        section = parser[name]
        if name == "scenario":
            spec = dataclasses.replace(spec, scenario=_apply_section(spec.scenario, section, scenario_keys))
        elif name == "sir":
            spec = _apply_section(spec, section, sir_keys)
        elif name == "ukf":
            spec = _apply_section(spec, section, ukf_keys)
        elif name == "run":
            spec = _apply_section(spec, section, run_keys)
        else:
            raise ConfigError(f"unknown config section [{name}]")
    return spec


def build_parser():
    parser = argparse.ArgumentParser(prog="sirkit", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("run", "run the Monte-Carlo benchmark"),
                            ("validate", "check a configuration without running")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="INI configuration file")
        p.add_argument("--filters", help=f"comma-separated subset of {','.join(FILTER_NAMES)}")
        p.add_argument("--mc-runs", type=int, help="number of Monte-Carlo runs")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--smooth", action="store_true", default=None, help="also score smoothers")
        p.add_argument("--sqrt", action="store_true", default=None, help="square-root form of the SIF")
        p.add_argument("--nmax", type=int, help="iteration cap of the integration rule")
        p.add_argument("--eps-min", type=float, help="error tolerance of the integration rule")
        p.add_argument("--inflate", action="store_true", default=None,
                       help="inflate the innovation covariance by the integration error")
        p.add_argument("--alpha", type=float, help="UKF alpha")
        p.add_argument("--beta", type=float, help="UKF beta")
        p.add_argument("--kappa", type=float, help="UKF kappa (default 3 - n_x)")
        p.add_argument("--threads", type=int, help="worker processes")
        p.add_argument("--out", help="directory for summary.json, summary.txt, timing.json, runs.csv")
        p.add_argument("--format", choices=("text", "json", "csv"), help="stdout format")
    return parser


def load_spec(args):
    """Combine defaults, the optional config file and command-line flags."""
    spec = read_config(args.config) if args.config else RunSpec()
    scenario = {}
    if args.mc_runs is not None:
        scenario["mc_runs"] = args.mc_runs
    if args.seed is not None:
        scenario["seed"] = args.seed
    if scenario:
        spec = dataclasses.replace(spec, scenario=dataclasses.replace(spec.scenario, **scenario))
    updates = {}
    if args.filters is not None:
        updates["filters"] = tuple(v.strip() for v in args.filters.split(",") if v.strip())
    for attr, key in (("smooth", "smooth"), ("sqrt", "sqrt"), ("nmax", "max_iterations"),
                      ("eps_min", "error_tolerance"), ("inflate", "inflate_mean_error"),
                      ("alpha", "alpha"), ("beta", "beta"), ("kappa", "kappa"),
                      ("threads", "threads"), ("out", "out"), ("format", "format")):
        value = getattr(args, attr)
        if value is not None:
            updates[key] = value
    return dataclasses.replace(spec, **updates)


def validate(spec):
    """Every problem with ``spec``, as a list of messages (empty if usable)."""
    problems = list(spec.scenario.validate())
    if not spec.filters:
        problems.append("at least one filter must be selected")
    for name in spec.filters:
        if name not in FILTER_NAMES:
            problems.append(f"unknown filter {name!r}; choose from {', '.join(FILTER_NAMES)}")
    if "kf" in spec.filters and spec.scenario.measurement != "identity":
        problems.append("filter 'kf' needs the linear measurement model (measurement = identity)")
    if spec.max_iterations < 1:
        problems.append("nmax must be at least 1")
    if not spec.error_tolerance >= 0.0:
        problems.append("eps-min must be nonnegative")
    try:
        params = UkfParams(spec.alpha, spec.beta, spec.kappa)
        c = N_STATE + params.lam(N_STATE)
        if not c > 0.0:
            problems.append(f"UKF scaling gives n_x + lambda = {c:.6g}; it must be positive")
    except InvalidScaling as exc:
        problems.append(f"UKF scaling: {exc}")
    if spec.threads < 1:
        problems.append("threads must be at least 1")
    if spec.format not in ("text", "json", "csv"):
        problems.append(f"unknown format {spec.format!r}")
    return problems


def _summary(spec, reports):
    return {
        "scenario": dataclasses.asdict(spec.scenario),
        "filters": [reports[k].to_dict() for k in reports],
    }


def format_summary(summary, fmt):
    """Render a summary as a text table, JSON or CSV."""
    rows = summary["filters"]
    if fmt == "json":
        return json.dumps(summary, indent=2, sort_keys=True) + "\n"
    labels = [f"RMSE x{i + 1}" for i in range(N_STATE)] + ["ANEES", "divergent"]
    table = []
    for i in range(N_STATE):
        table.append([labels[i]] + [f"{r['rmse'][i]:.4f}" for r in rows])
    table.append(["ANEES"] + [f"{r['anees']:.4f}" for r in rows])
    table.append(["divergent"] + [str(r["divergence_count"]) for r in rows])
    header = ["metric"] + [r["filter"] for r in rows]
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(table)
        return buf.getvalue()
    widths = [max(len(row[j]) for row in [header] + table) for j in range(len(header))]
    lines = ["  ".join(cell.rjust(w) if j else cell.ljust(w) for j, (cell, w) in enumerate(zip(row, widths)))
             for row in [header] + table]
    lines.insert(1, "-" * len(lines[0]))
    return "\n".join(lines) + "\n"


def run(spec, stdout=None):
    """Run the benchmark described by ``spec``; returns the summary dict."""
    stdout = sys.stdout if stdout is None else stdout
    filters = [
        make_filter(name, spec.scenario, max_iterations=spec.max_iterations,
                    error_tolerance=spec.error_tolerance, alpha=spec.alpha, beta=spec.beta,
                    kappa=spec.kappa, inflate_mean_error=spec.inflate_mean_error)
        for name in spec.resolved_filters()
    ]
    out_dir = Path(spec.out) if spec.out else None
    csv_path = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        if spec.format == "csv":
            csv_path = out_dir / "runs.csv"
    reports = run_monte_carlo(spec.scenario, filters, smooth=spec.smooth, threads=spec.threads,
                              csv_path=csv_path)
    summary = _summary(spec, reports)
    text = format_summary(summary, spec.format)
    stdout.write(text)
    if out_dir is not None:
        (out_dir / "summary.json").write_text(format_summary(summary, "json"))
        timing = {key: round(rep.wall_time, 6) for key, rep in reports.items()}
        (out_dir / "summary.txt").write_text(
            format_summary(summary, "text")
            + "".join(f"wall time {k}: {v:.3f} s\n" for k, v in timing.items())
        )
        (out_dir / "timing.json").write_text(json.dumps(timing, indent=2, sort_keys=True) + "\n")
    return summary


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        spec = load_spec(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    problems = validate(spec)
    if args.command == "validate":
        for p in problems:
            print(p)
        return EXIT_CONFIG if problems else EXIT_OK
    if problems:
        for p in problems:
            print(f"config error: {p}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        run(spec)
    except (OSError, ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
