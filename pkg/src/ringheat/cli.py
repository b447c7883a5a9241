"""Command-line front end for validation, exact currents, series values,
scans and Monte Carlo runs.

Every output starts with the fully resolved configuration (as ``# key =
value`` comment lines in CSV, or a ``config`` object in JSON) so any run
can be reproduced from its own artifact.  Exit codes: 0 success, 1 usage
error, 2 coupling-validation failure, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .dynamics import assemble_drift
from .model import (
    CouplingError,
    CouplingSpec,
    NonlinearitySpec,
    SystemParams,
    coupling_from_config,
    custom_table_from_csv,
    validate_coupling,
)
from .series import (
    example_current,
    probe_jump,
    theorem_current,
    theorem_partial_sum,
)
from .simulate import SimConfig, dump_trajectory, estimate_current
from .spectral import FitFloorError, eigendecompose
from .stationary import (
    InstabilityError,
    ResonanceError,
    decompose_current,
    expected_current,
    stationary_covariance,
)

__all__ = ["main", "run", "parse_config_header", "resolved_config"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

NUMERICAL_ERRORS = (
    InstabilityError,
    ResonanceError,
    FitFloorError,
    FloatingPointError,
    np.linalg.LinAlgError,
    RuntimeError,
)


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def _threads_default() -> int:
    try:
        return max(1, int(os.environ.get("RINGHEAT_THREADS", "1")))
    except ValueError:
        return 1


def _pmap(fn, items, threads: int) -> list:
    """Worker-pool map preserving input order."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


# ----------------------------------------------------------------------
# argument plumbing


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ringheat",
        description="Stationary energy currents for a stochastic wave equation "
        "on a ring coupled to two heat baths.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file; flags override")
    common.add_argument("--output", default="-", help="output path ('-' = stdout)")
    common.add_argument("--format", choices=("csv", "json"), default=None)
    common.add_argument("--figures", action="store_true", default=None,
                        help="render matplotlib figures next to the output file")
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads for scans (default RINGHEAT_THREADS or 1)")

    coupling = argparse.ArgumentParser(add_help=False)
    coupling.add_argument("--coupling", choices=("delta-pair", "power-law", "custom-table"),
                          default=None)
    coupling.add_argument("--c", type=float, default=None, help="delta-pair amplitude")
    coupling.add_argument("--x1", type=float, default=None, help="second contact offset")
    coupling.add_argument("--theta", type=float, default=None, help="growth exponent")
    coupling.add_argument("--table", default=None, help="CSV file for custom-table coupling")

    system = argparse.ArgumentParser(add_help=False)
    system.add_argument("--M", type=int, default=None, help="mode cutoff")
    system.add_argument("--eta", type=float, default=None, help="coupling strength")
    system.add_argument("--T1", type=float, default=None)
    system.add_argument("--T2", type=float, default=None)

    p = sub.add_parser("validate", parents=[common, coupling],
                       help="check the coupling assumptions")
    p.add_argument("--n-max", type=int, default=64)

    p = sub.add_parser("exact-current", parents=[common, coupling, system],
                       help="Lyapunov current trace(B Sigma)")
    p.add_argument("--method", choices=("eigenbasis", "kronecker", "integration"),
                   default="eigenbasis")

    p = sub.add_parser("eta-scan", parents=[common, coupling, system],
                       help="current over an eta grid with a slope fit")
    p.add_argument("--etas", default="0.4,0.2,0.1,0.05",
                   help="comma-separated eta values")

    p = sub.add_parser("m-scan", parents=[common, coupling, system],
                       help="current over a cutoff grid at fixed eta")
    p.add_argument("--Ms", default="4,8,16", help="comma-separated cutoffs")

    p = sub.add_parser("series-current", parents=[common, coupling],
                       help="limiting-current series value")
    p.add_argument("--N-max", type=int, default=10**5)
    p.add_argument("--method", choices=("consensus", "cesaro", "abel"),
                   default="consensus")
    p.add_argument("--deltaT", type=float, default=1.0)

    p = sub.add_parser("example-scan", parents=[common],
                       help="two-contact current profile C(x1) with jump report")
    p.add_argument("--c", type=float, default=0.5)
    p.add_argument("--x1-min", type=float, default=0.1)
    p.add_argument("--x1-max", type=float, default=math.pi)
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--deltaT", type=float, default=1.0)
    p.add_argument("--N-max", type=int, default=10**4)

    sub.add_parser("decompose", parents=[common, coupling, system],
                   help="eigenbasis class breakdown of the current")

    p = sub.add_parser("simulate", parents=[common, coupling, system],
                       help="Monte Carlo time-average estimate")
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--burn-in", type=float, default=None)
    p.add_argument("--sample-time", type=float, default=None)
    p.add_argument("--batches", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--chains", type=int, default=None)
    p.add_argument("--scheme", choices=("exactOU", "strangSplit"), default=None)
    p.add_argument("--nonlinearity", choices=("zero", "tanh", "clipped-cubic"),
                   default="zero")
    p.add_argument("--g-amplitude", type=float, default=1.0)
    p.add_argument("--trajectory", default=None,
                   help="also dump a thinned (t, current, energy) CSV here")
    return parser


_SYSTEM_DEFAULTS = {"M": 8, "eta": 0.3, "T1": 2.0, "T2": 1.0}
_COUPLING_DEFAULTS = {"coupling": "delta-pair", "c": 0.5, "x1": 1.0, "theta": 0.0}
_SIM_DEFAULTS = {
    "dt": 0.25,
    "burn_in": 200.0,
    "sample_time": 10_000.0,
    "batches": 16,
    "seed": 0,
    "chains": 1,
    "scheme": "exactOU",
}


def _load_config_file(path: str) -> dict[str, dict[str, str]]:
    cp = configparser.ConfigParser()
    with open(path) as fh:
        cp.read_file(fh)
    return {section: dict(cp.items(section)) for section in cp.sections()}


def _resolve(args, name: str, section: dict[str, str], default, cast=None):
    """Flag value if given, else config-file value, else the default."""
    value = getattr(args, name.replace("-", "_"), None)
    if value is not None:
        return value
    key = name.lower()
    if key in section:
        raw = section[key]
        return cast(raw) if cast else type(default)(raw)
    return default


def _coupling_from_args(args, filecfg) -> tuple[CouplingSpec, dict[str, str]]:
    section = filecfg.get("coupling", {})
    if "kind" in section and "coupling" not in section:
        section = {**section, "coupling": section["kind"]}
    kind = _resolve(args, "coupling", section, _COUPLING_DEFAULTS["coupling"], str)
    kind = kind.replace("_", "-")
    if kind == "custom-table":
        table = getattr(args, "table", None) or section.get("table")
        if not table:
            raise CouplingError("custom-table coupling needs --table FILE")
        theta = _resolve(args, "theta", section, _COUPLING_DEFAULTS["theta"], float)
        with open(table) as fh:
            spec = custom_table_from_csv(fh, theta=theta)
        return spec, spec.config_items()
    items = {
        "kind": kind.replace("-", "_"),
        "c": repr(_resolve(args, "c", section, _COUPLING_DEFAULTS["c"], float)),
        "x1": repr(_resolve(args, "x1", section, _COUPLING_DEFAULTS["x1"], float)),
    }
    if kind == "power-law":
        items["theta"] = repr(
            _resolve(args, "theta", section, _COUPLING_DEFAULTS["theta"], float)
        )
    spec = coupling_from_config(items)
    return spec, spec.config_items()


def _system_from_args(args, filecfg, g=None) -> SystemParams:
    section = filecfg.get("system", {})
    return SystemParams(
        M=_resolve(args, "M", section, _SYSTEM_DEFAULTS["M"], int),
        eta=_resolve(args, "eta", section, _SYSTEM_DEFAULTS["eta"], float),
        T1=_resolve(args, "T1", section, _SYSTEM_DEFAULTS["T1"], float),
        T2=_resolve(args, "T2", section, _SYSTEM_DEFAULTS["T2"], float),
        g=g or NonlinearitySpec.zero(),
    )


def _sim_from_args(args, filecfg) -> SimConfig:
    section = filecfg.get("simulate", {})
    return SimConfig(
        dt=_resolve(args, "dt", section, _SIM_DEFAULTS["dt"], float),
        burn_in_time=_resolve(args, "burn_in", section, _SIM_DEFAULTS["burn_in"], float),
        sample_time=_resolve(args, "sample_time", section, _SIM_DEFAULTS["sample_time"], float),
        batches=_resolve(args, "batches", section, _SIM_DEFAULTS["batches"], int),
        seed=_resolve(args, "seed", section, _SIM_DEFAULTS["seed"], int),
        chains=_resolve(args, "chains", section, _SIM_DEFAULTS["chains"], int),
        scheme=_resolve(args, "scheme", section, _SIM_DEFAULTS["scheme"], str),
    )


def resolved_config(command: str, *sections: dict) -> dict[str, str]:
    """Flat, ordered key=value view of everything that determined a run."""
    out = {"command": command}
    for sec in sections:
        for k, v in sec.items():
            out[k] = _fmt(v)
    return out


def parse_config_header(text: str) -> dict[str, str]:
    """Inverse of the CSV header emission: '# key = value' lines to a dict."""
    out: dict[str, str] = {}
    for line in text.splitlines():
        if not line.startswith("# "):
            continue
        body = line[2:]
        if " = " not in body:
            continue
        key, _, value = body.partition(" = ")
        out[key.strip()] = value.strip()
    return out


class _Output:
    """Collects header items and rows, then writes CSV or JSON."""

    def __init__(self, fmt: str, path: str):
        self.fmt = fmt
        self.path = path
        self.config: dict[str, str] = {}
        self.columns: list[str] = []
        self.rows: list[list] = []
        self.extra: dict = {}
        self.footer: list[str] = []

    def render(self) -> str:
        if self.fmt == "json":
            payload = {"schema": 1, "config": self.config}
            if self.columns:
                payload["columns"] = self.columns
                payload["rows"] = self.rows
            payload.update(self.extra)
            return json.dumps(payload, default=_fmt) + "\n"
        buf = io.StringIO()
        for k, v in self.config.items():
            buf.write(f"# {k} = {v}\n")
        for k, v in self.extra.items():
            buf.write(f"# {k} = {_fmt(v)}\n")
        if self.columns:
            buf.write(",".join(self.columns) + "\n")
            for row in self.rows:
                buf.write(",".join(_fmt(v) for v in row) + "\n")
        for line in self.footer:
            buf.write(f"# {line}\n")
        return buf.getvalue()

    def write(self) -> None:
        text = self.render()
        if self.path == "-":
            sys.stdout.write(text)
        else:
            with open(self.path, "w") as fh:
                fh.write(text)

    def figure_path(self, suffix: str) -> str | None:
        if self.path == "-":
            return f"{suffix}.png"
        base, _, _ = self.path.rpartition(".")
        return f"{base or self.path}_{suffix}.png"


def _validate_or_fail(spec: CouplingSpec, n_max: int) -> None:
    report = validate_coupling(spec, n_max)
    if not report.passed:
        raise _ValidationFailure(report.summary())


class _ValidationFailure(Exception):
    pass


# ----------------------------------------------------------------------
# subcommands


def _cmd_validate(args, filecfg, out: _Output) -> int:
    spec, items = _coupling_from_args(args, filecfg)
    out.config = resolved_config("validate", items, {"n_max": args.n_max})
    report = validate_coupling(spec, args.n_max)
    out.extra = {
        "passed": report.passed,
        "worst_growth_margin": report.worst_growth_margin,
        "worst_nondegeneracy_margin": report.worst_nondegeneracy_margin,
        "inferred_c1": report.inferred_c1,
        "inferred_c2": report.inferred_c2,
        "violations": len(report.violations),
    }
    if out.fmt == "csv":
        out.footer = report.summary().splitlines()
    out.write()
    return EXIT_OK if report.passed else EXIT_VALIDATION


def _cmd_exact_current(args, filecfg, out: _Output) -> int:
    spec, items = _coupling_from_args(args, filecfg)
    params = _system_from_args(args, filecfg)
    _validate_or_fail(spec, params.M)
    ds = assemble_drift(params, spec, skip_validation=True)
    cov = stationary_covariance(ds, method=args.method)
    J = expected_current(cov, ds.B)
    out.config = resolved_config(
        "exact-current", items,
        {"M": params.M, "eta": params.eta, "T1": params.T1, "T2": params.T2,
         "method": args.method},
    )
    out.columns = ["J", "lyapunov_residual"]
    out.rows = [[J, cov.residual]]
    out.write()
    return EXIT_OK


def _cmd_eta_scan(args, filecfg, out: _Output, threads: int, figures: bool) -> int:
    spec, items = _coupling_from_args(args, filecfg)
    params = _system_from_args(args, filecfg)
    etas = [float(s) for s in args.etas.split(",") if s.strip()]
    if not etas:
        raise ValueError("empty eta grid")
    _validate_or_fail(spec, params.M)
    series_value = theorem_partial_sum(spec, params.T1, params.T2, params.M)

    def one(eta: float) -> float:
        p = SystemParams(M=params.M, eta=eta, T1=params.T1, T2=params.T2)
        ds = assemble_drift(p, spec, skip_validation=True)
        return expected_current(stationary_covariance(ds), ds.B)

    currents = _pmap(one, etas, threads)
    gaps = [abs(J - series_value) for J in currents]
    ok = [g > 0 for g in gaps]
    if sum(ok) >= 2:
        slope = float(np.polyfit(np.log([e for e, k in zip(etas, ok) if k]),
                                 np.log([g for g, k in zip(gaps, ok) if k]), 1)[0])
    else:
        slope = float("nan")
    out.config = resolved_config(
        "eta-scan", items,
        {"M": params.M, "T1": params.T1, "T2": params.T2, "etas": args.etas},
    )
    out.extra = {"series_value": series_value, "gap_slope": slope}
    out.columns = ["eta", "J", "abs_gap"]
    out.rows = [[e, J, g] for e, J, g in zip(etas, currents, gaps)]
    out.write()
    if figures:
        from .report import figure_eta_scan

        figure_eta_scan(etas, currents, series_value, slope, out.figure_path("eta_scan"))
    return EXIT_OK


def _cmd_m_scan(args, filecfg, out: _Output, threads: int, figures: bool) -> int:
    spec, items = _coupling_from_args(args, filecfg)
    params = _system_from_args(args, filecfg)
    Ms = [int(s) for s in args.Ms.split(",") if s.strip()]
    if not Ms:
        raise ValueError("empty M grid")
    _validate_or_fail(spec, max(Ms))

    def one(M: int) -> float:
        p = SystemParams(M=M, eta=params.eta, T1=params.T1, T2=params.T2)
        ds = assemble_drift(p, spec, skip_validation=True)
        return expected_current(stationary_covariance(ds), ds.B)

    currents = _pmap(one, Ms, threads)
    out.config = resolved_config(
        "m-scan", items,
        {"eta": params.eta, "T1": params.T1, "T2": params.T2, "Ms": args.Ms},
    )
    out.columns = ["M", "J"]
    out.rows = [[M, J] for M, J in zip(Ms, currents)]
    out.write()
    if figures:
        from .report import figure_m_scan

        figure_m_scan(Ms, currents, out.figure_path("m_scan"))
    return EXIT_OK


def _cmd_series_current(args, filecfg, out: _Output) -> int:
    spec, items = _coupling_from_args(args, filecfg)
    _validate_or_fail(spec, 64)
    dT = args.deltaT
    res = theorem_current(spec, T1=dT, T2=0.0, N_max=args.N_max, method=args.method)
    out.config = resolved_config(
        "series-current", items,
        {"N_max": args.N_max, "method": args.method, "deltaT": dT},
    )
    out.columns = ["value", "error_estimate", "cesaro", "abel", "n_used", "converged"]
    out.rows = [[res.value, res.error_estimate, res.cesaro, res.abel,
                 res.n_used, res.converged]]
    out.write()
    if not res.converged:
        raise RuntimeError("series summation failed its Cauchy test")
    return EXIT_OK


def _cmd_example_scan(args, filecfg, out: _Output, threads: int, figures: bool) -> int:
    grid = np.linspace(args.x1_min, args.x1_max, args.points)

    def one(x1: float):
        res = example_current(args.c, float(x1), args.deltaT, args.N_max)
        return (float(x1), res.value, res.error_estimate)

    rows = _pmap(one, grid, threads)
    jumps = {}
    for loc in (math.pi / 2.0, math.pi):
        if args.x1_min < loc < args.x1_max or abs(args.x1_max - loc) < 0.1:
            jumps[loc] = probe_jump(args.c, loc, args.deltaT, args.N_max)
    out.config = resolved_config(
        "example-scan", {},
        {"c": args.c, "x1_min": args.x1_min, "x1_max": args.x1_max,
         "points": args.points, "deltaT": args.deltaT, "N_max": args.N_max},
    )
    out.columns = ["x1", "value", "error_estimate", "near_jump"]
    out.rows = [
        [x1, v, e, int(any(abs(x1 - loc) < 0.05 for loc in jumps))]
        for x1, v, e in rows
    ]
    if out.fmt == "json":
        out.extra["jumps"] = [
            {
                "location": loc,
                "left_limit": rep.left_limit,
                "right_limit": rep.right_limit,
                "gap": rep.gap,
                "is_jump": rep.is_jump,
            }
            for loc, rep in jumps.items()
        ]
    else:
        out.footer = [
            f"jump location={_fmt(loc)} left={_fmt(rep.left_limit)} "
            f"right={_fmt(rep.right_limit)} gap={_fmt(rep.gap)} is_jump={rep.is_jump}"
            for loc, rep in jumps.items()
        ]
    out.write()
    if figures:
        from .report import figure_example_scan

        figure_example_scan(rows, jumps, out.figure_path("example_scan"))
    return EXIT_OK


def _cmd_decompose(args, filecfg, out: _Output, figures: bool) -> int:
    spec, items = _coupling_from_args(args, filecfg)
    params = _system_from_args(args, filecfg)
    _validate_or_fail(spec, params.M)
    ds = assemble_drift(params, spec, skip_validation=True)
    J = expected_current(stationary_covariance(ds), ds.B)
    report = decompose_current(eigendecompose(ds), params.T1, params.T2, ds)
    out.config = resolved_config(
        "decompose", items,
        {"M": params.M, "eta": params.eta, "T1": params.T1, "T2": params.T2},
    )
    out.extra = {
        "total": report.total,
        "lyapunov_J": J,
        "consistency_rel_err": abs(report.total - J) / max(abs(J), 1e-300),
    }
    out.columns = ["class", "contribution", "fraction_of_total"]
    out.rows = [
        [name, value, value / report.total if report.total else float("nan")]
        for name, value in report.by_class.items()
    ]
    out.write()
    if figures:
        from .report import figure_decompose

        figure_decompose(report.by_class, report.total, out.figure_path("decompose"))
    return EXIT_OK


def _cmd_simulate(args, filecfg, out: _Output) -> int:
    spec, items = _coupling_from_args(args, filecfg)
    if args.nonlinearity == "tanh":
        g = NonlinearitySpec.tanh(args.g_amplitude)
    elif args.nonlinearity == "clipped-cubic":
        g = NonlinearitySpec.clipped_cubic(args.g_amplitude)
    else:
        g = NonlinearitySpec.zero()
    params = _system_from_args(args, filecfg, g=g)
    cfg = _sim_from_args(args, filecfg)
    _validate_or_fail(spec, params.M)
    ds = assemble_drift(params, spec, skip_validation=True)
    est = estimate_current(ds, cfg, g=g)
    out.config = resolved_config(
        "simulate", items,
        {"M": params.M, "eta": params.eta, "T1": params.T1, "T2": params.T2,
         "nonlinearity": g.name},
        cfg.to_dict(),
    )
    out.extra = {
        "mean": est.mean,
        "stderr": est.stderr,
        "effective_samples": est.effective_samples,
        "n_samples": est.n_samples,
        "burn_in_ok": est.burn_in_ok,
        "relaxation_time": est.relaxation_time,
    }
    if out.fmt == "json":
        out.extra["batch_means"] = est.batch_means
    out.write()
    if args.trajectory:
        dump_trajectory(args.trajectory, ds, cfg, g=g)
    return EXIT_OK


# ----------------------------------------------------------------------


def run(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code == 0:
            return EXIT_OK
        return EXIT_USAGE
    try:
        filecfg = _load_config_file(args.config) if args.config else {}
        run_section = filecfg.get("run", {})
        fmt = args.format or run_section.get("format", "csv")
        if fmt not in ("csv", "json"):
            raise ValueError(f"unknown format {fmt!r}")
        figures = bool(args.figures) or run_section.get("figures", "").lower() == "true"
        threads = args.threads if args.threads is not None else (
            int(run_section["threads"]) if "threads" in run_section else _threads_default()
        )
        out = _Output(fmt, args.output)
        if args.command == "validate":
            return _cmd_validate(args, filecfg, out)
        if args.command == "exact-current":
            return _cmd_exact_current(args, filecfg, out)
        if args.command == "eta-scan":
            return _cmd_eta_scan(args, filecfg, out, threads, figures)
        if args.command == "m-scan":
            return _cmd_m_scan(args, filecfg, out, threads, figures)
        if args.command == "series-current":
            return _cmd_series_current(args, filecfg, out)
        if args.command == "example-scan":
            return _cmd_example_scan(args, filecfg, out, threads, figures)
        if args.command == "decompose":
            return _cmd_decompose(args, filecfg, out, figures)
        if args.command == "simulate":
            return _cmd_simulate(args, filecfg, out)
        raise ValueError(f"unknown command {args.command!r}")
    except _ValidationFailure as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_VALIDATION
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (CouplingError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
