"""Command-line front end.

Subcommands: ``fit`` (one dataset, one weighting scheme), ``simulate``
(config-driven study tables), ``are`` (efficiency grid), ``resample``
(random-weight or bootstrap distributions), ``km-export`` (survival-curve
data for plotting). Exit codes: 0 success, 2 argument/config error, 3 data
error, 4 solver failure. JSON outputs carry ``"schema": 1``; all randomness
flows from ``--seed`` (a generated seed is printed when omitted).
"""

from __future__ import annotations

import argparse
import json
import os
import secrets
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .dataset import load_csv
from .efficiency import are_table
from .errors import ConfigError, ConvergenceError, DataError, FitError
from .estimate import (
    Constant,
    FitResult,
    KaplanMeier,
    Parametric,
    iterative_marginal_fit,
    solve_score,
)
from .marginal import (
    StepSurvival,
    fit_exponential,
    fit_piecewise_exponential,
    fit_weibull,
    kaplan_meier,
    load_external_curve,
    save_curve,
)
from .resample import bootstrap, resample_distribution
from .simulate import load_study_config, results_to_json, run_study, write_results_csv

__all__ = [
    "main",
    "build_parser",
    "cmd_fit",
    "cmd_simulate",
    "cmd_are",
    "cmd_resample",
    "cmd_km_export",
]

_BUNDLED_CONFIGS = ("table1", "table2", "table3")


def _default_jobs(value: int | None) -> int:
    if value is not None:
        return value
    raw = os.environ.get("MARGFIT_JOBS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"MARGFIT_JOBS must be an integer, got {raw!r}") from None


def _parse_floats(text: str, what: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise ConfigError(f"{what} must be a comma-separated number list") from None
    if not vals:
        raise ConfigError(f"{what} must be nonempty")
    return vals


def _scheme_for_fit(spec: str, data):
    """Scheme-spec string -> (solve callable kwargs, description).

    Parametric schemes are fit to the data (the plug-in estimator); the
    ``curve:FILE`` scheme wraps an externally supplied survival curve.
    """
    if spec == "pl":
        return lambda **kw: solve_score(data, Constant(), **kw)
    if spec == "km":
        return lambda **kw: solve_score(data, KaplanMeier(), **kw)
    if spec == "par:exponential":
        return lambda **kw: iterative_marginal_fit(data, "exponential", **kw)
    if spec == "par:weibull":
        return lambda **kw: iterative_marginal_fit(data, "weibull", **kw)
    if spec.startswith("par:pwexp:"):
        raw = spec[len("par:pwexp:") :]
        try:
            cuts = tuple(float(x) for x in raw.split(","))
        except ValueError:
            raise ConfigError(f"bad piecewise cuts in scheme {spec!r}") from None
        return lambda **kw: iterative_marginal_fit(data, "pwexp", cuts=cuts, **kw)
    if spec.startswith("curve:"):
        curve = load_external_curve(spec[len("curve:") :])
        return lambda **kw: solve_score(data, Parametric(curve), **kw)
    raise ConfigError(
        f"unknown scheme {spec!r}; expected pl, km, par:exponential, "
        "par:weibull, par:pwexp:cut1,cut2,..., or curve:FILE"
    )


def _scheme_object(spec: str, data):
    """Scheme-spec string -> WeightScheme instance (for resampling)."""
    if spec == "pl":
        return Constant()
    if spec == "km":
        return KaplanMeier()
    if spec == "par:exponential":
        return Parametric(fit_exponential(data))
    if spec == "par:weibull":
        return Parametric(fit_weibull(data))
    if spec.startswith("par:pwexp:"):
        raw = spec[len("par:pwexp:") :]
        try:
            cuts = tuple(float(x) for x in raw.split(","))
        except ValueError:
            raise ConfigError(f"bad piecewise cuts in scheme {spec!r}") from None
        return Parametric(fit_piecewise_exponential(data, cuts))
    if spec.startswith("curve:"):
        return Parametric(load_external_curve(spec[len("curve:") :]))
    raise ConfigError(
        f"unknown scheme {spec!r}; expected pl, km, par:exponential, "
        "par:weibull, par:pwexp:cut1,cut2,..., or curve:FILE"
    )


def _print_fit(result: FitResult) -> None:
    print(
        f"scheme: {result.scheme}  ties: {result.ties}  "
        f"n: {result.n}  events: {result.n_events}  "
        f"iterations: {result.iterations}"
    )
    if result.theta is not None:
        print(f"marginal: {result.theta}")
    width = max(6, len(str(len(result.beta))) + 1)
    print(f"{'coef':<{width}}  estimate (se)")
    for j, (b, s) in enumerate(zip(result.beta, result.std_errors)):
        print(f"{'z' + str(j + 1):<{width}}  {b:.4f} ({s:.4f})")


def cmd_fit(args) -> int:
    data = load_csv(args.csv)
    solver = _scheme_for_fit(args.scheme, data)
    result = solver(ties=args.ties)
    _print_fit(result)
    if args.out:
        doc = {"schema": 1, **result.to_dict()}
        Path(args.out).write_text(
            json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        print(f"wrote {args.out}")
    return 0


def _resolve_config_path(name: str) -> Path:
    p = Path(name)
    if p.exists():
        return p
    if name in _BUNDLED_CONFIGS:
        ref = resources.files("margfit.data") / f"{name}.json"
        with resources.as_file(ref) as concrete:
            return Path(concrete)
    raise ConfigError(
        f"no config file {name!r}; bundled names: {', '.join(_BUNDLED_CONFIGS)}"
    )


def cmd_simulate(args) -> int:
    path = _resolve_config_path(args.config)
    configs = load_study_config(path)
    if args.seed is not None:
        from dataclasses import replace

        configs = [replace(c, seed=args.seed) for c in configs]
    jobs = _default_jobs(args.jobs)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = []
    for cfg in configs:
        print(
            f"running: {cfg.label or 'study'} "
            f"target censoring {cfg.target_censoring:.0%} "
            f"(n={cfg.n}, reps={cfg.reps}, seed={cfg.seed})",
            flush=True,
        )
        results.append(run_study(cfg, jobs=jobs))
    stem = path.stem
    csv_path = out_dir / f"{stem}_results.csv"
    json_path = out_dir / f"{stem}_results.json"
    write_results_csv(results, csv_path)
    json_path.write_text(
        json.dumps(results_to_json(results), sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    names = list(results[0].means)
    print(f"seed: {results[0].seed}")
    header = "label            censoring  " + "  ".join(f"{n:<16}" for n in names)
    print(header + "  E[beta(T)]")
    for r in results:
        cells = "  ".join(
            f"{r.means[n]:.3f} ({r.sds[n]:.3f})".ljust(16) for n in names
        )
        print(
            f"{r.config.label:<16} {r.realized_censoring:>8.1%}  "
            f"{cells}  {r.reference_family:.3f}"
        )
    print(f"wrote {csv_path} and {json_path}")
    return 0


def cmd_are(args) -> int:
    results = are_table(
        beta0s=_parse_floats(args.beta0, "--beta0"),
        t_cs=_parse_floats(args.tc, "--tc"),
        ps=_parse_floats(args.p, "--p"),
        sigma_role=args.sigma_role,
    )
    lines = ["beta0,t_c,p,ratio,censoring_percent,sigma0,sigma1,sigma2,sigma_role"]
    print("beta0   t_c    p      ratio   censoring")
    for r in results:
        c = r.config
        print(
            f"{c.beta0:<7g} {c.t_c:<6g} {c.p:<6g} {r.ratio:.3f}   "
            f"{100 * r.censoring_fraction:.0f}%"
        )
        lines.append(
            f"{c.beta0!r},{c.t_c!r},{c.p!r},{r.ratio!r},"
            f"{100 * r.censoring_fraction!r},{r.sigma0!r},{r.sigma1!r},"
            f"{r.sigma2!r},{c.sigma_role}"
        )
    if args.out:
        Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
        print(f"wrote {args.out}")
    return 0


def cmd_resample(args) -> int:
    data = load_csv(args.csv)
    scheme = _scheme_object(args.scheme, data)
    seed = args.seed
    if seed is None:
        seed = secrets.randbits(32)
        print(f"seed: {seed}")
    jobs = _default_jobs(args.jobs)
    if args.method == "weights":
        result = resample_distribution(
            data, scheme, n_draws=args.draws, seed=seed, ties=args.ties, jobs=jobs
        )
    else:
        result = bootstrap(
            data, scheme, n_draws=args.draws, seed=seed, ties=args.ties, jobs=jobs
        )
    print(
        f"method: {result.method}  draws: {result.draws.shape[0]}  "
        f"failed: {result.n_failed}"
    )
    for j, (b, s, rs) in enumerate(
        zip(result.point.beta, result.point.std_errors, result.se)
    ):
        print(
            f"z{j + 1}: point {b:.4f} (analytic se {s:.4f}, resampling se {rs:.4f})"
        )
    if args.out:
        result.export_csv(args.out)
        print(f"wrote {args.out}")
    return 0


def cmd_km_export(args) -> int:
    data = load_csv(args.csv)
    prefix = args.out_prefix or str(Path(args.csv).with_suffix(""))
    cuts: tuple[float, ...] = ()
    if args.family:
        # validate before writing anything so a bad request leaves no files
        if args.family.startswith("pwexp:"):
            try:
                cuts = tuple(float(x) for x in args.family[len("pwexp:") :].split(","))
            except ValueError:
                raise ConfigError(
                    f"bad piecewise cuts in family {args.family!r}"
                ) from None
        elif args.family not in ("exponential", "weibull"):
            raise ConfigError(f"unknown family {args.family!r}")
    km = kaplan_meier(data)
    km_path = Path(f"{prefix}_km.csv")
    save_curve(km, km_path)
    print(f"wrote {km_path}")
    if args.family:
        if args.family == "exponential":
            model = fit_exponential(data)
        elif args.family == "weibull":
            model = fit_weibull(data)
        else:
            model = fit_piecewise_exponential(data, cuts)
        grid = np.linspace(0.0, float(data.time.max()), 200)
        surv = np.asarray(model.survival(grid), dtype=float)
        curve = StepSurvival(jump_times=grid[1:], values=surv[1:])
        par_path = Path(f"{prefix}_{args.family.split(':')[0]}.csv")
        save_curve(curve, par_path)
        print(f"wrote {par_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="margfit",
        description=(
            "Marginal-survival-weighted relative-risk estimation: fitting, "
            "simulation studies, efficiency tables, and resampling."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit one dataset with one weighting scheme")
    p.add_argument("csv", help="dataset CSV with columns time,status,z1[,z2,...]")
    p.add_argument(
        "--scheme",
        default="pl",
        help="pl | km | par:exponential | par:weibull | "
        "par:pwexp:cut1,cut2,... | curve:FILE (default pl)",
    )
    p.add_argument(
        "--ties",
        default="breslow",
        choices=("breslow", "efron"),
        help="tie handling (efron: constant weights only)",
    )
    p.add_argument("--out", help="write the fit as JSON to this path")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="run a study config (path or bundled name)")
    p.add_argument(
        "config",
        help=f"config JSON path or bundled name ({', '.join(_BUNDLED_CONFIGS)})",
    )
    p.add_argument("--out-dir", default=".", help="output directory (default .)")
    p.add_argument("--seed", type=int, help="override the config's seed")
    p.add_argument(
        "--jobs", type=int, help="parallel workers (default $MARGFIT_JOBS or 1)"
    )
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("are", help="asymptotic relative efficiency grid")
    p.add_argument("--beta0", default="0.5,1,2", help="comma list (default 0.5,1,2)")
    p.add_argument("--tc", default="1,0.5", help="comma list (default 1,0.5)")
    p.add_argument(
        "--p", default="0.25,0.5,0.75", help="comma list (default 0.25,0.5,0.75)"
    )
    p.add_argument(
        "--sigma-role",
        default="log_sd",
        choices=("log_sd", "log_var"),
        help="reading of t_c as the lognormal log-scale SD or variance",
    )
    p.add_argument("--out", help="write the grid CSV to this path")
    p.set_defaults(func=cmd_are)

    p = sub.add_parser(
        "resample", help="random-weight or bootstrap resampling distribution"
    )
    p.add_argument("csv", help="dataset CSV")
    p.add_argument("--scheme", default="pl", help="as in fit (default pl)")
    p.add_argument(
        "--method",
        default="weights",
        choices=("weights", "bootstrap"),
        help="random score weights or nonparametric bootstrap",
    )
    p.add_argument(
        "-B", "--draws", type=int, default=1000, help="number of draws (default 1000)"
    )
    p.add_argument("--seed", type=int, help="RNG seed (generated and printed if absent)")
    p.add_argument(
        "--ties", default="breslow", choices=("breslow", "efron"), help="tie handling"
    )
    p.add_argument(
        "--jobs", type=int, help="parallel workers (default $MARGFIT_JOBS or 1)"
    )
    p.add_argument("--out", help="write draws CSV (one column per coefficient)")
    p.set_defaults(func=cmd_resample)

    p = sub.add_parser("km-export", help="export survival curves for plotting")
    p.add_argument("csv", help="dataset CSV")
    p.add_argument(
        "--family",
        help="also export a fitted parametric curve: exponential | weibull "
        "| pwexp:cut1,cut2,...",
    )
    p.add_argument(
        "--out-prefix", help="output file prefix (default: the CSV's stem)"
    )
    p.set_defaults(func=cmd_km_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on bad flags, 0 on --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (ConvergenceError, FitError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
