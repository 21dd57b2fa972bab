"""Command-line front end: ``binequiv {fit,test,reweight,power,diagnose}``.

Exit codes: 0 success / equivalent, 1 error, 2 convergence problem,
3 not equivalent.

Settings come from, in increasing precedence: built-in defaults, a flat
``key = value`` file given by ``--config`` and command-line flags. The
default seed may also come from the ``BINEQUIV_SEED`` environment variable.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import os
import sys
import warnings
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from .bayes import FAMILIES, FittedModel, NoConvergedModelError, SamplerConfig, fit_and_select
from .bayes.sampler import sampler_config_dict
from .binning import BinWeightConfig
from .dataset import REFERENCE, SYNTHETIC, DatasetError, Schema, load_datasets, load_table
from .equivtest import RopeConfig, build_report, overall_verdict, run_metric_test, write_plot_data
from .power import DESK_REPS, DESK_SAMPLER, FULL_REPS, bootstrap_power, power_config_dict
from .reweight import ScmSeedRecord, knn_reweight, scm_resim_weights

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NONCONVERGED = 2
EXIT_NOT_EQUIVALENT = 3

SEED_ENV = "BINEQUIV_SEED"
DEFAULT_FAMILIES = ("normal", "lognormal", "gamma", "exponential")
# never echoed into reports: they do not affect results
_VOLATILE = {"threads", "out", "plot_data", "config", "command", "func"}


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Reports usage errors as exit code 1 (2 is reserved for convergence problems)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(message)


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in str(text).split(",") if t.strip()]


def _families(text) -> list[str]:
    names = _csv_list(text) if isinstance(text, str) else list(text)
    bad = [f for f in names if f not in FAMILIES]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown family {', '.join(bad)}; choose from {', '.join(FAMILIES)}")
    return names


def _threads(text) -> int:
    if str(text) == "max":
        return os.cpu_count() or 1
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("threads must be >= 1 or 'max'")
    return n


def _env_seed():
    v = os.environ.get(SEED_ENV)
    if v is None or v.strip() == "":
        return None
    try:
        return int(v)
    except ValueError:
        raise CliError(f"{SEED_ENV} must be an integer, got {v!r}") from None


def read_config(path) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` comments; dashes and underscores are interchangeable."""
    text = Path(path).read_text(encoding="utf-8")
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"))
    cp.optionxform = str
    cp.read_string("[run]\n" + text)
    return {k.strip().replace("-", "_"): v.strip() for k, v in cp["run"].items()}


# -- argument parser ----------------------------------------------------------


def _add_sampler(p):
    g = p.add_argument_group("sampler")
    g.add_argument("--families", type=_families, default=list(DEFAULT_FAMILIES))
    g.add_argument("--chains", type=int, default=4)
    g.add_argument("--warmup", type=int, default=1000)
    g.add_argument("--draws", type=int, default=1000)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--normalize", choices=("sum_to_n", "none"), default="sum_to_n")


def _add_schema(p):
    g = p.add_argument_group("data schema")
    g.add_argument("--metrics", "--metric", dest="metrics", type=_csv_list, default=None)
    g.add_argument("--weight-col", default="weight")
    g.add_argument("--outcome-col", default="resim_outcome")
    g.add_argument("--id-col", default="scenario_id")


def _add_rope(p):
    g = p.add_argument_group("equivalence test")
    g.add_argument("--alpha", type=float, default=0.95)
    g.add_argument("--tol-rel", type=float, default=0.10)
    g.add_argument("--tol-abs", type=float, default=0.05)
    g.add_argument("--m", type=int, default=40)
    g.add_argument("--n-max", type=int, default=20)
    g.add_argument("--rule", choices=("all_metrics", "critical_subset"), default="all_metrics")
    g.add_argument("--critical", type=_csv_list, default=[])
    g.add_argument("--p0", type=float, default=0.02)
    g.add_argument("--epsilon", type=float, default=1e-4)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="binequiv", description="Binned Bayesian practical-equivalence testing.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--threads", type=_threads, default=1, help="cap for all parallel sections (integer or 'max')")
    p.add_argument("--config", default=None, help="flat key=value file; flags override it")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit candidate families per metric and select one by PSIS-LOO")
    f.add_argument("--input", required=True)
    f.add_argument("--out", required=True)
    _add_schema(f)
    _add_sampler(f)
    f.set_defaults(func=cmd_fit)

    t = sub.add_parser("test", help="run the per-metric and overall equivalence test")
    t.add_argument("--reference", required=True)
    t.add_argument("--synthetic", required=True)
    t.add_argument("--ref-model", default=None, help="model file from `fit` for the reference")
    t.add_argument("--syn-model", default=None, help="model file from `fit` for the synthetic data")
    t.add_argument("--out", required=True)
    t.add_argument("--plot-data", default=None, metavar="DIR")
    t.add_argument("--per-draw", action="store_true", help="also export per-draw statistics")
    _add_schema(t)
    _add_sampler(t)
    _add_rope(t)
    t.set_defaults(func=cmd_test)

    r = sub.add_parser("reweight", help="write corrected sample weights")
    r.add_argument("--mode", choices=("scm", "knn"), required=True)
    r.add_argument("--seeds", help="scm: seed table (seed_id, weight, n_sim[, n_crash])")
    r.add_argument("--crashes", help="scm: crash table with a seed_id column")
    r.add_argument("--seed-col", default="seed_id")
    r.add_argument("--input", help="knn: synthetic data file")
    r.add_argument("--reference", help="knn: reference data file")
    r.add_argument("--on", help="knn: alignment metric column")
    r.add_argument("--k", type=int, default=20)
    r.add_argument("--weight-col", default="weight")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_reweight)

    w = sub.add_parser("power", help="bootstrap power of the equivalence test")
    w.add_argument("--parent", required=True)
    w.add_argument("--reference", required=True)
    w.add_argument("--reps", type=int, default=None)
    w.add_argument("--full", action="store_true", help=f"{FULL_REPS} replicates with full-length chains")
    w.add_argument("--replicate-size", type=int, default=None)
    w.add_argument("--out", required=True)
    _add_schema(w)
    _add_sampler(w)
    _add_rope(w)
    w.set_defaults(func=cmd_power, warmup=DESK_SAMPLER.warmup, draws=DESK_SAMPLER.draws)

    d = sub.add_parser("diagnose", help="per-bin contribution table from a test report")
    d.add_argument("--report", required=True)
    d.add_argument("--metrics", "--metric", dest="metrics", type=_csv_list, default=None)
    d.add_argument("--sort", choices=("theta", "big_theta"), default="theta")
    d.add_argument("--top", type=int, default=None)
    d.add_argument("--out", default=None, help="CSV output (prints a table otherwise)")
    d.set_defaults(func=cmd_diagnose)
    return p


def _peek(argv, flag):
    for i, tok in enumerate(argv):
        if tok == flag and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith(flag + "="):
            return tok.split("=", 1)[1]
    return None


def _apply_config(parser: argparse.ArgumentParser, argv, values: dict[str, str]) -> None:
    subs = parser._subparsers._group_actions[0].choices
    command = next((tok for tok in argv if tok in subs), None)
    actions = list(parser._actions) + (list(subs[command]._actions) if command else [])
    by_dest = {a.dest: a for a in actions if a.dest != "help"}
    unknown = sorted(set(values) - set(by_dest))
    if unknown:
        raise CliError(f"unknown config key(s): {', '.join(unknown)}")
    for key, text in values.items():
        a = by_dest[key]
        if isinstance(a, argparse._StoreTrueAction):
            a.default = text.lower() in ("1", "true", "yes", "on")
        elif a.choices is not None and text not in a.choices:
            raise CliError(f"config key {key}: {text!r} not in {', '.join(map(str, a.choices))}")
        else:
            try:
                a.default = a.type(text) if a.type is not None else text
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise CliError(f"config key {key}: {exc}") from None
        a.required = False


def parse_args(argv=None) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    path = _peek(argv, "--config")
    if path:
        _apply_config(parser, argv, read_config(path))
    return parser.parse_args(argv)


# -- helpers ------------------------------------------------------------------


def _resolved(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in _VOLATILE}


def _require_seed(args) -> int:
    if args.seed is None:
        args.seed = _env_seed()
    if args.seed is None:
        raise CliError(f"a seed is required: pass --seed, set it in --config or export {SEED_ENV}")
    return args.seed


def _sampler(args, threads: int) -> SamplerConfig:
    return SamplerConfig(chains=args.chains, warmup=args.warmup, draws=args.draws, seed=args.seed, threads=threads)


def _rope(args) -> RopeConfig:
    return RopeConfig(
        alpha=args.alpha,
        tol_rel=args.tol_rel,
        tol_abs=args.tol_abs,
        m=args.m,
        N_max=args.n_max,
        overall_rule=args.rule,
        critical=tuple(args.critical),
    )


def _bw(args) -> BinWeightConfig:
    return BinWeightConfig(P0=args.p0, epsilon=args.epsilon)


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_safe(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_json(path, obj) -> None:
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_json_safe(obj), indent=2, allow_nan=False) + "\n", encoding="utf-8")


def _schema(args, role: str, metrics=None) -> Schema:
    return Schema(
        metrics=metrics or args.metrics,
        weight=args.weight_col,
        outcome=args.outcome_col,
        id=args.id_col,
        role=role,
    )


def _load(path, args, role):
    if not args.metrics:
        raise CliError("name at least one metric with --metrics")
    return {d.metric_id: d for d in load_datasets(path, _schema(args, role))}


def _load_models(path) -> dict[str, FittedModel]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    out = {}
    for metric, entry in data.get("models", {}).items():
        if entry.get("selected") is not None:
            out[metric] = FittedModel.from_dict(entry["selected"])
    return out


def _fit_metric(d, args, threads):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fit_and_select(d, args.families, _sampler(args, threads), normalize=args.normalize)


# -- commands -----------------------------------------------------------------


def cmd_fit(args) -> int:
    if args.seed is None:
        args.seed = _env_seed() or 0
    data = _load(args.input, args, REFERENCE)
    models, code = {}, EXIT_OK
    for metric, d in data.items():
        try:
            best, table = _fit_metric(d, args, args.threads)
            models[metric] = {"selected": best.to_dict(), "candidates": table}
        except NoConvergedModelError as exc:
            models[metric] = {"selected": None, "error": str(exc)}
            code = EXIT_NONCONVERGED
    write_json(args.out, {"command": "fit", "config": _resolved(args), "models": models})
    for metric, entry in models.items():
        sel = entry["selected"]
        print(f"{metric}: {sel['family'] if sel else 'no converged family'}")
    return code


def cmd_test(args) -> int:
    _require_seed(args)
    ref = _load(args.reference, args, REFERENCE)
    syn = _load(args.synthetic, args, SYNTHETIC)
    missing = [m for m, d in ref.items() if not d.has_outcomes]
    if missing:
        raise CliError(f"reference needs the outcome column {args.outcome_col!r} for: {', '.join(missing)}")
    rope, bw = _rope(args), _bw(args)
    pre_ref = _load_models(args.ref_model) if args.ref_model else {}
    pre_syn = _load_models(args.syn_model) if args.syn_model else {}
    results, fits, failed = [], {}, []
    for metric in args.metrics:
        try:
            mr = pre_ref.get(metric) or _fit_metric(ref[metric], replace_seed(args, 0), args.threads)[0]
            if metric in pre_syn:
                ms = pre_syn[metric]
            elif _same_data(ref[metric], syn[metric]):
                # identical data has an identical posterior: reuse the draws
                ms = mr
            else:
                ms = _fit_metric(syn[metric], replace_seed(args, 1), args.threads)[0]
        except NoConvergedModelError as exc:
            failed.append(metric)
            fits[metric] = {"error": str(exc)}
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = run_metric_test(mr, ms, ref[metric], rope, bw)
        results.append(res)
        fits[metric] = {"reference": mr.summary(), "synthetic": ms.summary()}
        if args.plot_data:
            write_plot_data(args.plot_data, mr, ms, res, per_draw=args.per_draw)
    extra = {"run": _resolved(args), "sampler": sampler_config_dict(_sampler(args, 1))}
    if results:
        report = build_report(results, overall_verdict(results, rope) if not failed else _failed_verdict(results, failed, rope), rope, bw, extra)
    else:
        report = {"config": extra, "metrics": [], "overall": {"equivalent": False, "nonconverged": failed}}
    report["command"] = "test"
    report["fits"] = fits
    write_json(args.out, report)
    for res in results:
        for row in res.table_rows():
            lo, hi = row["hdi"]
            print(f"{row['metric']:>12} {row['statistic']:>5}  ROPE [0, {row['rope'][1]:.3g}]  HDI [{lo:.3f}, {hi:.3f}]  {row['equivalent']}")
    if failed:
        print(f"no converged model for: {', '.join(failed)}")
        return EXIT_NONCONVERGED
    ok = report["overall"]["equivalent"]
    print("overall:", "equivalent" if ok else "not equivalent")
    return EXIT_OK if ok else EXIT_NOT_EQUIVALENT


def _same_data(a, b) -> bool:
    return np.array_equal(a.values, b.values) and np.array_equal(a.weights, b.weights)


def _failed_verdict(results, failed, rope):
    v = overall_verdict(results, replace(rope, overall_rule="all_metrics", critical=()))
    return replace(v, equivalent=False, blocking_failures=v.blocking_failures + tuple(failed))


def replace_seed(args, role_index: int):
    """Namespace copy whose seed is derived from the run seed and the data role."""
    ns = argparse.Namespace(**vars(args))
    ns.seed = int(np.random.SeedSequence([args.seed, role_index]).generate_state(1, dtype=np.uint32)[0])
    return ns


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_reweight(args) -> int:
    if args.mode == "scm":
        if not args.seeds:
            raise CliError("scm mode needs --seeds")
        _, seed_rows = load_table(args.seeds)
        crash_header, crash_rows = load_table(args.crashes) if args.crashes else (None, None)
        counts = {}
        if crash_rows is not None:
            if args.seed_col not in crash_header:
                raise CliError(f"{args.crashes}: no {args.seed_col!r} column")
            for _, row in crash_rows:
                counts[row[args.seed_col]] = counts.get(row[args.seed_col], 0) + 1
        seeds = []
        for row_no, row in seed_rows:
            sid = row[args.seed_col]
            try:
                omega = float(row[args.weight_col])
                n_sim = int(row["n_sim"])
                n_crash = counts.get(sid, 0) if crash_rows is not None else int(row["n_crash"])
            except (KeyError, ValueError) as exc:
                raise CliError(f"{args.seeds} row {row_no}: {exc}") from None
            seeds.append(ScmSeedRecord(sid, omega, n_sim, n_crash))
        unknown = set(counts) - {s.seed_id for s in seeds}
        if unknown:
            raise CliError(f"crashes reference unknown seed(s): {', '.join(sorted(unknown))}")
        res = scm_resim_weights(seeds)
        per_seed = res.as_dict()
        if crash_rows is not None:
            header = list(crash_header) + ([args.weight_col] if args.weight_col not in crash_header else [])
            rows = []
            for _, row in crash_rows:
                row = dict(row)
                row[args.weight_col] = repr(per_seed[row[args.seed_col]])
                rows.append([row.get(h, "") for h in header])
        else:
            header = [args.seed_col, "n_crash", args.weight_col]
            rows = [[s, int(n), repr(float(w))] for s, n, w in zip(res.seed_ids, res.n_crash, res.weight)]
        _write_rows(args.out, header, rows)
        print(f"{res.total} crashes, weight sum {res.weight_sum():.12g}")
        return EXIT_OK

    if not (args.input and args.reference and args.on):
        raise CliError("knn mode needs --input, --reference and --on")
    schema = Schema(metrics=[args.on], weight=args.weight_col, outcome=None)
    syn = load_datasets(args.input, replace(schema, role=SYNTHETIC))[0]
    ref = load_datasets(args.reference, schema)[0]
    new = knn_reweight(syn, ref, args.k)
    header, rows = load_table(args.input)
    header = list(header) + ([args.weight_col] if args.weight_col not in header else [])
    out = []
    for (_, row), w in zip(rows, new.weights):
        row = dict(row)
        row[args.weight_col] = repr(float(w))
        out.append([row.get(h, "") for h in header])
    _write_rows(args.out, header, out)
    print(f"{new.n} weights written, sum {float(new.weights.sum()):.12g}")
    return EXIT_OK


def cmd_power(args) -> int:
    _require_seed(args)
    reps = args.reps or (FULL_REPS if args.full else DESK_REPS)
    if args.full:
        args.warmup, args.draws = max(args.warmup, 1000), max(args.draws, 1000)
    args.reps = reps
    parent = list(_load(args.parent, args, SYNTHETIC).values())
    ref = list(_load(args.reference, args, REFERENCE).values())
    missing = [d.metric_id for d in ref if not d.has_outcomes]
    if missing:
        raise CliError(f"reference needs the outcome column {args.outcome_col!r} for: {', '.join(missing)}")
    sampler = _sampler(args, 1)
    size = args.replicate_size or parent[0].n
    res = bootstrap_power(
        parent,
        ref,
        size,
        reps,
        _rope(args),
        _bw(args),
        args.seed,
        families=args.families,
        sampler=sampler,
        threads=args.threads,
    )
    report = {
        "command": "power",
        "config": {
            "run": _resolved(args),
            "power": power_config_dict(reps, size, args.seed, args.families, sampler),
            "rope": _rope(args).to_dict(),
            "bin_weight": asdict(_bw(args)),
        },
        **res.to_dict(),
    }
    write_json(args.out, report)
    for row in res.rows():
        lo, hi = row["wilson_ci"]
        print(f"{row['metric']:>12} {row['statistic']:>5}  power {row['power']:.3f}  [{lo:.3f}, {hi:.3f}]")
    return EXIT_NONCONVERGED if any(res.nonconverged.values()) else EXIT_OK


def cmd_diagnose(args) -> int:
    report = json.loads(Path(args.report).read_text(encoding="utf-8"))
    key = "theta_contrib_mean" if args.sort == "theta" else "big_theta_contrib_mean"
    header = ["metric", "bin", "theta_contrib", "theta_lo", "theta_hi", "big_theta_contrib", "big_theta_lo", "big_theta_hi"]
    rows = []
    for entry in report.get("metrics", []):
        if args.metrics and entry["metric"] not in args.metrics:
            continue
        diag = sorted(entry.get("bin_diagnostics", []), key=lambda r: (-r[key], r["bin"]))
        for r in diag[: args.top] if args.top else diag:
            th = r["theta_contrib_hdi"] or [None, None]
            bt = r["big_theta_contrib_hdi"] or [None, None]
            rows.append([entry["metric"], r["bin"], r["theta_contrib_mean"], *th, r["big_theta_contrib_mean"], *bt])
    if not rows:
        raise CliError("report holds no bin diagnostics for the requested metric(s)")
    if args.out:
        _write_rows(args.out, header, [[repr(v) if isinstance(v, float) else v for v in r] for r in rows])
    else:
        print("  ".join(f"{h:>12}" for h in header))
        for r in rows:
            print("  ".join(f"{v:>12.4g}" if isinstance(v, float) else f"{str(v):>12}" for v in r))
    return EXIT_OK


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        return args.func(args)
    except (CliError, DatasetError, ValueError, OSError, json.JSONDecodeError, configparser.Error) as exc:
        print(f"binequiv: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
