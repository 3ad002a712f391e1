"""Command-line interface: fit, compare, wchisq, and simulate.

Every JSON report embeds a run manifest (command line, configuration
hash, seed, package versions, timestamps, and input-file digests) so a
result can be traced back to the exact invocation that produced it.

Exit codes: 0 on success, 1 for input errors (bad files, bad flags,
unparseable models or data), 2 for numerical failures (non-convergence,
degenerate comparisons).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import shlex
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy
from scipy import stats

from . import __version__, simlab
from .dsl import ModelError, parse_model
from .resampling import bootstrap_ic_ci
from .sem import (
    DataError,
    Dataset,
    FitError,
    fit_ml,
    information_criteria,
    unit_information,
)
from .vuong import DegenerateComparisonError, sequential_compare
from .wchisq import WeightedChiSq

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NUMERIC = 2

_PROG = "semvuong"


class UsageError(Exception):
    """Malformed command line; mapped to exit code 1."""


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of calling sys.exit(2)."""

    def error(self, message):
        raise UsageError(message)


# -- run manifest ------------------------------------------------------


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


def _sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def make_manifest(argv, config: dict, seed: int, input_paths, started: str) -> dict:
    """Provenance block embedded in every report.

    The config hash covers the statistical configuration only, not the
    output destination, so reruns with a different --out hash the same.
    """
    canon = json.dumps(config, sort_keys=True, default=str)
    return {
        "command": " ".join([_PROG] + [shlex.quote(str(a)) for a in argv]),
        "config_hash": hashlib.sha256(canon.encode("utf-8")).hexdigest(),
        "seed": int(seed),
        "versions": {
            "semvuong": __version__,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "timestamps": {"started": started, "finished": _now()},
        "inputs": {str(p): _sha256_file(p) for p in input_paths},
    }


# -- report plumbing ---------------------------------------------------


def _num(value):
    """float for JSON output; None for missing or non-finite values."""
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else None


def _emit(report: dict, summary: str, out) -> None:
    """JSON to --out (summary to stdout), else JSON to stdout and the
    summary to stderr so piped output stays machine-readable."""
    text = json.dumps(report, indent=2, allow_nan=False) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
        print(summary)
    else:
        sys.stdout.write(text)
        print(summary, file=sys.stderr)


def _read_model(path, means: bool):
    text = Path(path).read_text(encoding="utf-8")
    return parse_model(text, meanstructure=True if means else None)


def _standard_errors(fit):
    """Sandwich-free SEs from the observed information; None entries
    where the information matrix is not usable."""
    try:
        info = unit_information(fit) * fit.n
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        return [None] * fit.k
    return [float(np.sqrt(v)) if v > 0.0 else None for v in np.diag(cov)]


# -- fit ---------------------------------------------------------------


def cmd_fit(args, argv) -> int:
    started = _now()
    spec = _read_model(args.model, args.means)
    data = Dataset.from_csv(args.data)
    fit = fit_ml(spec, data, max_iter=args.max_iter)
    aic, bic = information_criteria(fit)
    ses = _standard_errors(fit)

    config = {
        "cmd": "fit",
        "model": str(args.model),
        "data": str(args.data),
        "means": bool(args.means),
        "max_iter": args.max_iter,
    }
    report = {
        "model": str(args.model),
        "data": str(args.data),
        "n": fit.n,
        "k": fit.k,
        "p": spec.p,
        "converged": fit.converged,
        "iterations": fit.iterations,
        "loglik": _num(fit.loglik_total),
        "aic": _num(aic),
        "bic": _num(bic),
        "parameters": [
            {"name": name, "estimate": _num(est), "se": _num(se)}
            for name, est, se in zip(fit.param_names, fit.theta_hat, ses)
        ],
        "manifest": make_manifest(argv, config, args.seed,
                                  [args.model, args.data], started),
    }

    width = max(len(name) for name in fit.param_names)
    lines = [
        f"{args.model}: {'converged' if fit.converged else 'DID NOT CONVERGE'}"
        f" in {fit.iterations} iterations (n={fit.n}, k={fit.k})",
        f"loglik = {fit.loglik_total:.6f}   AIC = {aic:.3f}   BIC = {bic:.3f}",
    ]
    for name, est, se in zip(fit.param_names, fit.theta_hat, ses):
        se_txt = f"{se:.4f}" if se is not None else "NA"
        lines.append(f"  {name:<{width}}  {est: .6f}  (se {se_txt})")
    _emit(report, "\n".join(lines), args.out)
    return EXIT_OK if fit.converged else EXIT_NUMERIC


# -- compare -----------------------------------------------------------


def cmd_compare(args, argv) -> int:
    started = _now()
    spec_a = _read_model(args.model_a, args.means)
    spec_b = _read_model(args.model_b, args.means)
    data = Dataset.from_csv(args.data)

    fit_a = fit_ml(spec_a, data, max_iter=args.max_iter)
    fit_b = fit_ml(spec_b, data, max_iter=args.max_iter)
    if not (fit_a.converged and fit_b.converged):
        which = args.model_a if not fit_a.converged else args.model_b
        print(f"{_PROG}: error: fit of {which} did not converge",
              file=sys.stderr)
        return EXIT_NUMERIC

    variant = "nested" if args.nested else "non-nested"
    res = sequential_compare(fit_a, fit_b, data, alpha1=args.alpha,
                             alpha2=args.alpha, variant=variant,
                             criterion=args.criterion, ci_level=args.ci_level)

    nested_block = None
    if args.nested:
        # Classical difference test: 2 * sum(d_i) against chi2(k - q).
        lr_stat = 2.0 * math.sqrt(res.n) * res.lr_ab
        p_classical = float(stats.chi2(res.k - res.q).sf(max(lr_stat, 0.0)))
        nested_block = {
            "p_variance": _num(res.p_nested_variance),
            "p_lr": _num(res.p_nested_lr),
            "p_classical": _num(p_classical),
        }

    ic = {
        "aic_diff": _num(res.ic_diff[0]),
        "bic_diff": _num(res.ic_diff[1]),
        "ci": [_num(res.ic_ci[0]), _num(res.ic_ci[1])],
        "alpha": 1.0 - args.ci_level,
        "criterion": res.criterion,
    }
    if args.bootstrap:
        lo, hi = bootstrap_ic_ci(spec_a, spec_b, data, reps=args.bootstrap,
                                 alpha=1.0 - args.ci_level, seed=args.seed,
                                 criterion=args.criterion,
                                 max_iter=args.max_iter)
        ic["boot_ci"] = [_num(lo), _num(hi)]
        ic["boot_reps"] = args.bootstrap

    config = {
        "cmd": "compare",
        "models": [str(args.model_a), str(args.model_b)],
        "data": str(args.data),
        "alpha": args.alpha,
        "ci_level": args.ci_level,
        "variant": variant,
        "criterion": args.criterion,
        "bootstrap": args.bootstrap,
        "means": bool(args.means),
        "max_iter": args.max_iter,
    }
    report = {
        "models": {"a": str(args.model_a), "b": str(args.model_b)},
        "n": res.n,
        "k": res.k,
        "q": res.q,
        "omega_hat_sq": _num(res.omega_hat_sq),
        "eigenvalues": [float(v) for v in res.w_eigenvalues],
        "p_distinguish": _num(res.p_distinguish),
        "lr": _num(res.lr_ab),
        "z": _num(res.z_lrt),
        "p_one": _num(res.p_lrt_one_sided),
        "p_two": _num(res.p_lrt_two_sided),
        "ic": ic,
        "decision": res.decision,
        "variant": res.variant,
        "alpha": args.alpha,
        "lrt_applicable": res.lrt_applicable,
        "nested": nested_block,
        "manifest": make_manifest(argv, config, args.seed,
                                  [args.model_a, args.model_b, args.data],
                                  started),
    }

    crit = res.criterion.upper()
    diff = res.ic_diff[0] if res.criterion == "aic" else res.ic_diff[1]
    z_txt = f"{res.z_lrt:.4f}" if res.z_lrt is not None else "NA"
    p2_txt = f"{res.p_lrt_two_sided:.4g}" if res.p_lrt_two_sided is not None else "NA"
    lines = [
        f"A: {args.model_a} (k={res.k})   B: {args.model_b} (q={res.q})   n={res.n}",
        f"omega^2 = {res.omega_hat_sq:.6g}   distinguishability p = {res.p_distinguish:.4g}",
        f"z = {z_txt}   two-sided p = {p2_txt}",
        f"{crit} difference (A - B) = {diff:.3f}   "
        f"{100 * args.ci_level:.0f}% CI [{res.ic_ci[0]:.3f}, {res.ic_ci[1]:.3f}]",
    ]
    if args.bootstrap:
        lines.append(
            f"bootstrap CI [{ic['boot_ci'][0]:.3f}, {ic['boot_ci'][1]:.3f}] "
            f"({args.bootstrap} resamples)"
        )
    if nested_block is not None:
        lines.append(
            f"nested tests: variance p = {nested_block['p_variance']:.4g}, "
            f"LR p = {nested_block['p_lr']:.4g}, "
            f"classical p = {nested_block['p_classical']:.4g}"
        )
    lines.append(f"decision: {res.decision}")
    _emit(report, "\n".join(lines), args.out)
    return EXIT_OK


# -- wchisq ------------------------------------------------------------


def cmd_wchisq(args, argv) -> int:
    started = _now()
    try:
        weights = [float(tok) for tok in args.weights.split(",") if tok.strip()]
    except ValueError:
        raise UsageError(f"--weights must be comma-separated numbers, "
                         f"got {args.weights!r}") from None
    dist = WeightedChiSq(weights)
    cdf = dist.cdf(args.x)

    config = {"cmd": "wchisq", "weights": weights, "x": args.x}
    report = {
        "weights": weights,
        "x": float(args.x),
        "cdf": _num(cdf),
        "upper_p": _num(dist.upper_p(args.x)),
        "manifest": make_manifest(argv, config, args.seed, [], started),
    }
    _emit(report, f"P(Q <= {args.x:g}) = {cdf:.6f}", args.out)
    return EXIT_OK


# -- simulate ----------------------------------------------------------


def _int_list(text):
    return tuple(int(tok) for tok in text.split(",") if tok.strip())


def _float_list(text):
    return tuple(float(tok) for tok in text.split(",") if tok.strip())


def _str_list(text):
    return tuple(tok.strip() for tok in text.split(",") if tok.strip())


def cmd_simulate(args, argv) -> int:
    started = _now()
    study = args.study
    full = args.full_scale
    if args.d is not None and study == 2:
        raise UsageError("--d applies to studies 1 and 3")
    if args.pairs is not None and study != 2:
        raise UsageError("--pairs applies to study 2 only")
    if args.bootstrap is not None and study == 3:
        raise UsageError("--bootstrap applies to studies 1 and 2")

    outdir = Path(args.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    prefix = f"sim{study}"

    from .plots import plot_interval_summary, plot_power_curves

    config = {
        "cmd": "simulate",
        "study": study,
        "alpha": args.alpha,
        "ci_level": args.ci_level,
        "threads": args.threads,
        "full_scale": full,
    }

    if study == 1:
        reps = args.reps if args.reps is not None else (3000 if full else 1000)
        boot = args.bootstrap if args.bootstrap is not None else (1000 if full else 0)
        n_levels = args.n or (200, 500, 1000)
        d_levels = args.d or (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
        config.update(reps=reps, bootstrap=boot, n=list(n_levels),
                      d=list(d_levels))
        summaries = simlab.run_sim1(n_levels, d_levels, reps=reps,
                                    seed=args.seed, alpha=args.alpha,
                                    ci_level=args.ci_level, boot_reps=boot,
                                    threads=args.threads)
        tables = [("power.tsv", simlab.write_power_tsv),
                  ("intervals.tsv", simlab.write_interval_tsv)]
        figures = [("power.png", lambda s, p: plot_power_curves(s, p, alpha=args.alpha)),
                   ("intervals.png", lambda s, p: plot_interval_summary(s, p, nominal=args.ci_level))]
    elif study == 2:
        reps = args.reps if args.reps is not None else 1000
        boot = args.bootstrap if args.bootstrap is not None else 1000
        n_levels = args.n or (200, 1000)
        pairs = args.pairs or ("A-B", "B-C", "C-A")
        config.update(reps=reps, bootstrap=boot, n=list(n_levels),
                      pairs=list(pairs))
        summaries = simlab.run_sim2(n_levels, reps=reps, seed=args.seed,
                                    pairs=pairs, boot_reps=boot,
                                    ci_level=args.ci_level,
                                    threads=args.threads)
        tables = [("intervals.tsv", simlab.write_interval_tsv)]
        figures = [("intervals.png", lambda s, p: plot_interval_summary(s, p, nominal=args.ci_level))]
    else:
        reps = args.reps if args.reps is not None else 1000
        n_levels = args.n or (200, 500, 1000)
        d_levels = args.d or (0.0, 0.025, 0.05, 0.075, 0.1, 0.125)
        config.update(reps=reps, n=list(n_levels), d=list(d_levels))
        summaries = simlab.run_sim3(n_levels, d_levels, reps=reps,
                                    seed=args.seed, alpha=args.alpha,
                                    threads=args.threads)
        tables = [("power.tsv", simlab.write_power_tsv)]
        figures = [("power.png", lambda s, p: plot_power_curves(s, p, alpha=args.alpha))]

    outputs = []
    for suffix, writer in tables:
        path = outdir / f"{prefix}_{suffix}"
        writer(summaries, path)
        outputs.append(path.name)
    if not args.no_plots:
        for suffix, renderer in figures:
            path = outdir / f"{prefix}_{suffix}"
            renderer(summaries, path)
            outputs.append(path.name)

    payload = {
        "manifest": make_manifest(argv, config, args.seed, [], started),
        "config": config,
        "outputs": outputs,
    }
    manifest_path = outdir / f"{prefix}_manifest.json"
    simlab.write_manifest_json(manifest_path, payload)

    for name in outputs + [manifest_path.name]:
        print(f"wrote {outdir / name}")
    return EXIT_OK


# -- wiring ------------------------------------------------------------


def _add_fit_options(parser) -> None:
    parser.add_argument("--means", action="store_true",
                        help="model the mean structure explicitly")
    parser.add_argument("--max-iter", type=int, default=500, metavar="N",
                        help="optimizer iteration cap (default 500)")
    parser.add_argument("--seed", type=int, default=1, metavar="N",
                        help="seed recorded in the manifest and used for "
                             "any resampling (default 1)")
    parser.add_argument("--out", metavar="FILE",
                        help="write the JSON report here; the summary then "
                             "goes to stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog=_PROG,
                     description="Fit multivariate-normal structural "
                                 "equation models and compare them with "
                                 "Vuong-style tests.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="cmd", required=True,
                                metavar="{fit,compare,wchisq,simulate}")

    fit_p = sub.add_parser("fit", help="fit one model by maximum likelihood")
    fit_p.add_argument("model", help="model definition file")
    fit_p.add_argument("data", help="headered numeric CSV")
    _add_fit_options(fit_p)
    fit_p.set_defaults(func=cmd_fit)

    cmp_p = sub.add_parser("compare",
                           help="distinguishability test, LRT, and "
                                "information-criterion interval for two models")
    cmp_p.add_argument("model_a", help="first model definition file")
    cmp_p.add_argument("model_b", help="second model definition file")
    cmp_p.add_argument("data", help="headered numeric CSV")
    _add_fit_options(cmp_p)
    cmp_p.add_argument("--alpha", type=float, default=0.05,
                       help="level for both test stages (default 0.05)")
    cmp_p.add_argument("--ci-level", type=float, default=0.90,
                       dest="ci_level", metavar="LEVEL",
                       help="confidence level for the IC-difference "
                            "interval (default 0.90)")
    cmp_p.add_argument("--nested", action="store_true",
                       help="treat model_a as the full model and model_b "
                            "as nested inside it")
    cmp_p.add_argument("--criterion", choices=("aic", "bic"), default="bic",
                       help="criterion centering the interval (default bic)")
    cmp_p.add_argument("--bootstrap", type=int, default=0, metavar="REPS",
                       help="add a percentile bootstrap interval with this "
                            "many resamples")
    cmp_p.set_defaults(func=cmd_compare)

    w_p = sub.add_parser("wchisq",
                         help="CDF of a weighted sum of chi-square(1) variables")
    w_p.add_argument("--weights", required=True, metavar="W1,W2,...",
                     help="comma-separated weights")
    w_p.add_argument("--x", required=True, type=float,
                     help="evaluation point")
    w_p.add_argument("--seed", type=int, default=1, help=argparse.SUPPRESS)
    w_p.add_argument("--out", metavar="FILE",
                     help="write the JSON report here")
    w_p.set_defaults(func=cmd_wchisq)

    s_p = sub.add_parser("simulate",
                         help="run one of the three bundled simulation studies")
    s_p.add_argument("study", type=int, choices=(1, 2, 3),
                     help="1 overlapping CFAs, 2 interval calibration, "
                          "3 nested tests")
    s_p.add_argument("--reps", type=int, metavar="N",
                     help="replications per condition (default 1000; "
                          "study 1 full scale 3000)")
    s_p.add_argument("--n", type=_int_list, metavar="N1,N2,...",
                     help="sample sizes (default: the study's full grid)")
    s_p.add_argument("--d", type=_float_list, metavar="D1,D2,...",
                     help="effect grid for studies 1 and 3")
    s_p.add_argument("--pairs", type=_str_list, metavar="P1,P2,...",
                     help="study-2 model pairs (default A-B,B-C,C-A)")
    s_p.add_argument("--bootstrap", type=int, metavar="REPS",
                     help="bootstrap resamples per replication "
                          "(study 1 default 0, study 2 default 1000)")
    s_p.add_argument("--alpha", type=float, default=0.05,
                     help="test level for rejection counts (default 0.05)")
    s_p.add_argument("--ci-level", type=float, default=0.90, dest="ci_level",
                     metavar="LEVEL",
                     help="interval confidence level (default 0.90)")
    s_p.add_argument("--seed", type=int, default=1, metavar="N",
                     help="base seed for all replicate streams (default 1)")
    s_p.add_argument("--threads", type=int, default=1, metavar="N",
                     help="worker processes (default 1)")
    s_p.add_argument("--full-scale", action="store_true", dest="full_scale",
                     help="use the published replication counts")
    s_p.add_argument("--no-plots", action="store_true", dest="no_plots",
                     help="skip figure rendering")
    s_p.add_argument("--out-dir", default=".", dest="out_dir", metavar="DIR",
                     help="directory for tables, figures, and the manifest "
                          "(default .)")
    s_p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args, argv)
    except UsageError as exc:
        print(f"{_PROG}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ModelError, DataError, OSError, ValueError) as exc:
        print(f"{_PROG}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (FitError, DegenerateComparisonError, np.linalg.LinAlgError) as exc:
        print(f"{_PROG}: error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    raise SystemExit(main())
