"""Batch command line: ``spatialecon <command> [options]``.

Exit status: 0 on success, 2 for bad input or usage, 3 when a
computation fails numerically.
"""

from __future__ import annotations

import argparse
import secrets
import sys
from dataclasses import replace

import numpy as np

from . import __version__, autocorr, io, models, simulate
from .errors import InputError, NumericalError, ParseError
from .geometry import build_distance_matrix
from .weights import KIND_ALIASES, WeightsSpec, guideline_hint, row_standardize, transform

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _names(text: str) -> tuple:
    names = tuple(v.strip() for v in text.split(",") if v.strip())
    if not names:
        raise argparse.ArgumentTypeError("expected at least one name")
    return names


def _lattice(text: str) -> simulate.Lattice:
    try:
        r, c = text.lower().split("x")
        return simulate.Lattice(int(r), int(c))
    except ValueError:
        raise argparse.ArgumentTypeError(f"lattice must look like 20x20, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="spatialecon", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    w = sub.add_parser("weights", help="build a spatial weights file from point coordinates")
    w.add_argument("--input", required=True)
    w.add_argument("--metric", choices=("euclidean", "manhattan"), default="euclidean")
    w.add_argument("--transform", choices=tuple(KIND_ALIASES), required=True)
    w.add_argument("--threshold", type=float)
    w.add_argument("--gamma", type=float)
    w.add_argument("--standardize", action=argparse.BooleanOptionalAction, default=True,
                   help="row-standardize (default: yes)")
    w.add_argument("--output", required=True)
    w.add_argument("--hint-region", choices=("large", "small"))
    w.add_argument("--hint-local", action="store_true")
    w.add_argument("--json")

    m = sub.add_parser("moran", help="global Moran's I test")
    m.add_argument("--input", required=True)
    m.add_argument("--weights", required=True)
    m.add_argument("--var", required=True)
    m.add_argument("--alternative", choices=("two-sided", "greater", "less"), default="two-sided")
    m.add_argument("--permutations", type=int, default=0)
    m.add_argument("--seed", type=int)
    m.add_argument("--json")

    lisa = sub.add_parser("lisa", help="local Moran statistics")
    lisa.add_argument("--input", required=True)
    lisa.add_argument("--weights", required=True)
    lisa.add_argument("--var", required=True)
    lisa.add_argument("--alpha", type=float, default=0.05)
    lisa.add_argument("--bonferroni", action="store_true")
    lisa.add_argument("--permutations", type=int, default=0)
    lisa.add_argument("--seed", type=int)
    lisa.add_argument("--json")

    f = sub.add_parser("fit", help="fit a spatial regression model")
    f.add_argument("--input", required=True)
    f.add_argument("--weights", required=True)
    f.add_argument("--model", choices=("slx", "sar", "sem", "sdm"), required=True)
    f.add_argument("--y", required=True, dest="response")
    f.add_argument("--x", required=True, type=_names, dest="regressors")
    f.add_argument("--no-intercept", action="store_true")
    f.add_argument("--effects", action="store_true")
    f.add_argument("--lr-against", choices=("ols", "slx", "sar"))
    f.add_argument("--wald", action="store_true")
    f.add_argument("--json")

    def dgp_args(sp):
        sp.add_argument("--model", choices=simulate.DGP_FAMILIES, required=True)
        sp.add_argument("--rho", type=float, default=0.0)
        sp.add_argument("--lambda", type=float, default=0.0, dest="lam")
        sp.add_argument("--beta", type=_floats, default=(1.0, 2.0))
        sp.add_argument("--gamma", type=_floats)
        sp.add_argument("--sigma", type=float, default=1.0)
        sp.add_argument("--lattice", type=_lattice, default=simulate.Lattice(20, 20))
        sp.add_argument("--threshold", type=float, default=1.0,
                        help="connectivity cut-off on the unit lattice (1 = rook, 1.5 = queen)")
        sp.add_argument("--seed", type=int)

    s = sub.add_parser("simulate", help="draw a synthetic data set")
    dgp_args(s)
    s.add_argument("--output-prefix", required=True)
    s.add_argument("--json")

    r = sub.add_parser("recover", help="parameter recovery study over many seeds")
    dgp_args(r)
    r.add_argument("--seeds", type=int, default=100)
    r.add_argument("--output", help="CSV table path")
    r.add_argument("--json")
    return p


def _seed(args) -> int:
    return args.seed if args.seed is not None else secrets.randbits(32)


def _header(command, provenance):
    lines = [f"spatialecon {__version__} :: {command}"]
    lines += [f"  {k}: {v}" for k, v in provenance.items()]
    return "\n".join(lines)


def _emit(args, command, provenance, result, text):
    print(_header(command, provenance))
    print(text)
    if getattr(args, "json", None):
        io.write_json(args.json, {
            "tool": "spatialecon",
            "version": __version__,
            "command": command,
            "provenance": provenance,
            "result": result,
        })


def _load_pair(args):
    points = io.load_dataset(args.input)
    w = io.load_weights(args.weights)
    if w.n != points.n:
        raise InputError(f"weights file has N={w.n} but dataset has {points.n} rows")
    return points, replace(w, ids=points.ids)


def cmd_weights(args):
    points = io.load_dataset(args.input)
    spec = WeightsSpec(KIND_ALIASES[args.transform], threshold=args.threshold, gamma=args.gamma)
    w = transform(build_distance_matrix(points, args.metric), spec)
    if args.standardize:
        w = row_standardize(w)
    io.save_weights(args.output, w)
    prov = {"input": args.input, "output": args.output, "metric": args.metric,
            "transform": spec.kind, **spec.params(), "standardized": args.standardize}
    result = {"n": w.n, "nonzero": int(np.count_nonzero(w.values)), "s0": w.s0,
              "isolates": list(w.isolate_ids)}
    lines = [f"n = {w.n}", f"nonzero weights = {result['nonzero']}", f"s0 = {w.s0!r}",
             f"isolates = {len(w.isolates)}" + (f" ({', '.join(w.isolate_ids)})" if len(w.isolates) else "")]
    if args.hint_region or args.hint_local:
        hint = guideline_hint({"large": True, "small": False}.get(args.hint_region), args.hint_local)
        result["guidance"] = {"recommended": hint.recommended, "text": hint.text}
        lines += ["", "guidance:"] + [f"  {t}" for t in hint.text.splitlines()]
    _emit(args, "weights", prov, result, "\n".join(lines))


def cmd_moran(args):
    points, w = _load_pair(args)
    alt = args.alternative.replace("-", "_")
    rep = autocorr.moran_test(points[args.var], w, alt)
    prov = {"input": args.input, "weights": args.weights, "var": args.var, "alternative": alt,
            "weights_standardized": w.standardized}
    result = {"moran": rep.to_dict()}
    lines = [
        f"I          = {rep.I!r}",
        f"E[I]       = {rep.expected!r}",
        f"Var[I]     = {rep.variance!r}",
        f"z          = {rep.z!r}",
        f"p ({alt}) = {io.format_p(rep.p_value)}   [{rep.reference}]",
    ]
    if args.permutations:
        seed = _seed(args)
        prov["seed"] = seed
        perm = autocorr.permutation_test(points[args.var], w, "global", args.permutations, seed, alt)
        prov["rng"] = perm.rng
        result["permutation"] = perm.to_dict()
        lines += [
            f"permutations = {perm.draws}",
            f"pseudo p   = {io.format_p(perm.p_value)}",
            f"mean, sd of reference = {perm.mean!r}, {perm.sd!r}",
        ]
    _emit(args, "moran", prov, result, "\n".join(lines))


def cmd_lisa(args):
    points, w = _load_pair(args)
    rep = autocorr.lisa_test(points[args.var], w, args.alpha, args.bonferroni)
    prov = {"input": args.input, "weights": args.weights, "var": args.var, "alpha": args.alpha,
            "bonferroni": args.bonferroni, "weights_standardized": w.standardized}
    records = rep.records()
    perm = None
    if args.permutations:
        seed = _seed(args)
        prov["seed"] = seed
        perm = autocorr.permutation_test(points[args.var], w, "local", args.permutations, seed)
        prov["rng"] = perm.rng
        for rec, p in zip(records, perm.p_value):
            rec["pseudo_p"] = float(p)
    result = {
        "threshold": rep.threshold,
        "caveat": rep.caveat,
        "non_testable": [records[i]["id"] for i in rep.non_testable],
        "sites": records,
    }
    head = f"{'id':>10} {'I_i':>14} {'E[I_i]':>14} {'z':>9} {'p':>10}"
    if perm is not None:
        head += f" {'pseudo p':>10}"
    lines = [f"per-site threshold = {rep.threshold!r}" + (" (alpha / N)" if rep.bonferroni else ""), head]
    for rec in records:
        z = "n/a" if rec["z"] is None else f"{rec['z']:.4f}"
        row = (f"{rec['id']:>10} {rec['I']:>14.6g} {rec['expected']:>14.6g} {z:>9} "
               f"{io.format_p(rec['p_value']):>10}")
        if perm is not None:
            row += f" {io.format_p(rec['pseudo_p']):>10}"
        if rec["significant"]:
            row += " *"
        lines.append(row)
    lines.append(f"significant: {int(rep.significant.sum())} of {rep.n}; "
                 f"non-testable (no neighbours): {len(rep.non_testable)}")
    lines.append(f"note: {rep.caveat}")
    _emit(args, "lisa", prov, result, "\n".join(lines))


def _fit_text(fit):
    lines = [f"model: {fit.family}   n = {fit.n}"]
    errs = fit.std_errors()
    for name, value in fit.params().items():
        se = errs.get(name, float("nan"))
        lines.append(f"  {name:>12} = {value!r}  (se {se!r})")
    if fit.fixed:
        lines.append(f"  {fit.spatial_name} held fixed")
    lines.append(f"  sigma2 = {fit.sigma2!r}")
    lines.append(f"  loglik = {fit.loglik!r}")
    d = fit.diagnostics
    if d is not None:
        lines.append("residual checks:")
        mz = "n/a" if d.mean_zero.passed is None else ("ok" if d.mean_zero.passed else "FAIL")
        lines.append(f"  mean zero: |mean|/sd = {d.mean_zero.statistic!r} [{mz}]")
        h = d.homoscedastic
        lines.append(f"  homoscedasticity: nR2 = {h.statistic!r}, p = {io.format_p(h.p_value)} "
                     f"[{'ok' if h.passed else 'FAIL'}]")
        if d.residual_moran is not None:
            rm = d.residual_moran
            lines.append(f"  residual Moran: I = {rm.I!r}, z = {rm.z!r}, p = {io.format_p(rm.p_value)} "
                         f"[{'ok' if d.residual_moran_passed else 'FAIL'}]")
    return lines


def cmd_fit(args):
    points = io.load_dataset(args.input)
    if not args.weights:
        raise InputError(f"--weights is required for {args.model} models")
    w = io.load_weights(args.weights)
    if w.n != points.n:
        raise InputError(f"weights file has N={w.n} but dataset has {points.n} rows")
    w = replace(w, ids=points.ids)
    intercept = not args.no_intercept
    spec = models.ModelSpec(args.model, args.response, args.regressors, w, intercept)
    fit = models.fit(spec, points)
    prov = {"input": args.input, "weights": args.weights, "model": args.model,
            "y": args.response, "x": ",".join(args.regressors), "intercept": intercept}
    result = {"fit": fit.to_dict()}
    lines = _fit_text(fit)
    if args.effects:
        eff = models.marginal_effects(fit)
        result["effects"] = {k: v.summary() for k, v in eff.items()}
        lines.append("marginal effects (direct / indirect / total):")
        for k, v in eff.items():
            lines.append(f"  {k:>12}: {v.direct!r} / {v.indirect!r} / {v.total!r}")
    if args.lr_against:
        rspec = models.ModelSpec(args.lr_against, args.response, args.regressors,
                                 w if args.lr_against != "ols" else None, intercept)
        restricted = models.fit(rspec, points, diagnostics=False)
        lr = models.lr_test(fit, restricted)
        result["lr_test"] = {**lr.to_dict(), "restricted": args.lr_against,
                             "restricted_loglik": restricted.loglik}
        lines.append(f"LR vs {args.lr_against}: {lr.statistic!r} (df {lr.df}), p = {io.format_p(lr.p_value)}")
    if args.wald:
        wt = models.wald_test(fit)
        result["wald_test"] = wt.to_dict()
        lines.append(f"{wt.name}: {wt.statistic!r}, p = {io.format_p(wt.p_value)}")
    _emit(args, "fit", prov, result, "\n".join(lines))


def _dgp(args, seed):
    gamma = args.gamma if args.model in ("slx", "sdm") else None
    if args.model in ("slx", "sdm") and gamma is None:
        gamma = (0.5,) * (len(args.beta) - 1)
    return simulate.DgpSpec(
        family=args.model, beta=args.beta, gamma=gamma, rho=args.rho, lam=args.lam,
        sigma=args.sigma, layout=args.lattice, seed=seed,
    )


def _dgp_prov(dgp, threshold):
    return {"model": dgp.family, "beta": list(dgp.beta), "gamma": None if dgp.gamma is None else list(dgp.gamma),
            "rho": dgp.rho, "lambda": dgp.lam, "sigma": dgp.sigma,
            "lattice": f"{dgp.layout.rows}x{dgp.layout.cols}", "threshold": threshold,
            "seed": dgp.seed, "rng": simulate.RNG_DESCRIPTION}


def cmd_simulate(args):
    dgp = _dgp(args, _seed(args))
    wspec = WeightsSpec("connectivity", threshold=args.threshold)
    data = simulate.generate(dgp, wspec)
    csv_path = f"{args.output_prefix}.csv"
    w_path = f"{args.output_prefix}.weights"
    io.save_dataset(csv_path, data.points)
    io.save_weights(w_path, data.weights)
    prov = _dgp_prov(dgp, args.threshold)
    result = {"dataset": csv_path, "weights": w_path, "truth": data.truth,
              "response": simulate.RESPONSE, "regressors": list(dgp.regressors)}
    lines = [f"wrote {csv_path} ({data.points.n} rows)", f"wrote {w_path}",
             "truth: " + ", ".join(f"{k}={v!r}" for k, v in data.truth.items())]
    _emit(args, "simulate", prov, result, "\n".join(lines))


def cmd_recover(args):
    dgp = _dgp(args, _seed(args))
    wspec = WeightsSpec("connectivity", threshold=args.threshold)
    table = simulate.recovery_experiment(dgp, args.seeds, wspec)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(table.to_csv())
    prov = {**_dgp_prov(dgp, args.threshold), "seeds": args.seeds}
    lines = [f"{'parameter':>10} {'truth':>8} {'mean':>10} {'bias':>10} {'rmse':>10} {'coverage':>9}"]
    for r in table.rows:
        lines.append(f"{r['parameter']:>10} {r['truth']:>8.4g} {r['mean']:>10.5g} {r['bias']:>10.4g} "
                     f"{r['rmse']:>10.4g} {r['coverage']:>9.3f}")
    lines.append(f"failed fits: {len(table.failures)}")
    _emit(args, "recover", prov, table.to_dict(), "\n".join(lines))


COMMANDS = {
    "weights": cmd_weights,
    "moran": cmd_moran,
    "lisa": cmd_lisa,
    "fit": cmd_fit,
    "simulate": cmd_simulate,
    "recover": cmd_recover,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        COMMANDS[args.command](args)
    except (InputError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
