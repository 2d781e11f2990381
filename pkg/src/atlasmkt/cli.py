"""Command-line interface.

Subcommands wire the library to machine-readable CSV/JSON files for external
plotting; nothing is rendered here.  Exit codes: 0 success, 1 invalid input
or failed validation, 2 runtime error.  Failures print a single line
``error:<code>: <message>`` to stderr.

Parameter files are flat key=value text (see :mod:`.io`); they may carry
simulation keys (t, dt, burn_in, seed) which command-line flags override.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io as aio
from .calibrate import fit_linear_variance
from .diversity import DiversityBoundInput, weak_diversity_bound
from .engine import Registrations, SimConfig, run_ensemble, simulate
from .equilibrium import ce_approx, ce_weights
from .model import validate
from .portfolio import (
    KINDS,
    NoClosedFormError,
    PortfolioRule,
    asymptotic_growth,
    build_growth_report,
    efficient_frontier_weights,
    parse_rule,
)


class CliError(Exception):
    def __init__(self, code: str, message: str, exit_code: int = 1):
        super().__init__(message)
        self.code = code
        self.exit_code = exit_code


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # one-line machine-parsable usage errors
        raise CliError("usage", message, exit_code=1)


def _build_parser() -> _Parser:
    top = _Parser(prog="atlasmkt", description=__doc__)
    sub = top.add_subparsers(dest="command", required=True)

    pv = sub.add_parser("validate", help="check a parameter file")
    pv.add_argument("--params", required=True)

    ps = sub.add_parser("simulate", help="run a simulation and export statistics")
    ps.add_argument("--params", required=True)
    ps.add_argument("--T", type=float, default=None, dest="t")
    ps.add_argument("--dt", type=float, default=None)
    ps.add_argument("--burn-in", type=float, default=None, dest="burn_in")
    ps.add_argument("--seed", type=int, default=None)
    ps.add_argument("--seeds", type=int, default=1, help="ensemble size (seed, seed+1, ...)")
    ps.add_argument("--workers", type=int, default=1)
    ps.add_argument("--checkpoints", type=int, default=256)
    ps.add_argument("--track-perms", action="store_true", dest="track_perms")
    ps.add_argument(
        "--portfolios",
        default="",
        help=f"comma-separated rules from {{{','.join(KINDS)}}}; parametric kinds as kind:value",
    )
    ps.add_argument(
        "--functional",
        action="append",
        default=[],
        help="power-sum functional 'sum-p:P' of the ranked weights (repeatable)",
    )
    ps.add_argument("--m-source", choices=("ce", "empirical"), default="ce", dest="m_source")
    ps.add_argument("--out", required=True)

    pc = sub.add_parser("ce", help="certainty-equivalent weights and capital curve")
    pc.add_argument("--params")
    pc.add_argument("--approx", help="alpha:A or alpha:A,beta:B closed form")
    pc.add_argument("--n", type=int, help="stock count for --approx")
    pc.add_argument("--out", required=True)

    pa = sub.add_parser("asymptotics", help="large-market growth-rate table")
    pa.add_argument("--alpha", type=float, required=True)
    pa.add_argument("--beta", type=float, default=0.0)
    pa.add_argument("--p", type=float, default=0.5)
    pa.add_argument("--g", type=float, default=1.0)
    pa.add_argument("--out", default=None)

    pf = sub.add_parser("frontier", help="efficient-frontier weights")
    pf.add_argument("--params", required=True)
    pf.add_argument("--lambda", type=float, required=True, dest="lam")
    pf.add_argument("--out", default=None)

    pd = sub.add_parser("diversity-bound", help="weak-diversity probability bound")
    pd.add_argument("--n", type=int, required=True)
    pd.add_argument("--delta", type=float, required=True)
    pd.add_argument("--horizon", type=float, required=True)
    pd.add_argument("--rel-sd", type=float, required=True, dest="rel_sd")
    pd.add_argument("--start-weight", type=float, required=True, dest="start_weight")
    pd.add_argument("--out", default=None)

    pk = sub.add_parser("calibrate", help="fit linear rank variances from CSV")
    pk.add_argument("--variances", required=True)
    pk.add_argument("--out", default=None)

    return top


def _emit(obj, out_path) -> None:
    if out_path:
        aio.write_json(out_path, obj)
    else:
        import json

        print(json.dumps(obj, sort_keys=True, indent=2))


def _cmd_validate(args) -> int:
    params = aio.read_params_file(args.params)
    report = validate(params)
    if report.ok:
        print("ok")
        return 0
    for v in report.violations:
        print(v)
    return 1


def _parse_functionals(specs) -> tuple[float, ...]:
    out = []
    for spec in specs:
        if not spec.startswith("sum-p:"):
            raise CliError("functional", f"unknown functional {spec!r}; expected sum-p:P")
        try:
            out.append(float(spec.split(":", 1)[1]))
        except ValueError:
            raise CliError("functional", f"bad exponent in {spec!r}") from None
    return tuple(out)


def _cmd_simulate(args) -> int:
    params, file_sim = aio.read_config_file(args.params)
    report = validate(params)
    if not report.ok:
        raise CliError("params", "; ".join(report.violations))
    t = args.t if args.t is not None else file_sim.get("t")
    if t is None:
        raise CliError("config", "horizon --T missing (flag or file key 't')")
    dt = args.dt if args.dt is not None else file_sim.get("dt", 0.01)
    burn = args.burn_in if args.burn_in is not None else file_sim.get("burn_in")
    seed = args.seed if args.seed is not None else int(file_sim.get("seed", 0))
    try:
        rules = tuple(
            parse_rule(s) for s in args.portfolios.split(",") if s.strip()
        )
        reg = Registrations(
            track_permutations=args.track_perms,
            functionals=_parse_functionals(args.functional),
            portfolios=rules,
        )
        config = SimConfig(
            T=t, dt=dt, burn_in=burn, seed=seed, checkpoints=args.checkpoints
        )
    except ValueError as exc:
        raise CliError("config", str(exc)) from None

    if args.seeds < 1:
        raise CliError("config", "--seeds must be >= 1")
    seeds = list(range(seed, seed + args.seeds))
    if args.seeds == 1:
        stats = simulate(params, config, reg)
        per_seed = None
    else:
        ens = run_ensemble(params, config, seeds, reg, workers=args.workers)
        stats = ens.aggregate
        per_seed = ens

    out = Path(args.out)
    aio.export_path_stats(stats, out, params)
    aio.write_rankstats_json(out / "rankstats.json", stats, params)
    if rules:
        report = build_growth_report(stats, params, m_source=args.m_source)
        aio.write_growth_report_json(out / "growth_report.json", report)
    meta = {
        "command": "simulate",
        "params": {
            "n": params.n,
            "gamma": params.gamma,
            "g": params.g.tolist(),
            "sigma": params.sigma.tolist(),
        },
        "sim": {
            "T": config.T,
            "dt": config.dt,
            "burn_in": config.burn_in,
            "seeds": seeds,
            "checkpoints": config.checkpoints,
            "workers": args.workers,
        },
        "registrations": {
            "track_perms": args.track_perms,
            "functionals": list(reg.functionals),
            "portfolios": [r.label for r in rules],
            "gap_band_eps": stats.meta["gap_band_eps"],
        },
        "m_source": args.m_source,
    }
    if per_seed is not None:
        meta["spread"] = {k: v.tolist() for k, v in per_seed.spread.items()}
    aio.write_json(out / "meta.json", meta)
    print(f"wrote {out}")
    return 0


def _cmd_ce(args) -> int:
    if args.approx:
        if args.params:
            raise CliError("config", "--approx and --params are mutually exclusive")
        if not args.n:
            raise CliError("config", "--approx requires --n")
        alpha = beta = None
        for part in args.approx.split(","):
            key, _, val = part.partition(":")
            try:
                if key.strip() == "alpha":
                    alpha = float(val)
                elif key.strip() == "beta":
                    beta = float(val)
                else:
                    raise CliError("config", f"unknown --approx key {key!r}")
            except ValueError:
                raise CliError("config", f"bad --approx value {part!r}") from None
        if alpha is None:
            raise CliError("config", "--approx needs alpha:A")
        try:
            w = ce_approx(args.n, alpha, beta or 0.0)
        except ValueError as exc:
            raise CliError("config", str(exc)) from None
    else:
        if not args.params:
            raise CliError("config", "need --params or --approx")
        params = aio.read_params_file(args.params)
        report = validate(params)
        if not report.ok:
            raise CliError("params", "; ".join(report.violations))
        w = ce_weights(params)
    aio.write_capital_curve_csv(args.out, w)
    aio.write_json(
        str(args.out) + ".meta.json",
        {
            "command": "ce",
            "params_file": args.params,
            "approx": args.approx,
            "n": args.n,
            "source": w.source,
        },
    )
    print(f"wrote {args.out}")
    return 0


def _cmd_asymptotics(args) -> int:
    rules = [
        PortfolioRule("market"),
        PortfolioRule("equal"),
        PortfolioRule("diversity", p=args.p),
        PortfolioRule("restricted_market"),
        PortfolioRule("restricted_equal"),
        PortfolioRule("restricted_diversity", p=args.p),
    ]
    table = {}
    for rule in rules:
        try:
            gam, gam_s = asymptotic_growth(rule, args.alpha, args.beta, g=args.g)
        except NoClosedFormError:
            continue
        table[rule.label] = {"Gamma": gam, "Gamma_star": gam_s}
    payload = {
        "alpha": args.alpha,
        "beta": args.beta,
        "p": args.p,
        "g": args.g,
        "rules": table,
    }
    _emit(payload, args.out)
    return 0


def _cmd_frontier(args) -> int:
    params = aio.read_params_file(args.params)
    try:
        w = efficient_frontier_weights(params.sigma2, args.lam)
    except ValueError as exc:
        raise CliError("config", str(exc)) from None
    rows = [(k + 1, float(w[k])) for k in range(w.shape[0])]
    if args.out:
        aio.write_csv(args.out, ("rank", "weight"), rows)
        aio.write_json(
            str(args.out) + ".meta.json",
            {"command": "frontier", "params_file": args.params, "lambda": args.lam},
        )
        print(f"wrote {args.out}")
    else:
        print("rank,weight")
        for r in rows:
            print(f"{r[0]},{r[1]!r}")
    return 0


def _cmd_diversity_bound(args) -> int:
    try:
        inp = DiversityBoundInput(
            n=args.n,
            delta=args.delta,
            horizon=args.horizon,
            rel_sd=args.rel_sd,
            start_weight=args.start_weight,
        )
    except ValueError as exc:
        raise CliError("config", str(exc)) from None
    rep = weak_diversity_bound(inp)
    payload = {
        "inputs": {
            "n": inp.n,
            "delta": inp.delta,
            "horizon": inp.horizon,
            "rel_sd": inp.rel_sd,
            "start_weight": inp.start_weight,
        },
        "applicable": rep.applicable,
        "reason": rep.reason,
        "threshold_weight": rep.threshold_weight,
        "A": rep.A,
        "log_A": rep.log_A,
        "z": rep.z,
        "log10_tail": rep.log10_tail,
        "log10_final_tail": rep.log10_final_tail,
        "probability_bound_descriptor": rep.probability_bound_descriptor,
    }
    _emit(payload, args.out)
    return 0


def _cmd_calibrate(args) -> int:
    pts = aio.read_variance_csv(args.variances)
    try:
        fit = fit_linear_variance(pts)
    except ValueError as exc:
        raise CliError("data", str(exc)) from None
    payload = {
        "inputs": {"variances_file": args.variances, "points": len(pts)},
        "sigma2": fit.sigma2,
        "s2": fit.s2,
        "r_squared": fit.r_squared,
        "max_abs_residual": fit.max_abs_residual,
        "rms_residual": fit.rms_residual,
        "negative_slope": fit.negative_slope,
    }
    _emit(payload, args.out)
    return 0


_COMMANDS = {
    "validate": _cmd_validate,
    "simulate": _cmd_simulate,
    "ce": _cmd_ce,
    "asymptotics": _cmd_asymptotics,
    "frontier": _cmd_frontier,
    "diversity-bound": _cmd_diversity_bound,
    "calibrate": _cmd_calibrate,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error:{exc.code}: {exc}", file=sys.stderr)
        return exc.exit_code
    except aio.ParamsFileError as exc:
        print(f"error:params: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error:invalid: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # engine aborts, I/O failures
        print(f"error:runtime: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
