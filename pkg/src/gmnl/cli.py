"""Command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 input error. Failures also print
a JSON object with ``error``, ``message`` and ``exit_code`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from . import experiments as ex
from . import io, oracle
from .expressions import (INEQUALITY_NAMES, BellExpression, ComposedInequality, cglmp_seeds,
                          chsh_seed, evaluate, named_inequality, tri_seed)
from .scenario import (Behavior, DensityMatrix, PureState, ScenarioError, born_behavior,
                       ghz_state, mix_white_noise)
from .violation import (OptimizationConfig, canonical_sample, optimize_violation,
                        verify_theorem2)

SEEDS = {"chsh": chsh_seed, "tri-seed": tri_seed,
         "j3": lambda: cglmp_seeds()[0], "j3-tilde": lambda: cglmp_seeds()[1]}


class InputError(ValueError):
    """Bad user input; maps to exit code 2."""


@dataclass
class RunConfig:
    subcommand: str
    options: dict = field(default_factory=dict)

    def digest(self) -> str:
        return ex.digest(asdict(self))


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _fail("usage", message, 2)


def _fail(kind: str, message: str, code: int):
    print(json.dumps({"error": kind, "message": message, "exit_code": code}), file=sys.stderr)
    raise SystemExit(code)


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out:
        ex.write_json(payload, Path(out))
    print(text)


def _stamp(payload: dict, run: RunConfig) -> dict:
    payload = dict(payload)
    payload["version"] = __version__
    payload["run_digest"] = run.digest()
    return payload


def _resolve_expression(args) -> BellExpression | ComposedInequality:
    if getattr(args, "expr", None):
        obj = io.load(args.expr)
        if not isinstance(obj, (BellExpression, ComposedInequality)):
            raise InputError(f"{args.expr} holds {type(obj).__name__}, not an expression")
        return obj
    if not args.ineq:
        raise InputError("give an expression file or --ineq")
    if args.ineq in SEEDS:
        return SEEDS[args.ineq]()
    try:
        return named_inequality(args.ineq, args.n, args.k)
    except KeyError as exc:
        raise InputError(str(exc)) from None


def _resolve_state(spec: str, n: int) -> PureState | DensityMatrix:
    if spec == "ghz2":
        return ghz_state(n, 2)
    if spec == "ghz3":
        return ghz_state(n, 3)
    obj = io.load(spec)
    if not isinstance(obj, (PureState, DensityMatrix)):
        raise InputError(f"{spec} holds {type(obj).__name__}, not a state")
    return obj


def _opt_cfg(args) -> OptimizationConfig:
    if getattr(args, "opt_config", None):
        return OptimizationConfig.from_dict(json.loads(Path(args.opt_config).read_text()))
    return OptimizationConfig(restarts=args.restarts, seed=args.seed, max_iter=args.max_iter,
                              method=args.method)


# --- subcommands --------------------------------------------------------------

def cmd_evaluate(args, run: RunConfig) -> dict:
    expr = _resolve_expression(args)
    beh = io.load(args.behavior)
    if not isinstance(beh, Behavior):
        raise InputError(f"{args.behavior} is not a behavior")
    if beh.scenario != expr.scenario:
        raise InputError(f"scenario mismatch: expression {expr.scenario}, behavior {beh.scenario}")
    out = {"command": "evaluate", "label": expr.label}
    if isinstance(expr, ComposedInequality):
        out["lhs"] = evaluate(expr.lhs, beh)
        out["rhs"] = evaluate(expr.rhs, beh)
        out["margin"] = expr.margin(beh)
        out["value"] = out["margin"]
    else:
        out["value"] = evaluate(expr, beh)
    return out


def cmd_bound(args, run: RunConfig) -> dict:
    expr = _resolve_expression(args)
    e = expr.margin_expression() if isinstance(expr, ComposedInequality) else expr
    try:
        if args.mode == "local":
            res = oracle.local_bound(e)
        elif args.mode == "bilocal":
            res = oracle.bilocal_bound(e)
        else:
            if args.k is None:
                raise InputError("--mode depth needs --k")
            res = oracle.kproducible_bound(e, args.k)
    except (oracle.OracleCapError, oracle.UnsupportedBlockError) as exc:
        raise InputError(f"refused: {exc}") from None
    out = {"command": "bound", "label": expr.label, "mode": args.mode, "k": args.k}
    out.update(res.to_dict())
    out["float"] = res.float_value
    return out


def cmd_optimize(args, run: RunConfig) -> dict:
    expr = _resolve_expression(args)
    sc = expr.scenario
    rho = _resolve_state(args.state, sc.n)
    res = optimize_violation(expr, rho, _opt_cfg(args), tie_parties=args.tie, noise=0.0)
    beh = born_behavior(mix_white_noise(rho, args.q) if args.q else rho, res.measurements)
    value = expr.margin(beh) if isinstance(expr, ComposedInequality) else evaluate(expr, beh)
    if args.behavior_out:
        io.dump(beh, args.behavior_out)
    if args.measurements_out:
        io.dump(res.measurements, args.measurements_out)
    return {"command": "optimize", "label": expr.label, "q": args.q,
            "best_pure_value": res.value, "value": value, "converged": res.converged,
            "restart_values": list(res.restart_values)}


def cmd_export(args, run: RunConfig) -> dict:
    expr = _resolve_expression(args)
    if not args.out:
        raise InputError("export needs --out")
    io.dump(expr, args.out)
    return {"command": "export", "label": expr.label, "path": args.out,
            "pretty": expr.margin_expression().pretty() if isinstance(expr, ComposedInequality)
            else expr.pretty()}


def cmd_sweep(args, run: RunConfig) -> dict:
    cfg = _opt_cfg(args)
    results = []
    for ineq_name in args.ineq_list:
        for n in args.n_list:
            ineq = named_inequality(ineq_name, n, args.k)
            results.append(ex.noise_threshold(ineq, None, cfg, tie_parties=True,
                                              bracket=args.bracket,
                                              inner_restarts=args.inner_restarts))
    out = {"command": "sweep", "sweeps": [r.to_dict() for r in results]}
    if args.out:
        ex.write_sweep(results, Path(args.out))
        out["csv"] = str(Path(args.out).with_suffix(".csv"))
    return out


def cmd_thm2(args, run: RunConfig) -> dict:
    rep = ex.theorem2_batch(args.count, args.seed)
    if args.behavior_out:
        import numpy as np
        st = canonical_sample(np.random.default_rng(args.seed))
        io.dump(verify_theorem2(st).behavior, args.behavior_out)
    out = rep.to_dict()
    out["summary"] = f"{rep.violations}/{rep.count} violations"
    out["min_margin"] = rep.min_margin
    return out


def cmd_qutrit(args, run: RunConfig) -> dict:
    rep = ex.qutrit_survey(args.count, args.seed, _opt_cfg(args), include_ghz=not args.no_ghz)
    out = rep.to_dict()
    out["summary"] = f"{rep.violations}/{rep.count} violations"
    return out


def cmd_depth(args, run: RunConfig) -> dict:
    if args.k is None:
        raise InputError("depth needs --k")
    return ex.depth_demo(args.n, args.k, args.q, _opt_cfg(args))


def cmd_example4(args, run: RunConfig) -> dict:
    return {"command": "example4", "reports": ex.example4_report([(args.n, args.k or 3)])}


def cmd_regen(args, run: RunConfig) -> dict:
    n, m, d = args.scenario
    path = oracle.regenerate_vertex_cache(n, m, d, Path(args.vertex_cache) if args.vertex_cache
                                          else None)
    vs = oracle.read_vertex_cache(path)
    return {"command": "regen-vertices", "path": str(path), "vertices": len(vs)}


# --- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gmnl", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--vertex-cache", help="directory of NS vertex files "
                   f"(default: ${oracle.CACHE_ENV} or the packaged data)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, opt=False, n_list=False):
        sp.add_argument("--ineq", help="one of " + ", ".join(INEQUALITY_NAMES + tuple(SEEDS)))
        if n_list:
            sp.add_argument("--n", default="3", help="comma-separated party counts")
        else:
            sp.add_argument("--n", type=int, default=3)
        sp.add_argument("--k", type=int)
        sp.add_argument("--out")
        if opt:
            sp.add_argument("--seed", type=int, default=0)
            sp.add_argument("--restarts", type=int, default=50)
            sp.add_argument("--max-iter", type=int, default=4000)
            sp.add_argument("--method", choices=("auto", "nelder-mead", "lbfgs-nm"),
                            default="auto", help="local optimizer per restart")
            sp.add_argument("--opt-config", help="JSON file with optimizer settings")

    sp = sub.add_parser("evaluate", help="evaluate an expression on a behavior")
    sp.add_argument("expr", nargs="?")
    sp.add_argument("behavior")
    common(sp)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("bound", help="exact classical bound of an expression")
    sp.add_argument("expr", nargs="?")
    sp.add_argument("--mode", choices=("local", "bilocal", "depth"), default="bilocal")
    common(sp)
    sp.set_defaults(func=cmd_bound)

    sp = sub.add_parser("export", help="write a named expression as JSON")
    common(sp)
    sp.set_defaults(func=cmd_export, expr=None)

    sp = sub.add_parser("optimize", help="maximize a margin over measurements")
    common(sp, opt=True)
    sp.add_argument("--state", default="ghz2", help="ghz2, ghz3 or a state JSON file")
    sp.add_argument("--q", type=float, default=0.0)
    sp.add_argument("--tie", action="store_true", help="parties 2..n share settings")
    sp.add_argument("--behavior-out")
    sp.add_argument("--measurements-out")
    sp.set_defaults(func=cmd_optimize, expr=None)

    sp = sub.add_parser("sweep", help="white-noise thresholds by bisection")
    common(sp, opt=True, n_list=True)
    sp.add_argument("--bracket", type=float, default=1e-3)
    sp.add_argument("--inner-restarts", type=int)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("thm2", help="explicit construction on random canonical states")
    common(sp, opt=True)
    sp.add_argument("--count", type=int, default=1000)
    sp.add_argument("--behavior-out", help="also write the behavior of the first sample")
    sp.set_defaults(func=cmd_thm2)

    sp = sub.add_parser("qutrit", help="qutrit survey on B,C-symmetric states")
    common(sp, opt=True)
    sp.add_argument("--count", type=int, default=10)
    sp.add_argument("--no-ghz", action="store_true")
    sp.set_defaults(func=cmd_qutrit)

    sp = sub.add_parser("depth", help="nonlocality depth from the star inequalities")
    common(sp, opt=True)
    sp.add_argument("--q", type=float, default=0.0)
    sp.set_defaults(func=cmd_depth)

    sp = sub.add_parser("example4", help="symmetric depth coefficient report")
    common(sp)
    sp.set_defaults(func=cmd_example4)

    sp = sub.add_parser("regen-vertices", help="enumerate NS polytope vertices into the cache")
    sp.add_argument("--scenario", type=int, nargs=3, metavar=("N", "M", "D"), default=(2, 2, 3))
    sp.set_defaults(func=cmd_regen)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.vertex_cache:
        os.environ[oracle.CACHE_ENV] = args.vertex_cache
        oracle.block_vertices.cache_clear()
    if args.command == "sweep":
        args.ineq_list = [s for s in (args.ineq or "improved00,i1").split(",") if s]
        try:
            args.n_list = [int(v) for v in str(args.n).split(",") if v]
        except ValueError:
            _fail("usage", f"--n expects integers, got {args.n!r}", 2)
    # output locations and verbosity do not change results
    skip = {"func", "out", "behavior_out", "measurements_out", "verbose"}
    options = {k: v for k, v in vars(args).items() if k not in skip}
    run = RunConfig(args.command, options)
    try:
        payload = args.func(args, run)
    except (InputError, io.FormatError, ScenarioError, FileNotFoundError, KeyError) as exc:
        _fail(type(exc).__name__, str(exc), 2)
    except ValueError as exc:
        _fail(type(exc).__name__, str(exc), 2)
    except Exception as exc:  # noqa: BLE001
        _fail(type(exc).__name__, str(exc), 1)
    _emit(_stamp(payload, run), getattr(args, "out", None) if args.command not in
          ("sweep", "export") else None)
    return 0


if __name__ == "__main__":
    sys.exit(main())
