"""Command-line front end.

Exit codes: 0 success, 2 invalid input, 3 numerical failure (divergence,
threshold, step underflow, degree problems).  Failures print a JSON object
with ``error``, ``message`` and ``diagnostics`` on standard error.

CSV from ``scan`` has the fixed header ``E,rot,lyap,rot_err``; CSV from
``poincare`` has ``theta_1..theta_m,a11,a12,a21,a22``.  All CSV floats use
17 significant digits.  ``--plot`` writes a PNG next to ``--out``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import __version__
from .arithmetic import beta_estimate, cfrac_expand, parse_alpha
from .cocycles import DegreeError, GridInsufficient, lyapunov_cocycle, rotation_number_cocycle, scan_energy, uh_certificate
from .embedding import EmbedError, EmbedOptions, embed_local, roundtrip_defect
from .flows import StepUnderflow, lyapunov_flow, poincare_map, rotation_number_flow
from .instances import gen_instance, resolve_mu
from .io import (SCHEMA, ConfigError, check_keys, cocycle_from_json, dumps, error_json, load_json,
                 matrix_from_json, matseries_from_json, potential_from_json, report_from_json,
                 report_to_json, system_from_json, uh_to_json, write_scan_csv)

EMBED_KEYS = ("A", "G", "mu", "h", "tol", "options")
OPTION_KEYS = ("box", "grid", "max_iter", "stall", "flow_tol", "coef_floor", "force")


class NumericalFailure(RuntimeError):
    def __init__(self, kind, message, diagnostics=None):
        super().__init__(message)
        self.kind = kind
        self.diagnostics = diagnostics or {}


def _emit(obj, out):
    text = dumps(obj)
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _plot_path(args, suffix=".png"):
    if not getattr(args, "plot", False):
        return None
    if not args.out:
        raise ConfigError("--plot needs --out")
    return Path(args.out).with_suffix(suffix)


# ---------------------------------------------------------------------------
# subcommands

def cmd_cfrac(args):
    try:
        alpha = parse_alpha(args.alpha)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if args.depth < 2:
        raise ConfigError("--depth must be >= 2")
    cf = cfrac_expand(alpha, args.depth)
    beta = beta_estimate(cf) if cf.depth >= 2 else None
    obj = {"schema": SCHEMA, "a": list(cf.a), "p": list(cf.p), "q": list(cf.q),
           "beta_samples": list(beta.samples) if beta else [],
           "beta_hat": beta.beta_hat if beta else None,
           "beta_sup": beta.beta_sup if beta else None,
           "terminated": cf.terminated, "precision_capped": cf.precision_capped}
    if args.json:
        _emit(obj, args.out)
    else:
        lines = [f"a = {list(cf.a)}", f"p = {list(cf.p)}", f"q = {list(cf.q)}"]
        if beta:
            lines.append(f"beta_hat = {beta.beta_hat!r}")
        print("\n".join(lines))
    return 0


def _embed_inputs(cfg):
    check_keys(cfg, EMBED_KEYS, ("A", "G", "mu"), "embed config")
    opts = check_keys(cfg.get("options", {}), OPTION_KEYS, where="options")
    A = matrix_from_json(cfg["A"])
    G = matseries_from_json(cfg["G"])
    mu = np.array(resolve_mu(cfg["mu"]))
    return A, G, mu, float(cfg.get("h", 0.5)), float(cfg.get("tol", 1e-8)), opts


def cmd_embed(args):
    A, G, mu, h, tol, opts = _embed_inputs(load_json(args.config))
    if args.force:
        opts = dict(opts, force=True)
    if args.max_iter is not None:
        opts = dict(opts, max_iter=args.max_iter)
    try:
        rep = embed_local(A, G, mu, h, tol, EmbedOptions(**opts))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if not rep.converged:
        raise NumericalFailure("unconverged", f"verification residual {rep.verify_residual:.3g} > tol {tol:.3g}",
                               {"residuals": rep.residual_history, "verify_residual": rep.verify_residual})
    _emit(report_to_json(rep), args.out)
    png = _plot_path(args)
    if png:
        from .plotting import plot_embed

        _, grid = roundtrip_defect(rep, grid=args.grid)
        plot_embed(rep.residual_history, grid, png)
    return 0


def cmd_roundtrip(args):
    rep = report_from_json(load_json(args.report))
    tol = args.tol if args.tol is not None else rep.tol
    sup, grid = roundtrip_defect(rep, grid=args.grid)
    obj = {"schema": SCHEMA, "sup_defect": sup, "tol": tol, "ok": sup <= tol, "grid": grid.tolist()}
    _emit(obj, args.out)
    png = _plot_path(args)
    if png:
        from .plotting import plot_embed

        plot_embed(rep.residual_history, grid, png)
    if sup > tol:
        raise NumericalFailure("roundtrip", f"defect {sup:.3g} exceeds tol {tol:.3g}", {"sup_defect": sup})
    return 0


def cmd_poincare(args):
    flow = system_from_json(load_json(args.config))
    sample = poincare_map(flow, args.grid, args.tol)
    theta = sample.theta.reshape(-1, flow.dim - 1)
    vals = sample.values.reshape(-1, 2, 2)
    if args.format == "json":
        _emit({"schema": SCHEMA, "theta": theta.tolist(), "values": vals.tolist(),
               "det_err": sample.det_err, "err_est": sample.err_est}, args.out)
    else:
        cols = [f"theta_{i + 1}" for i in range(theta.shape[1])] + ["a11", "a12", "a21", "a22"]
        rows = np.concatenate([theta, vals.reshape(-1, 4)], axis=1)
        text = ",".join(cols) + "\n" + "".join(",".join(f"{v:.17g}" for v in r) + "\n" for r in rows)
        if args.out:
            Path(args.out).write_text(text)
        else:
            sys.stdout.write(text)
    png = _plot_path(args)
    if png:
        from .plotting import plot_poincare

        plot_poincare(np.concatenate([np.zeros((len(theta), 1)), theta], 1), vals, png)
    return 0


def _rot_json(est):
    return {"schema": SCHEMA, "value": est.value, "err": est.err,
            "accelerated": est.accelerated, "accelerated_time": est.accelerated_time}


def cmd_rotnum(args):
    c = cocycle_from_json(load_json(args.config))
    _emit(_rot_json(rotation_number_cocycle(c, args.iters)), args.out)
    return 0


def cmd_rotnum_flow(args):
    flow = system_from_json(load_json(args.config))
    _emit(_rot_json(rotation_number_flow(flow, args.time, tol=args.tol)), args.out)
    return 0


def cmd_lyap(args):
    c = cocycle_from_json(load_json(args.config))
    _emit({"schema": SCHEMA, "lyapunov": lyapunov_cocycle(c, args.iters, args.samples, args.seed)}, args.out)
    return 0


def cmd_lyap_flow(args):
    flow = system_from_json(load_json(args.config))
    _emit({"schema": SCHEMA, "lyapunov": lyapunov_flow(flow, args.time, tol=args.tol)}, args.out)
    return 0


def cmd_scan(args):
    cfg = load_json(args.config)
    check_keys(cfg, ("mu", "fiber", "homotopy_degree"), ("mu", "fiber"), "scan config")
    fib = cfg["fiber"]
    if not isinstance(fib, dict) or fib.get("type") != "schrodinger":
        raise ConfigError("scan needs a schrodinger fiber")
    check_keys(fib, ("type", "V", "E"), ("type", "V"), "fiber")
    V = potential_from_json(fib["V"])
    mu = np.array(resolve_mu(cfg["mu"]))
    if args.steps < 1 or not args.emax >= args.emin:
        raise ConfigError("need steps >= 1 and emax >= emin")
    E = np.linspace(args.emin, args.emax, args.steps)
    res = scan_energy(V, mu, E, args.iters)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            write_scan_csv(fh, res)
    else:
        write_scan_csv(sys.stdout, res)
    png = _plot_path(args)
    if png:
        from .plotting import plot_scan

        plot_scan(res, png)
    return 0


def cmd_uhcert(args):
    c = cocycle_from_json(load_json(args.config))
    _emit(uh_to_json(uh_certificate(c, args.iters, args.grid, args.margin)), args.out)
    return 0


def cmd_selftest(args):
    from .acceptance import run_all

    results = run_all(args.criteria, echo=print)
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return 1 if failed else 0


def cmd_gen(args):
    if args.params is None:
        params = {}
    elif os.path.exists(args.params):
        params = load_json(args.params)
    else:
        try:
            params = json.loads(args.params)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--params is neither a file nor JSON: {exc}") from exc
    if args.amplitude is not None:
        params = dict(params, amplitude=args.amplitude)
    _emit(gen_instance(args.seed, params), args.out)
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qpembed", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_, description=help_)
        sp.set_defaults(func=func)
        return sp

    sp = add("cfrac", cmd_cfrac, "continued fraction expansion and beta estimate")
    sp.add_argument("--alpha", required=True, help='decimal string or "golden", "sqrt2m1"')
    sp.add_argument("--depth", type=int, default=20)
    sp.add_argument("--json", action="store_true")
    sp.add_argument("--out")

    sp = add("embed", cmd_embed, "embed e^A e^{G} into a quasi-periodic system (JSON report)")
    sp.add_argument("--config", required=True, help="JSON {A, G, mu, h, tol, options}")
    sp.add_argument("--out")
    sp.add_argument("--force", action="store_true", help="skip the smallness threshold")
    sp.add_argument("--max-iter", type=int)
    sp.add_argument("--grid", type=int, default=64, help="defect grid for --plot")
    sp.add_argument("--plot", action="store_true")

    sp = add("roundtrip", cmd_roundtrip, "re-integrate an embed report and report the defect grid")
    sp.add_argument("--report", required=True)
    sp.add_argument("--grid", type=int, default=64)
    sp.add_argument("--tol", type=float)
    sp.add_argument("--out")
    sp.add_argument("--plot", action="store_true")

    sp = add("poincare", cmd_poincare, "Poincare map of a system on a section grid")
    sp.add_argument("--config", required=True, help="system JSON {mu, A, F, h}")
    sp.add_argument("--grid", type=int, default=32)
    sp.add_argument("--tol", type=float, default=1e-12)
    sp.add_argument("--format", choices=("csv", "json"), default="csv")
    sp.add_argument("--out")
    sp.add_argument("--plot", action="store_true")

    for name, func, what in (("rotnum", cmd_rotnum, "rotation number of a cocycle"),
                             ("lyap", cmd_lyap, "Lyapunov exponent of a cocycle"),
                             ("uhcert", cmd_uhcert, "finite-scale uniform hyperbolicity check")):
        sp = add(name, func, what)
        sp.add_argument("--config", required=True, help="cocycle JSON {mu, fiber}")
        sp.add_argument("--iters", type=int, default=100_000 if name != "uhcert" else 200)
        sp.add_argument("--out")
        if name == "lyap":
            sp.add_argument("--samples", type=int, default=32)
            sp.add_argument("--seed", type=int, default=0)
        if name == "uhcert":
            sp.add_argument("--grid", type=int, default=64)
            sp.add_argument("--margin", type=float, default=0.1)

    for name, func, what in (("rotnum-flow", cmd_rotnum_flow, "rotation number of a system"),
                             ("lyap-flow", cmd_lyap_flow, "Lyapunov exponent of a system")):
        sp = add(name, func, what)
        sp.add_argument("--config", required=True, help="system JSON {mu, A, F, h}")
        sp.add_argument("--time", type=float, default=1000.0)
        sp.add_argument("--tol", type=float, default=1e-10)
        sp.add_argument("--out")

    sp = add("scan", cmd_scan, "energy scan of a Schroedinger cocycle (CSV E,rot,lyap,rot_err)")
    sp.add_argument("--config", required=True, help='cocycle JSON with a "schrodinger" fiber')
    sp.add_argument("--emin", type=float, default=-4.0)
    sp.add_argument("--emax", type=float, default=4.0)
    sp.add_argument("--steps", type=int, default=801)
    sp.add_argument("--iters", type=int, default=20_000)
    sp.add_argument("--out")
    sp.add_argument("--plot", action="store_true")

    sp = add("selftest", cmd_selftest, "run the acceptance criteria")
    sp.add_argument("--criteria", type=int, nargs="*", help="subset of 1..10")

    sp = add("gen", cmd_gen, "seeded random embed config or system")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--params", help="JSON text or file {kind, modes, amplitude, h, mu, ...}")
    sp.add_argument("--amplitude", type=float)
    sp.add_argument("--out")
    return p


def _thread_limit():
    value = os.environ.get("QPEMBED_THREADS")
    if not value:
        return nullcontext()
    try:
        n = int(value)
    except ValueError as exc:
        raise ConfigError(f"QPEMBED_THREADS must be an integer, got {value!r}") from exc
    if n < 1:
        raise ConfigError("QPEMBED_THREADS must be >= 1")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def _fail(code, kind, message, diagnostics=None):
    sys.stderr.write(dumps(error_json(kind, message, diagnostics)))
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with _thread_limit():
            return args.func(args)
    except EmbedError as exc:
        return _fail(3, exc.kind, str(exc), exc.diagnostics)
    except NumericalFailure as exc:
        return _fail(3, exc.kind, str(exc), exc.diagnostics)
    except (StepUnderflow, DegreeError, GridInsufficient) as exc:
        return _fail(3, type(exc).__name__, str(exc))
    except (ConfigError, ValueError, KeyError, TypeError, FileNotFoundError) as exc:
        return _fail(2, "validation", str(exc))


if __name__ == "__main__":
    sys.exit(main())
