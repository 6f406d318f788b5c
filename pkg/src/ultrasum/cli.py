"""Command-line front end.

usage:
  ultrasum check-seq      --spec FILE [--pmax N] --out report.json
  ultrasum kernel-profile --seq FILE [--kernel K] [--delta X] --grid SPEC --out profile.csv
  ultrasum moments        --seq FILE [--kernel K] [--delta X] --pmax N --out table.csv
  ultrasum extend         --seq FILE [--kernel K] [--delta X] --data FILE --z-grid SPEC --nmax N --out report.json
  ultrasum sum            --series FILE --continuation NAME --direction D --z R,ARG [--tau T] --out result.json
  ultrasum gap            --seq FILE --data FILE --continuation NAME --z-grid SPEC --out gap.json

Exit status is 0 when every numeric check passes, 2 when a check fails (the
report is still written) and 1 on usage or I/O errors.  Bare file names that
do not exist in the working directory are looked up among the bundled data
files (gevrey1.json, gevrey2.json, geometric.json, euler.json, ...).
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import logging
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import _core
from .errors import InputError, NumericCheckFailed, UltrasumError
from .extend import asymptotic_report, build_extension, default_grid, derivative_check
from .formal import TruncatedSeries, certify_norm
from .kernel import (KernelCache, KernelFlavor, RayPoint, build_kernel, cache_dir,
                     eval_e, verify_sandwich)
from .moments import moment_table
from .quad import QuadConfig
from .seqcore import check_regularity, log_h, sequence_from_spec
from .summation import (builtin_continuation, flat_gap, m_sum, nearest_direction)

log = logging.getLogger("ultrasum")

EXIT_OK, EXIT_USAGE, EXIT_CHECK = 0, 1, 2
PROFILE_HEADER = ["x", "abs_e", "h_lower(k2)", "h_upper(k3)", "im_rel"]
MOMENT_HEADER = ["p", "M_p", "m_p", "abs_err", "ratio_log"]
IM_REL_LIMIT = 1e-8


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ------------------------------------------------------------------ io

def resolve_path(name):
    p = Path(name)
    if p.exists():
        return p
    bundled = resources.files("ultrasum") / "data" / p.name
    if p.parent == Path(".") and bundled.is_file():
        return Path(str(bundled))
    raise UsageError(f"file not found: {name}")


def read_json(name):
    path = resolve_path(name)
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None


def _clean(obj):
    # JSON-safe copy: numpy scalars, complex numbers and non-finite floats
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [_clean(obj.real), _clean(obj.imag)]
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def write_report(path, body, cfg):
    stamp = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
    doc = {"config": cfg, "backend": _core.BACKEND}
    doc.update(body)
    text = json.dumps(_clean(doc), indent=2, sort_keys=True)
    # the timestamp is the only nondeterministic field; keep it on line 2
    text = "{\n" + f'  "generated_at": {json.dumps(stamp)},\n' + text[2:]
    _write_text(path, text + "\n")


def _write_text(path, text):
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc}") from None


def write_csv(path, header, rows):
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc}") from None


def g17(x):
    return format(float(x), ".17g")


# ------------------------------------------------------------ parsing

def parse_float_list(text):
    text = text.strip()
    if not text:
        return []
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma separated numbers, got {text!r}") from None


def parse_grid(text):
    """``logspace:a,b,n`` (decades), ``linspace:a,b,n`` or ``x1,x2,...``."""
    text = text.strip()
    for name, fn in (("logspace", np.logspace), ("linspace", np.linspace)):
        if text.startswith(name + ":"):
            parts = parse_float_list(text[len(name) + 1:])
            if len(parts) != 3 or parts[2] < 0 or not float(parts[2]).is_integer():
                raise UsageError(f"{name} grid needs start,stop,count")
            return fn(parts[0], parts[1], int(parts[2]))
    return np.array(parse_float_list(text))


def parse_z(text):
    vals = parse_float_list(text)
    if len(vals) != 2:
        raise UsageError(f"--z expects modulus,argument, got {text!r}")
    return RayPoint(vals[0], vals[1])


def load_config(args):
    """Merge the optional ``--config`` document with command-line flags."""
    doc = read_json(args.config) if args.config else {}
    if not isinstance(doc, dict):
        raise UsageError("config must be a JSON object")
    quad = dict(doc.get("quad", {}))
    for key in ("rel_tol", "abs_tol"):
        v = getattr(args, key, None)
        if v is not None:
            quad[key] = v
    for key, v in quad.items():
        if key in ("rel_tol", "abs_tol") and not v > 0:
            raise UsageError(f"{key} must be positive")
    doc["quad"] = quad
    return doc


def quad_config(cfg, base=None):
    base = base or QuadConfig()
    q = {k: v for k, v in cfg.get("quad", {}).items()
         if k in ("rel_tol", "abs_tol", "max_subdivisions")}
    return base.replace(**q) if q else base


# ------------------------------------------------------------ builders

def _sequence(args, cfg, pmax=None):
    doc = read_json(args.seq if hasattr(args, "seq") else args.spec)
    return sequence_from_spec(doc, pmax), doc


def _kernel(args, cfg, seq):
    flavor = args.kernel or cfg.get("kernel", "auto")
    if flavor == "auto":
        flavor = "gevrey" if seq.is_gevrey else "constructed"
    delta = args.delta if args.delta is not None else cfg.get("delta")
    if delta is None:
        from .seqcore import estimate_gamma
        delta = 0.5 * estimate_gamma(seq).gamma
    k = build_kernel(seq, float(delta), flavor, quad_config(cfg))
    where = cache_dir(args.kernel_cache)
    if where is not None and k.flavor is KernelFlavor.CONSTRUCTED:
        if k.cache.load(where):
            log.info("loaded kernel cache from %s", where)
    return k


def _save_cache(args, kernel):
    where = cache_dir(args.kernel_cache)
    if where is not None and kernel.flavor is KernelFlavor.CONSTRUCTED and len(kernel.cache):
        try:
            kernel.cache.save(where)
        except OSError as exc:
            raise UsageError(f"cannot write kernel cache: {exc}") from None


def _series(name):
    doc = read_json(name)
    return TruncatedSeries.from_dict(doc)


# ------------------------------------------------------------ commands

def cmd_check_seq(args, cfg):
    seq, _ = _sequence(args, cfg, args.pmax)
    rep = check_regularity(seq, args.tail_depth)
    body = {"sequence": seq.describe(), **rep.flat(),
            "strongly_regular": rep.strongly_regular}
    write_report(args.out, body, cfg)
    return EXIT_OK if rep.strongly_regular else EXIT_CHECK


def profile_rows(kernel, grid, argument=0.0):
    """Rows ``x, |e(x)|, lower, upper, |Im e|/|e|`` on the ray ``arg = argument``.

    The bounds are the sandwich ``k1 h(k2 x) <= |G(x)| <= h(k3 x)`` carried
    over to ``e(x) = x G(1/x)``.
    """
    x = np.asarray(grid, dtype=float)
    if x.size == 0:
        return [], None
    fit = verify_sandwich(kernel, argument=-argument)
    z = x * np.exp(1j * argument)
    e = np.atleast_1d(eval_e(kernel, z))
    seq = kernel.seq
    lower = (fit.k1 * x * np.exp(log_h(seq, fit.k2 / x)) if fit.k2 is not None
             else np.full(x.shape, math.nan))
    upper = (x * np.exp(log_h(seq, fit.k3 / x)) if fit.k3 is not None
             else np.full(x.shape, math.nan))
    ae = np.abs(e)
    with np.errstate(divide="ignore", invalid="ignore"):
        im_rel = np.where(ae > 0, np.abs(e.imag) / ae, 0.0)
    rows = [[g17(a), g17(b), g17(c), g17(d), g17(r)]
            for a, b, c, d, r in zip(x, ae, lower, upper, im_rel)]
    return rows, (fit, float(np.max(im_rel)))


def cmd_kernel_profile(args, cfg):
    seq, _ = _sequence(args, cfg)
    kernel = _kernel(args, cfg, seq)
    grid = parse_grid(args.grid)
    if (grid <= 0).any():
        raise UsageError("profile grid must be positive")
    if kernel.flavor is KernelFlavor.CONSTRUCTED and grid.size:
        kernel.warm_cache(-args.argument, modulus_lo=1.0 / grid.max(),
                          modulus_hi=max(1e6, 1.0 / grid.min()))
    rows, info = profile_rows(kernel, grid, args.argument)
    write_csv(args.out, PROFILE_HEADER, rows)
    _save_cache(args, kernel)
    if info is None:
        return EXIT_OK
    fit, im_max = info
    ok = fit.passed and (args.argument != 0 or im_max <= IM_REL_LIMIT)
    return EXIT_OK if ok else EXIT_CHECK


def cmd_moments(args, cfg):
    seq, _ = _sequence(args, cfg)
    kernel = _kernel(args, cfg, seq)
    table = moment_table(kernel, args.pmax, quad_config(cfg, kernel.quad_cfg))
    write_csv(args.out, MOMENT_HEADER, list(table.rows()))
    if args.report:
        write_report(args.report, {"equivalence": table.equivalence,
                                   "logconvex": table.logconvex,
                                   "kernel": kernel.describe()}, cfg)
    _save_cache(args, kernel)
    return EXIT_OK if table.equivalence["pass"] and table.logconvex else EXIT_CHECK


def _z_grid(args, delta):
    moduli = parse_float_list(args.z_grid) if args.z_grid else None
    if args.z_args is not None:
        argsv = parse_float_list(args.z_args)
        return [RayPoint(r, a) for r in (moduli or (0.02, 0.05, 0.1)) for a in argsv]
    return default_grid(delta, moduli or (0.02, 0.05, 0.1))


def _extension(args, cfg, seq, kernel):
    data = _series(args.data)
    table = moment_table(kernel, max(4, data.N), quad_config(cfg, kernel.quad_cfg))
    if data.norm_cert is None and not data.is_zero():
        data = data.with_certificate(certify_norm(data, seq))
    eps = args.eps_margin if args.eps_margin is not None else cfg.get("eps_margin", 0.1)
    return build_extension(kernel, table, data, eps), table


def cmd_extend(args, cfg):
    seq, _ = _sequence(args, cfg)
    kernel = _kernel(args, cfg, seq)
    op, _ = _extension(args, cfg, seq, kernel)
    grid = _z_grid(args, kernel.delta)
    rep = asymptotic_report(op, grid, min(args.nmax, op.N))
    body = {"kernel": kernel.describe(), "R0": op.R0, "D2": op.D2,
            "eps_margin": op.eps_margin, **rep.to_dict()}
    ok = rep.pass_
    if args.derivatives:
        ders = derivative_check(op, pmax=min(3, op.N))
        body["derivatives"] = ders
        ok = ok and all(d["pass"] for d in ders)
    if args.seed is not None:
        body["linearity"] = linearity_sweep(op, grid[0], args.seed)
        ok = ok and body["linearity"]["pass"]
    body["pass"] = ok
    write_report(args.out, body, cfg)
    _save_cache(args, kernel)
    return EXIT_OK if ok else EXIT_CHECK


def linearity_sweep(op, z, seed, trials=4):
    """Randomised check ``T(a x + b y) = a T(x) + b T(y)`` on perturbed data."""
    rng = np.random.default_rng(seed)
    n = op.N + 1
    worst = 0.0
    base = op.data.to_over_factorial().coeffs
    for _ in range(trials):
        u, v = rng.uniform(-1, 1, n) * base, rng.uniform(-1, 1, n) * base
        a, b = rng.normal(size=2)
        mk = lambda c: build_extension(op.kernel, op.moments,  # noqa: E731
                                       _certified(c, op), op.eps_margin)
        lhs = mk(a * u + b * v)
        fx, fy = mk(u), mk(v)
        # compare on a common radius so the three integrals share a domain
        R = min(lhs.R0, fx.R0, fy.R0)
        vals = [_with_radius(o, R)(z) for o in (lhs, fx, fy)]
        err = abs(vals[0] - (a * vals[1] + b * vals[2]))
        worst = max(worst, err / max(1.0, abs(vals[0])))
    return {"seed": seed, "trials": trials, "max_rel_err": worst, "pass": worst <= 1e-10}


def _certified(c, op):
    s = TruncatedSeries(c, "over-factorial")
    return s if s.is_zero() else s.with_certificate(certify_norm(s, op.kernel.seq))


def _with_radius(op, R):
    import dataclasses
    return dataclasses.replace(op, R0=R)


def cmd_sum(args, cfg):
    seq, _ = _sequence(args, cfg)
    kernel = _kernel(args, cfg, seq)
    series = _series(args.series)
    table = moment_table(kernel, max(4, series.N), quad_config(cfg, kernel.quad_cfg))
    g = builtin_continuation(args.continuation, seq, args.direction, args.opening,
                             check_growth=not args.no_growth_check)
    z = parse_z(args.z)
    run = m_sum(kernel, table, series, g, [z], tau=args.tau)
    res = run.results[0]
    body = {"kernel": kernel.describe(), "value": res.value, **run.to_dict()}
    write_report(args.out, body, cfg)
    _save_cache(args, kernel)
    return EXIT_OK if run.ok else EXIT_CHECK


def cmd_gap(args, cfg):
    seq, _ = _sequence(args, cfg)
    kernel = _kernel(args, cfg, seq)
    op, _ = _extension(args, cfg, seq, kernel)
    g = builtin_continuation(args.continuation, seq, args.direction, args.opening,
                             check_growth=not args.no_growth_check)
    moduli = parse_float_list(args.z_grid) if args.z_grid else [0.2, 0.1, 0.05, 0.02]
    rep = flat_gap(op, g, [RayPoint(r, args.direction) for r in moduli])
    write_report(args.out, {"kernel": kernel.describe(), "R0": op.R0, **rep.to_dict()}, cfg)
    _save_cache(args, kernel)
    return EXIT_OK if rep.decreasing else EXIT_CHECK


# ------------------------------------------------------------ parser

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config (quad tolerances, delta, kernel)")
    common.add_argument("--kernel-cache", dest="kernel_cache",
                        help="kernel cache directory (overrides ULTRASUM_CACHE)")
    common.add_argument("--seed", type=int, default=None,
                        help="enable randomised property sweeps with this seed")
    common.add_argument("--rel-tol", dest="rel_tol", type=float)
    common.add_argument("--abs-tol", dest="abs_tol", type=float)
    common.add_argument("-v", "--verbose", action="store_true")

    kern = argparse.ArgumentParser(add_help=False)
    kern.add_argument("--seq", default="gevrey1.json", help="sequence spec file")
    kern.add_argument("--kernel", choices=["auto", "constructed", "gevrey"], default=None)
    kern.add_argument("--delta", type=float, default=None,
                      help="sector opening (default: half the growth index)")

    p = _Parser(prog="ultrasum", description="Summation in ultraholomorphic classes.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("check-seq", parents=[common], help="regularity report")
    s.add_argument("--spec", required=True)
    s.add_argument("--pmax", type=int)
    s.add_argument("--tail-depth", dest="tail_depth", type=int)
    s.add_argument("--out", default="report.json")
    s.set_defaults(func=cmd_check_seq)

    s = sub.add_parser("kernel-profile", parents=[common, kern], help="kernel profile CSV")
    s.add_argument("--grid", default="logspace:-2,2,41")
    s.add_argument("--argument", type=float, default=0.0)
    s.add_argument("--out", default="profile.csv")
    s.set_defaults(func=cmd_kernel_profile)

    s = sub.add_parser("moments", parents=[common, kern], help="moment table CSV")
    s.add_argument("--pmax", type=int, default=12)
    s.add_argument("--out", default="moments.csv")
    s.add_argument("--report", help="optional JSON with the equivalence fit")
    s.set_defaults(func=cmd_moments)

    s = sub.add_parser("extend", parents=[common, kern], help="extension operator report")
    s.add_argument("--data", required=True, help="series file")
    s.add_argument("--z-grid", dest="z_grid", help="moduli, e.g. 0.02,0.05,0.1")
    s.add_argument("--z-args", dest="z_args", help="arguments (default 0, +-0.8 delta pi/2)")
    s.add_argument("--nmax", type=int, default=12)
    s.add_argument("--eps-margin", dest="eps_margin", type=float)
    s.add_argument("--derivatives", action="store_true",
                   help="also check f^(p)(0) = a_p for p <= 3")
    s.add_argument("--out", default="report.json")
    s.set_defaults(func=cmd_extend)

    cont = argparse.ArgumentParser(add_help=False)
    cont.add_argument("--continuation", required=True,
                      help="one_over_one_plus_u, exp, log_one_plus_u, rational(c0,...) "
                           "or an expression in u")
    cont.add_argument("--direction", type=float, default=0.0)
    cont.add_argument("--opening", type=float, default=1.0,
                      help="opening of the continuation sector in units of pi")
    cont.add_argument("--no-growth-check", dest="no_growth_check", action="store_true")

    s = sub.add_parser("sum", parents=[common, kern, cont], help="M-sum at one point")
    s.add_argument("--series", required=True)
    s.add_argument("--z", required=True, help="modulus,argument")
    s.add_argument("--tau", type=float, default=None)
    s.add_argument("--out", default="result.json")
    s.set_defaults(func=cmd_sum)

    s = sub.add_parser("gap", parents=[common, kern, cont],
                       help="truncated extension against the full sum")
    s.add_argument("--data", required=True)
    s.add_argument("--z-grid", dest="z_grid", help="moduli, e.g. 0.2,0.1,0.05,0.02")
    s.add_argument("--eps-margin", dest="eps_margin", type=float)
    s.add_argument("--out", default="gap.json")
    s.set_defaults(func=cmd_gap)
    return p


def _config_echo(args, cfg):
    skip = {"func", "verbose"}
    flags = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    return {"flags": flags, "file": cfg}


def run(argv=None):
    """Run one subcommand and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        echo = _config_echo(args, cfg)
        return args.func(args, echo)
    except (UsageError, InputError, OSError) as exc:
        print(f"ultrasum: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericCheckFailed as exc:
        print(f"ultrasum: numeric check failed: {exc}", file=sys.stderr)
        out = getattr(args, "out", None)
        if out and not str(out).endswith(".csv"):
            try:
                write_report(out, {"error": type(exc).__name__, "message": str(exc),
                                   "pass": False}, _config_echo(args, {}))
            except UsageError:
                pass
        elif out:
            header = PROFILE_HEADER if args.command == "kernel-profile" else MOMENT_HEADER
            try:
                write_csv(out, header, [])
            except UsageError:
                pass
        return EXIT_CHECK
    except UltrasumError as exc:
        print(f"ultrasum: error: {exc}", file=sys.stderr)
        return EXIT_CHECK


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
