"""``multiacc`` command line: seeded experiments with JSON or CSV reports.

Exit codes: 0 success, 1 usage or input error, 2 sample budget or
capacity exceeded, 3 a violated verdict under ``--assert``.
Set ``MULTIACC_LOG`` (e.g. ``INFO``) to see progress on stderr.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from . import __version__
from . import accuracy as ac
from . import adaptive_merge as am
from . import gaussian_moments as gm
from . import io as mio
from . import pairing as pr
from . import permanent as pm
from . import sat_reduction as sr
from .errors import BudgetExceeded, CapacityError, EstimatorUndefined, MultiaccError

log = logging.getLogger("multiacc")

EXIT_OK, EXIT_USAGE, EXIT_BUDGET, EXIT_VIOLATED = 0, 1, 2, 3


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    samples: Optional[int] = None
    eps: float = 0.1
    delta: float = 0.1
    output: str = "json"
    cap: int = pr.DEFAULT_CAP
    threads: int = 1
    assert_ok: bool = False

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.samples is not None and self.samples < 1:
            raise ValueError("samples must be positive")
        if self.cap < 1 or self.threads < 1:
            raise ValueError("cap and threads must be positive")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


GLOBAL_DEFAULTS = {
    "seed": 0,
    "samples": None,
    "eps": 0.1,
    "delta": 0.1,
    "output": "json",
    "cap": pr.DEFAULT_CAP,
    "threads": 1,
    "assert_ok": False,
}


def _add_globals(p: argparse.ArgumentParser, suppress: bool):
    d = (lambda k: argparse.SUPPRESS) if suppress else GLOBAL_DEFAULTS.get
    p.add_argument("--seed", type=int, default=d("seed"), help="random seed, 64-bit unsigned (default 0)")
    p.add_argument("--samples", type=int, default=d("samples"),
                   help="Monte-Carlo samples; for haf-merge the probe budget (default per command)")
    p.add_argument("--eps", type=float, default=d("eps"), help="accuracy tolerance epsilon (default 0.1)")
    p.add_argument("--delta", type=float, default=d("delta"), help="failure probability delta (default 0.1)")
    p.add_argument("--output", choices=("json", "csv"), default=d("output"), help="report format (default json)")
    p.add_argument("--cap", type=int, default=d("cap"), help=f"enumeration cap (default {pr.DEFAULT_CAP})")
    p.add_argument("--threads", type=int, default=d("threads"), help="Monte-Carlo worker threads (default 1)")
    p.add_argument("--assert", dest="assert_ok", action="store_true", default=d("assert_ok"),
                   help="exit 3 if any verdict is 'violated'")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="multiacc", description="Multiaccuracy experiments for hafnian and permanent estimators.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        _add_globals(p, suppress=True)
        return p

    p = add("haf-merge", "adaptive merge of pairing-structure estimates of the hafnian")
    p.add_argument("structures", nargs="+", help="structure files (or inline s-expressions)")
    p.add_argument("--no-verify", action="store_true", help="skip exact verification")

    p = add("perm-estimate", "permanent and its heuristic estimates for one matrix")
    p.add_argument("matrix", help="JSON or whitespace-grid matrix file")
    p.add_argument("--estimators", default="all",
                   help="comma-separated subset of " + ",".join(pm.ESTIMATORS) + " (default all)")
    p.add_argument("--denominator", choices=("ms", "us"), default="ms", help="denominator of the multiplicative estimate")

    p = add("accuracy-check", "accuracy or multiaccuracy of an estimator against predictors")
    p.add_argument("--target", choices=("hafnian", "permanent"), required=True)
    p.add_argument("--n", type=int, required=True, help="matrix size")
    p.add_argument("--estimator", required=True, help="estimator, e.g. e_row or x:<structure file>")
    p.add_argument("--predictor", action="append", required=True, help="predictor, same forms as --estimator (repeatable)")
    p.add_argument("--mode", choices=("exact", "mc"), default="mc")
    p.add_argument("--criterion", choices=("exact", "approx"), default="exact",
                   help="zero defect, or the eps-approximate bound")

    p = add("reduce-cnf", "pairing structures whose intersection counts the models of a 3CNF")
    p.add_argument("cnf", help="DIMACS file")
    p.add_argument("--verify", action="store_true", help="check the intersection against brute-force counting")

    add("demo-digits", "running estimate of a sum of sixth digits of square roots")

    p = add("enumerate-pairings", "list the pairings of a structure, or all pairings of 1..n")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("structure", nargs="?", help="structure file (or inline s-expression)")
    g.add_argument("--n", type=int, help="enumerate every pairing of 1..n")

    p = add("validate-structure", "check structure invariants and report counts")
    p.add_argument("structure", help="structure file (or inline s-expression)")
    return parser


# ---------------------------------------------------------------------------
# Commands. Each returns (payload, exit_code).


def cmd_haf_merge(args, cfg: RunConfig):
    Ts = [mio.load_structure(s, cfg.cap) for s in args.structures]
    mc = am.MergeConfig(delta=cfg.delta, eps=cfg.eps, max_samples=cfg.samples or am.DEFAULT_MAX_PROBES)
    result = am.estimator(Ts, mc, cfg.seed)
    payload = {"command": "haf-merge", "seed": cfg.seed, "eps": cfg.eps, "delta": cfg.delta,
               "result": result.to_dict(), "floor": am.stopping_floor(len(Ts), cfg.delta, cfg.eps),
               "verification": None}
    code = EXIT_OK
    if not args.no_verify and all(T.num_pairings <= cfg.cap for T in Ts):
        try:
            reports = am.verify_merge_exact(result, cap=cfg.cap)
        except CapacityError:
            reports = None
        if reports is not None:
            payload["verification"] = [r.to_dict() for r in reports]
            if cfg.assert_ok and any(r.verdict == "violated" for r in reports):
                code = EXIT_VIOLATED
    return payload, code


def cmd_perm_estimate(args, cfg: RunConfig):
    A = mio.load_matrix(args.matrix)
    n = A.shape[0]
    names = list(pm.ESTIMATORS) if args.estimators == "all" else [s.strip() for s in args.estimators.split(",") if s.strip()]
    unknown = [s for s in names if s not in pm.ESTIMATORS]
    if unknown:
        raise UsageError(f"unknown estimators: {', '.join(unknown)}")
    estimates = []
    for name in names:
        entry = {"name": name, "value": None, "error": None}
        try:
            if name == "multiplicative":
                entry["denominator"] = args.denominator
                entry["value"] = pm.multiplicative(A, args.denominator)
            else:
                entry["value"] = pm.ESTIMATORS[name](A)
        except (EstimatorUndefined, CapacityError) as exc:
            entry["error"] = str(exc)
        estimates.append(entry)
    perm = pm.perm_bruteforce(A) if n <= pm.RYSER_MAX_N else None
    flags = []
    for e in estimates:
        if e["value"] is not None and e["value"] < 0 and (A >= 0).all():
            flags.append(f"{e['name']} is negative on a nonnegative matrix")
    return {"command": "perm-estimate", "n": n, "perm": perm, "estimates": estimates, "flags": flags}, EXIT_OK


def _hafnian_predictor(spec: str, n: int, cap: int) -> ac.Predictor:
    if spec == "1":
        return ac.CONSTANT
    if spec == "haf":
        return gm.hafnian_predictor(n)
    if spec.startswith("x:"):
        T = mio.load_structure(spec[2:], cap)
        if T.index_set != tuple(range(1, n + 1)):
            raise UsageError(f"structure {spec!r} does not pair exactly 1..{n}")
        return gm.structure_predictor(T, spec)
    raise UsageError(f"unknown hafnian predictor spec {spec!r} (use 1, haf or x:<file>)")


def _permanent_predictor(spec: str, n: int) -> ac.Predictor:
    try:
        return pm.permanent_predictor(spec, n)
    except KeyError:
        raise UsageError(f"unknown permanent predictor spec {spec!r} (use {', '.join(pm.PERMANENT_FAMILY)})") from None


def cmd_accuracy_check(args, cfg: RunConfig):
    n = args.n
    if n < 1:
        raise UsageError("--n must be positive")
    specs = [args.estimator, *args.predictor]
    cache = {}
    if args.target == "hafnian":
        make = lambda s: _hafnian_predictor(s, n, cfg.cap)  # noqa: E731
        Y = gm.hafnian_predictor(n)
    else:
        make = lambda s: _permanent_predictor(s, n)  # noqa: E731
        Y = pm.permanent_predictor("perm", n)
    for s in specs:
        if s not in cache:
            cache[s] = Y if s in ("haf", "perm") else make(s)
    f = cache[args.estimator]
    preds = [cache[s] for s in args.predictor]
    samples = cfg.samples or 10**5
    if args.mode == "exact":
        moments = gm.HafnianMoments(n, cfg.cap) if args.target == "hafnian" else pm.PermanentMoments(n)
    else:
        sampler = gm.sigma_sampler(n) if args.target == "hafnian" else pm.matrix_sampler(n)
        moments = ac.MonteCarloMoments(sampler, samples, cfg.seed, threads=cfg.threads)
    if args.criterion == "approx":
        reports = ac.check_approx_multiaccuracy(f, preds, Y, moments, cfg.eps)
    else:
        reports = ac.check_multiaccuracy(f, preds, Y, moments)
    payload = {"command": "accuracy-check", "target": args.target, "n": n, "mode": args.mode,
               "criterion": args.criterion, "estimator": args.estimator,
               "samples": samples if args.mode == "mc" else None, "seed": cfg.seed,
               "eps": cfg.eps if args.criterion == "approx" else None,
               "reports": [r.to_dict() for r in reports]}
    code = EXIT_VIOLATED if cfg.assert_ok and any(r.verdict == "violated" for r in reports) else EXIT_OK
    return payload, code


def cmd_reduce_cnf(args, cfg: RunConfig):
    phi = sr.parse_dimacs(mio.read_text(args.cnf))
    out = sr.build_reduction(phi)
    payload = {"command": "reduce-cnf", "num_vars": phi.num_vars, "num_clauses": phi.num_clauses,
               **out.to_dict(), "verification": None}
    code = EXIT_OK
    if args.verify:
        payload["verification"] = sr.verify_reduction(phi, cfg.cap)
        if cfg.assert_ok and not payload["verification"]["match"]:
            code = EXIT_VIOLATED
    return payload, code


def sixth_digit(n: int) -> int:
    """Sixth decimal digit of ``sqrt(n)``, from ``isqrt(n * 10^12)``."""
    return math.isqrt(n * 10**12) % 10


def demo_digits_table(first: int = 101, last: int = 120) -> dict:
    """Running estimates of ``Σ_{n=first}^{last} d_6(sqrt n)`` as digits are revealed."""
    ns = list(range(first, last + 1))
    digits = [sixth_digit(n) for n in ns]
    total = len(ns)
    # exact rationals so 90.5 etc. print without float noise
    estimates = [float(sum(digits[:k]) + (total - k) * Fraction(9, 2)) for k in range(total + 1)]
    return {"digits": [{"n": n, "digit": d} for n, d in zip(ns, digits)], "estimates": estimates}


def cmd_demo_digits(args, cfg: RunConfig):
    return {"command": "demo-digits", **demo_digits_table()}, EXIT_OK


def cmd_enumerate_pairings(args, cfg: RunConfig):
    if args.n is not None:
        if args.n < 0:
            raise UsageError("--n must be nonnegative")
        count = gm.double_factorial(args.n - 1) if args.n % 2 == 0 else 0
        if count > cfg.cap:
            raise CapacityError(f"{count} pairings exceeds cap={cfg.cap}")
        ps = pr.all_pairings(args.n)
    else:
        T = mio.load_structure(args.structure, cfg.cap)
        ps = pr.enumerate_pairings(T, cfg.cap)
    return {"command": "enumerate-pairings", "num_pairings": len(ps), "pairings": [str(p) for p in ps]}, EXIT_OK


def cmd_validate_structure(args, cfg: RunConfig):
    T = mio.load_structure(args.structure, cfg.cap)
    report = pr.validate_structure(T, cfg.cap).to_dict()
    return {"command": "validate-structure", "valid": True, "canonical": pr.serialize_structure(T), **report}, EXIT_OK


COMMANDS = {
    "haf-merge": cmd_haf_merge,
    "perm-estimate": cmd_perm_estimate,
    "accuracy-check": cmd_accuracy_check,
    "reduce-cnf": cmd_reduce_cnf,
    "demo-digits": cmd_demo_digits,
    "enumerate-pairings": cmd_enumerate_pairings,
    "validate-structure": cmd_validate_structure,
}


def run(argv=None) -> tuple:
    """Parse ``argv`` and run; returns ``(payload, exit code, stderr message, config)``."""
    try:
        args = build_parser().parse_args(argv)
        cfg = RunConfig(seed=args.seed, samples=args.samples, eps=args.eps, delta=args.delta,
                        output=args.output, cap=args.cap, threads=args.threads, assert_ok=args.assert_ok)
        payload, code = COMMANDS[args.command](args, cfg)
        return payload, code, None, cfg
    except UsageError as exc:
        return None, EXIT_USAGE, str(exc), None
    except BudgetExceeded as exc:
        return {"error": "budget_exceeded", "message": str(exc), "state": exc.state}, EXIT_BUDGET, str(exc), None
    except CapacityError as exc:
        return None, EXIT_BUDGET, f"capacity exceeded: {exc}", None
    except (MultiaccError, ValueError, OSError) as exc:
        return None, EXIT_USAGE, f"error: {exc}", None


def main(argv=None) -> int:
    level = getattr(logging, os.environ.get("MULTIACC_LOG", "WARNING").upper(), logging.WARNING)
    logging.basicConfig(level=level if isinstance(level, int) else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    payload, code, message, cfg = run(argv)
    if message:
        print(message, file=sys.stderr)
    if payload is not None:
        fmt = cfg.output if cfg else "json"
        sys.stdout.write(mio.to_csv(payload) if fmt == "csv" else mio.to_json(payload))
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
