"""Command-line front end.

Exit codes: 0 success, 1 a selftest check failed, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from itertools import product

from . import experiments, theory
from .exceptions import ConfigError, InvalidParity, TheoryUnavailable, TooLarge
from .padic_linalg import PadicCtx, Partition
from .quadratic_space import enumerate_ogr, intersect

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

CONFIG_ALIASES = {"seed": "master_seed", "primes": "prime_set"}
RUN_FLAGS = ("kind", "p", "E", "n", "r", "m", "q", "s", "e_list", "trials", "master_seed", "E_cap", "E0", "prime_set")


class UsageError(Exception):
    pass


def parse_partition(text: str) -> Partition:
    """Comma-separated positive integers (any order) or the empty string."""
    try:
        return Partition.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _int_list(text: str) -> tuple[int, ...]:
    text = text.strip().strip("[]")
    if not text:
        return ()
    try:
        return tuple(int(tok) for tok in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _exact(x):
    if isinstance(x, Fraction):
        return f"{x.numerator}/{x.denominator}"
    if isinstance(x, int):
        return str(x)
    return None


def _emit(text: str, output: str | None):
    if output:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------- run


def _run_config(args) -> experiments.ExperimentConfig:
    values = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"--config: cannot read {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise UsageError("--config: expected a flat JSON object")
        for key, value in data.items():
            key = CONFIG_ALIASES.get(key, key)
            if key in ("threads", "format", "output", "timing"):
                if getattr(args, key) in (None, False):
                    setattr(args, key, value)
                continue
            values[key] = value
    for name in RUN_FLAGS:
        value = getattr(args, name)
        if value is not None:
            values[name] = value
    if "kind" not in values:
        raise UsageError("run: --kind is required (flag or config file)")
    try:
        return experiments.ExperimentConfig.from_dict(values)
    except ConfigError as exc:
        raise UsageError(f"run: {exc}") from None


def _pretty_run(config, dist, report) -> str:
    lines = [f"kind={config.kind} p={config.p} n={config.n} trials={dist.trials} seed={config.master_seed}"]
    lines.append(f"resolved={dist.resolved} unresolved={dist.unresolved_count} theory={report.theory_name}")
    lines.append(f"{'class':<28} {'count':>8} {'empirical':>10} {'theory':>10} {'z':>7}")
    for row in report.rows:
        key = experiments.parse_class_label(config.kind, row.label)
        name = experiments.pretty_label(config.kind, key, config.p)
        theo = "" if row.theory is None else f"{row.theory:.6f}"
        z = "" if row.z_score is None else f"{row.z_score:+.2f}"
        lines.append(f"{name:<28} {row.count:>8} {row.empirical:>10.6f} {theo:>10} {z:>7}")
    if report.chi_square is not None:
        chi = report.chi_square
        lines.append(f"chi-square {chi.stat:.3f} on {chi.dof} dof, p-value {chi.p_value:.4g}")
    if report.tv_distance is not None:
        lines.append(f"total variation {report.tv_distance:.5f}")
    for check in report.checks:
        lines.append(f"{'PASS' if check.passed else 'FAIL'} {check.name} = {check.value:.4g}")
    return "\n".join(lines) + "\n"


def cmd_run(args) -> int:
    config = _run_config(args)
    threads = 1 if args.threads is None else args.threads
    if not isinstance(threads, int) or isinstance(threads, bool) or threads < 1:
        raise UsageError(f"--threads must be an integer >= 1, got {threads!r}")
    fmt = args.format or "json"
    if fmt not in ("json", "csv", "pretty"):
        raise UsageError(f"--format: unknown format {fmt!r}")
    dist, report, runtime = experiments.timed_run(config, threads)
    if fmt == "json":
        text = experiments.report_to_json(config, dist, report, runtime if args.timing else None)
    elif fmt == "csv":
        text = experiments.report_to_csv(report)
    else:
        text = _pretty_run(config, dist, report)
    _emit(text, args.output)
    return EXIT_OK


# ---------------------------------------------------------------- theory


def _type(args) -> theory.SymplecticType:
    try:
        return theory.SymplecticType(args.p, args.G)
    except ValueError as exc:
        raise UsageError(f"--G: {exc}") from None


def _need(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        raise UsageError(f"theory {args.op}: missing " + ", ".join(f"--{n}" for n in missing))


THEORY_OPS = {
    "gl-alt-ratio": (("m", "p"), lambda a: theory.gl_alt_ratio(a.m, a.p)),
    "euler-alt": (("r", "p"), lambda a: theory.euler_alt(a.r, a.p, a.tol)),
    "sp-order": (("p", "G"), lambda a: theory.sp_order(_type(a))),
    "w-weight": (("p", "G"), lambda a: theory.w_weight(_type(a))),
    "w-sum": (("p", "k"), lambda a: theory.w_sum_exact(a.p, a.k)),
    "pi-finite": (("p", "G", "n"), lambda a: theory.pi_finite(_type(a), a.n)),
    "pi-limit": (("p", "G", "r"), lambda a: theory.pi_limit(_type(a), a.r, tol=a.tol)),
    "stratum-finite": (("p", "G", "n", "r"), lambda a: theory.stratum_finite(_type(a), a.n, a.r)),
    "igusa": (("n", "s", "p"), lambda a: theory.igusa(a.n, a.s, a.p)),
    "ogr-count": (("n", "q"), lambda a: theory.ogr_count(a.n, a.q)),
    "moment-finite": (("m", "n", "q"), lambda a: theory.moment_finite(a.m, a.n, a.q)),
    "moment-limit": (("m", "q"), lambda a: theory.moment_limit(a.m, a.q)),
    "count-injections": (("G", "m", "q"), lambda a: theory.count_injections(a.G, a.m, a.q)),
    "prob-same-pairing": (("e_list", "n", "p"), lambda a: theory.prob_same_pairing(a.e_list, a.n, a.p)),
    "prob-nonzero-t": (("r", "p"), lambda a: theory.prob_nonzero_T(a.r, a.p)),
    "schubert-dim": (("n", "r"), lambda a: theory.schubert_dim(a.n, a.r)),
    "stratum-dim": (("n", "r"), lambda a: theory.stratum_dim(a.n, a.r)),
    "alt-rank-count": (("n", "rank", "p"), lambda a: theory.alt_rank_count(a.n, a.rank, a.p)),
}


def cmd_theory(args) -> int:
    required, fn = THEORY_OPS[args.op]
    _need(args, *required)
    try:
        value = fn(args)
    except (InvalidParity, TooLarge, ValueError) as exc:
        raise UsageError(f"theory {args.op}: {exc}") from None
    out = {"op": args.op, "args": {n: _jsonable(getattr(args, n)) for n in required}, "value": float(value)}
    if _exact(value) is not None:
        out["exact"] = _exact(value)
    if args.op in ("euler-alt", "pi-limit", "prob-nonzero-t"):
        r = args.r
        lo, hi = theory.euler_alt_bounds(r, args.p, args.tol)
        if args.op == "pi-limit":
            scale = float(value) / theory.euler_alt(r, args.p, args.tol)
            lo, hi = lo * scale, hi * scale
        elif args.op == "prob-nonzero-t":
            lo, hi = 1 - hi, 1 - lo
        out["bounds"] = [lo, hi]
    if args.format == "pretty":
        text = f"{args.op} = {out.get('exact', repr(out['value']))}"
        if "bounds" in out:
            text += f"  (certified in [{out['bounds'][0]!r}, {out['bounds'][1]!r}])"
        _emit(text + "\n", args.output)
    else:
        _emit(json.dumps(out) + "\n", args.output)
    return EXIT_OK


def _jsonable(x):
    if isinstance(x, Partition):
        return x.label()
    if isinstance(x, tuple):
        return list(x)
    return x


# ---------------------------------------------------------------- selftest


def _alt_matrices(n: int, q: int):
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    for vals in product(range(q), repeat=len(pairs)):
        A = [[0] * n for _ in range(n)]
        for (i, j), v in zip(pairs, vals):
            A[i][j] = v
            A[j][i] = (-v) % q
        yield A


def selftest_checks():
    """Enumeration oracles against the closed formulas; yields (name, expected, observed)."""
    from .padic_linalg import rank_mod_p

    for n, q in [(1, 2), (1, 3), (1, 4), (2, 2), (2, 3), (2, 4), (3, 2)]:
        yield f"ogr_count n={n} q={q}", theory.ogr_count(n, q), len(enumerate_ogr(n, q))
    for m, n, q in [(1, 1, 2), (1, 2, 2), (1, 1, 4)]:
        pts = enumerate_ogr(n, q)
        total = sum(theory.count_injections(intersect(Z, W), m, q) for Z in pts for W in pts)
        yield f"moment m={m} n={n} q={q}", theory.moment_finite(m, n, q), Fraction(total, len(pts) ** 2)
    for p, k in [(2, 1), (2, 2), (2, 3), (3, 1), (3, 2), (5, 1)]:
        yield f"w_sum p={p} k={k}", theory.w_sum_exact(p, k), sum(
            (Fraction(G.order, theory.sp_order(G, method="exhaustive")) for G in theory.symplectic_types(p, k)),
            Fraction(0),
        )
    for p, part in [(2, (1, 1)), (3, (1, 1)), (2, (2, 2)), (2, (1, 1, 1, 1)), (2, (2, 2, 1, 1)), (3, (2, 2))]:
        G = theory.SymplecticType(p, part)
        yield f"sp_order p={p} G={list(part)}", theory.sp_order(G, method="levels"), theory.sp_order(G, method="exhaustive")
    for n in (2, 4):
        ctx = PadicCtx(2, 1)
        mats = list(_alt_matrices(n, 2))
        invertible = sum(rank_mod_p(A, ctx) == n for A in mats)
        yield f"gl_alt_ratio m={n} p=2", theory.gl_alt_ratio(n, 2), Fraction(invertible, len(mats))
    for part, q, m in [((1,), 2, 1), ((2, 2), 4, 1), ((2, 1), 2, 2), ((2, 2), 2, 2), ((3, 1), 4, 1)]:
        yield f"injections G={list(part)} q={q} m={m}", theory.injection_count(part, m, q), theory.count_injections(part, m, q)
    for part, n in [((1, 1), 2), ((1, 1), 3), ((2, 2), 2), ((1,), 2)]:
        yield f"surjections G={list(part)} n={n}", theory.surj_count(part, n, 2), theory.surj_count_bruteforce(part, 2, n)


def cmd_selftest(args) -> int:
    results = []
    for name, expected, observed in selftest_checks():
        results.append({"name": name, "expected": str(expected), "observed": str(observed), "passed": expected == observed})
    ok = all(r["passed"] for r in results)
    if args.format == "pretty":
        lines = [f"{'PASS' if r['passed'] else 'FAIL'} {r['name']}: {r['observed']} (expected {r['expected']})" for r in results]
        _emit("\n".join(lines) + "\n", args.output)
    else:
        _emit(json.dumps({"passed": ok, "checks": results}, indent=2) + "\n", args.output)
    return EXIT_OK if ok else EXIT_FAILED


# ---------------------------------------------------------------- enumerate & cache


def cmd_enumerate(args) -> int:
    try:
        points = enumerate_ogr(args.n, args.q)
        formula = theory.ogr_count(args.n, args.q)
    except (TooLarge, ValueError) as exc:
        raise UsageError(f"enumerate: {exc}") from None
    out = {"n": args.n, "q": args.q, "count": len(points), "formula": formula}
    if not args.count_only:
        out["summands"] = [[[int(x) for x in row] for row in Z.basis] for Z in points]
    if args.format == "pretty":
        _emit(f"OGr_{args.n}(Z/{args.q}): {len(points)} summands (formula {formula})\n", args.output)
    else:
        _emit(json.dumps(out) + "\n", args.output)
    return EXIT_OK


def cmd_cache(args) -> int:
    cache = theory.sp_cache
    if args.action == "path":
        _emit(str(cache.path()) + "\n", args.output)
    elif args.action == "clear":
        cache.clear()
        _emit(json.dumps({"cleared": str(cache.path())}) + "\n", args.output)
    else:
        entries = [
            {"p": p, "G": Partition(part).label(), "sp_order": order}
            for (p, part), order in sorted(cache.entries().items())
        ]
        _emit(json.dumps({"path": str(cache.path()), "entries": entries}) + "\n", args.output)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="isoclass", description="Random isotropic summands and alternating matrices.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, default_format="json"):
        sp.add_argument("--format", choices=("json", "csv", "pretty"), default=default_format)
        sp.add_argument("--output", "-o", help="write to this file instead of stdout")

    run = sub.add_parser("run", help="run a Monte Carlo experiment")
    run.add_argument("--config", help="flat JSON object of run parameters; flags override it")
    run.add_argument("--kind", choices=experiments.KINDS)
    run.add_argument("--p", type=int)
    run.add_argument("--E", type=int)
    run.add_argument("--n", type=int)
    run.add_argument("--r", type=int)
    run.add_argument("--m", type=int)
    run.add_argument("--q", type=int)
    run.add_argument("--s", type=int)
    run.add_argument("--e-list", dest="e_list", type=_int_list)
    run.add_argument("--trials", type=int)
    run.add_argument("--seed", dest="master_seed", type=int)
    run.add_argument("--E-cap", dest="E_cap", type=int)
    run.add_argument("--E0", type=int)
    run.add_argument("--primes", dest="prime_set", type=_int_list)
    run.add_argument("--threads", type=int)
    run.add_argument("--timing", action="store_true", help="include runtime_seconds in the JSON report")
    run.add_argument("--format", choices=("json", "csv", "pretty"))
    run.add_argument("--output", "-o")
    run.set_defaults(func=cmd_run)

    th = sub.add_parser("theory", help="evaluate a closed-form formula")
    th.add_argument("op", choices=sorted(THEORY_OPS))
    th.add_argument("--p", type=int)
    th.add_argument("--G", type=parse_partition)
    th.add_argument("--n", type=int)
    th.add_argument("--r", type=int)
    th.add_argument("--m", type=int)
    th.add_argument("--q", type=int)
    th.add_argument("--s", type=int)
    th.add_argument("--k", type=int)
    th.add_argument("--rank", type=int)
    th.add_argument("--e-list", dest="e_list", type=_int_list)
    th.add_argument("--tol", type=float, default=1e-12)
    common(th)
    th.set_defaults(func=cmd_theory)

    st = sub.add_parser("selftest", help="check closed formulas against enumeration")
    common(st)
    st.set_defaults(func=cmd_selftest)

    en = sub.add_parser("enumerate", help="list every maximal isotropic summand of (Z/q)^(2n)")
    en.add_argument("--n", type=int, required=True)
    en.add_argument("--q", type=int, required=True)
    en.add_argument("--count-only", action="store_true")
    common(en)
    en.set_defaults(func=cmd_enumerate)

    ca = sub.add_parser("cache", help="inspect the automorphism-count cache")
    ca.add_argument("action", choices=("path", "list", "clear"))
    ca.add_argument("--output", "-o")
    ca.set_defaults(func=cmd_cache)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            raise UsageError("isoclass: error: a subcommand is required (run, theory, selftest, enumerate, cache)")
        return args.func(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except TheoryUnavailable as exc:
        print(f"isoclass: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        # --help and --version exit through argparse
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
