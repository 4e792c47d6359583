"""Command-line front end: ``growthrate <group> <command> [options]``.

Exit status: 0 on success, 1 when an asserted bound fails, 2 on bad input.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import random
import sys
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

from . import conjgrowth, divisor, fds, hamiltonian, loopspace
from .linalg import field_from_spec

EXIT_OK, EXIT_BOUND, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    def __init__(self, message: str, diagnostics=()):
        super().__init__(message)
        self.diagnostics = list(diagnostics)


# --------------------------------------------------------------------------
# input helpers
# --------------------------------------------------------------------------

def bundled(name: str) -> str:
    return resources.files("growthrate").joinpath("data", name).read_text()


def _read_json(path: str | None, default: str | None = None) -> dict:
    try:
        text = Path(path).read_text() if path else bundled(default)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        where = path or default
        raise InputError(f"{where}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def load_divisor(path: str | None) -> divisor.DivisorModel:
    try:
        D = divisor.DivisorModel.from_dict(_read_json(path, "depth3_divisor.json"))
    except divisor.DivisorError as exc:
        raise InputError(f"{path}: malformed divisor model", exc.problems) from exc
    v = divisor.validate(D)
    if not v:
        raise InputError(f"{path or 'bundled model'}: invalid divisor model", v.diagnostics)
    return D


def load_profile(path: str | None, D: divisor.DivisorModel) -> hamiltonian.NuProfile:
    if path:
        P = hamiltonian.NuProfile.from_dict(_read_json(path))
    else:
        P = hamiltonian.NuProfile.default(float(D.epsilon), float(D.kappa_min))
    probs = P.problems([float(w) for w in D.wrapping])
    if probs:
        raise InputError("profile not compatible with the model", probs)
    return P


def lambda_grid(args) -> list[float]:
    grid = hamiltonian.log_grid(args.lambda_min, args.lambda_max, args.samples)
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise InputError("lambda grid must be strictly increasing")
    return grid


# --------------------------------------------------------------------------
# commands: each returns (report, rows, status)
# --------------------------------------------------------------------------

def cmd_fds_gamma(args):
    field = field_from_spec(args.field)
    F = fds.FiniteFDS.from_dict(_read_json(args.system, "degree2_fds.json"), field)
    est = fds.gamma(F, fit_window=args.fit_window, inf_threshold=args.inf_threshold)
    g = F.growth()
    rows = [{"x": float(x), "a": a} for x, a in zip(g.xs, g.values)]
    return {"field": field.name, "breakpoints": len(F), "gamma": est.to_dict()}, rows, EXIT_OK


def _iso_trial(task):
    seed, trial, field_spec, tol = task
    field = field_from_spec(field_spec)
    rng = random.Random(f"{seed}:{trial}")
    pair = fds.random_isomorphic_pair(rng, field)
    rep = fds.gamma_invariance_test(pair.source, pair.target, pair.phi, pair.phi_prime, tol)
    row = {"trial": trial, "isomorphic": rep.isomorphic, "equal": rep.equal,
           "gamma_source": rep.gamma_source.to_dict()["value"] if rep.gamma_source else None,
           "gamma_target": rep.gamma_target.to_dict()["value"] if rep.gamma_target else None}
    return row


def _sandwich_trial(task):
    seed, trial, field_spec = task
    rng = random.Random(f"{seed}:sandwich:{trial}")
    res = fds.random_sandwich_instance(rng, field_from_spec(field_spec)).check()
    return {"trial": trial, "sandwich": res.ok, "failed": res.failed}


def _pmap(fn, tasks, jobs: int):
    if jobs <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, tasks))


def cmd_fds_check_iso(args):
    field = field_from_spec(args.field)
    if args.random:
        rows = _pmap(_iso_trial, [(args.seed, t, field.name, args.tol) for t in range(args.random)], args.jobs)
        sand = _pmap(_sandwich_trial, [(args.seed, t, field.name) for t in range(args.sandwich)], args.jobs)
        ok = all(r["isomorphic"] and r["equal"] for r in rows) and all(s["sandwich"] for s in sand)
        report = {"trials": len(rows), "isomorphic": sum(r["isomorphic"] for r in rows),
                  "gamma_agree": sum(r["equal"] for r in rows),
                  "sandwich_trials": len(sand), "sandwich_passed": sum(s["sandwich"] for s in sand),
                  "tolerance": args.tol, "ok": ok}
        return report, rows + sand, EXIT_OK if ok else EXIT_BOUND
    if not (args.source and args.target and args.phi and args.phi_prime):
        raise InputError("check-iso needs --source --target --phi --phi-prime, or --random N")
    F = fds.FiniteFDS.from_dict(_read_json(args.source), field)
    Fp = fds.FiniteFDS.from_dict(_read_json(args.target), field)
    phi = fds.FDSMorphism.from_dict(_read_json(args.phi), field)
    phi_p = fds.FDSMorphism.from_dict(_read_json(args.phi_prime), field)
    iso = fds.check_isomorphism_witness(phi, phi_p, F, Fp)
    report = {"isomorphic": iso.ok, "reason": iso.reason}
    if iso:
        report.update(fds.gamma_invariance_test(F, Fp, phi, phi_p, args.tol).to_dict())
    return report, None, EXIT_OK if iso else EXIT_BOUND


def cmd_divisor_d(args):
    D = load_divisor(args.model)
    return {"n": D.n, "k": D.k, "d": divisor.depth_d(D), "strata": len(D.nonempty_strata)}, None, EXIT_OK


def cmd_divisor_ma(args):
    models = [load_divisor(p) for p in args.models]
    ds = [divisor.depth_d(D) for D in models]
    rows = [{"model": p, "d": d} for p, d in zip(args.models, ds)]
    return {"m_A_upper_bound": divisor.m_A(models), "models": len(models)}, rows, EXIT_OK


def _census_header(D, P):
    return {"d": divisor.depth_d(D), "C": hamiltonian.bound_constant(D),
            "C_H": hamiltonian.action_constant(D, P), "tau": str(P.tau),
            "omega_max": P.omega_max}


def cmd_orbits_census(args):
    D = load_divisor(args.model)
    P = load_profile(args.profile, D)
    rows = hamiltonian.sweep(D, P, lambda_grid(args), args.action_filter, args.jobs)
    out = []
    ok = True
    for c in rows:
        row = c.to_row()
        row["action_bound_ok"] = c.max_action is None or c.max_action <= c.lam_eff * c.C_H * (1 + 1e-9)
        row["tau_bound_ok"] = c.N <= math.floor(P.tau * c.lam_eff / hamiltonian.TWO_PI)
        ok &= row["bound_satisfied"] and row["action_bound_ok"] and row["tau_bound_ok"]
        out.append(row)
    report = {**_census_header(D, P), "samples": len(out), "all_bounds_satisfied": ok}
    return report, out, EXIT_OK if ok else EXIT_BOUND


def cmd_orbits_gamma(args):
    D = load_divisor(args.model)
    P = load_profile(args.profile, D)
    fit = hamiltonian.growth_exponent(D, P, lambda_grid(args), args.action_filter, args.jobs,
                                      cover_degree=args.cover)
    rows = [{"lambda": x, "count": a} for x, a in zip(fit.samples.xs, fit.samples.values)]
    report = {**_census_header(D, P), "cover_degree": args.cover,
              "gamma": fit.estimate.to_dict(), "expected": fit.expected}
    return report, rows, EXIT_OK


def _free_product(args) -> conjgrowth.FreeProduct:
    if args.factors:
        try:
            return conjgrowth.FreeProduct(tuple(conjgrowth.FiniteGroupTable.from_dict(_read_json(p))
                                                for p in args.factors))
        except conjgrowth.GroupTableError as exc:
            raise InputError(f"bad group table: {exc}") from exc
    try:
        orders = [int(v) for v in args.cyclic.split(",")]
    except ValueError as exc:
        raise InputError(f"--cyclic expects comma-separated orders, got {args.cyclic!r}") from exc
    if any(n < 2 for n in orders):
        raise InputError("cyclic factors must have order >= 2")
    return conjgrowth.FreeProduct.of_cyclic(*orders)


def cmd_conj_count(args):
    G = _free_product(args)
    r = conjgrowth.count_classes(G, args.max_len, method=args.method)
    rows = [{"i": i, "r": v} for i, v in enumerate(r, start=1)]
    report = {"factors": [F.size for F in G.factors], "method": args.method}
    try:
        report["gamma_cong"] = conjgrowth.gamma_cong(r).to_dict()
    except ValueError as exc:
        report["gamma_cong"] = None
        report["gamma_note"] = str(exc)
    return report, rows, EXIT_OK


def cmd_conj_witness(args):
    G = _free_product(args)
    if args.subset is not None:
        I = [int(v) for v in args.subset.split(",") if v.strip()]
        w = conjgrowth.witness_family(G, args.k, I)
        return {"k": args.k, "I": sorted(w.I), "length": w.length,
                "reduced_length": len(w.word), "word": [list(l) for l in w.word]}, None, EXIT_OK
    rows = []
    ok = True
    for k in range(1, args.k + 1):
        rep = conjgrowth.verify_lower_bound(k, G)
        rows.append(rep.to_dict())
        ok &= rep.ok
    return {"factors": [F.size for F in G.factors], "max_k": args.k, "ok": ok}, rows, \
        EXIT_OK if ok else EXIT_BOUND


def cmd_loops_torus(args):
    if args.metric:
        T = loopspace.TorusModel.from_dict(_read_json(args.metric))
    else:
        T = loopspace.TorusModel.flat(args.dim)
    if args.scale != 1:
        T = T.scaled(args.scale)
    lg = loopspace.torus_gamma(T, args.lambda_min, args.lambda_max, args.samples)
    grid = hamiltonian.log_grid(args.lambda_min, args.lambda_max, args.samples)
    rows = [{"lambda": l, "a": loopspace.torus_a(T, l)} for l in grid]
    report = {"n": T.n, "gamma_lambda": lg.lam_scale.to_dict(), "gamma_length": lg.length_scale.to_dict(),
              "expected_lambda": lg.expected_lam, "expected_length": lg.expected_length}
    return report, rows, EXIT_OK


# --------------------------------------------------------------------------
# parser and output
# --------------------------------------------------------------------------

def _common(defaults: bool) -> argparse.ArgumentParser:
    """Global flags; accepted before or after the subcommand."""
    p = argparse.ArgumentParser(add_help=False)
    d = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
    p.add_argument("--field", default=d("q"), help="coefficient field: q or fp:P")
    p.add_argument("--seed", type=int, default=d(0))
    p.add_argument("--out", default=d(None), help="write the report here instead of stdout")
    p.add_argument("--format", choices=("json", "csv"), default=d("json"))
    p.add_argument("--reproducible", action="store_true", default=d(False),
                   help="omit the timestamp so reports are byte-identical")
    p.add_argument("--jobs", type=int, default=d(1), help="worker processes")
    return p


def _grid_args(p, lo, hi, samples):
    p.add_argument("--lambda-min", type=float, default=lo)
    p.add_argument("--lambda-max", type=float, default=hi)
    p.add_argument("--samples", type=int, default=samples)


def build_parser() -> argparse.ArgumentParser:
    leaf = _common(defaults=False)
    parser = argparse.ArgumentParser(prog="growthrate", parents=[_common(defaults=True)],
                                     description="Growth-rate invariants: filtered systems, orbit "
                                                 "censuses, conjugacy and loop growth.")
    groups = parser.add_subparsers(dest="group", required=True)

    g = groups.add_parser("fds", help="filtered directed systems").add_subparsers(dest="cmd", required=True)
    p = g.add_parser("gamma", parents=[leaf], help="fit Gamma of a system (default: bundled degree-2)")
    p.add_argument("system", nargs="?")
    p.add_argument("--fit-window", type=float, default=fds.DEFAULT_FIT_WINDOW)
    p.add_argument("--inf-threshold", type=float, default=fds.DEFAULT_INF_THRESHOLD)
    p.set_defaults(func=cmd_fds_gamma)
    p = g.add_parser("check-iso", parents=[leaf], help="verify an isomorphism witness pair")
    for name in ("--source", "--target", "--phi", "--phi-prime"):
        p.add_argument(name)
    p.add_argument("--random", type=int, default=0, help="run N seeded random pairs instead")
    p.add_argument("--sandwich", type=int, default=0, help="also run N seeded sandwich instances")
    p.add_argument("--tol", type=float, default=0.05)
    p.set_defaults(func=cmd_fds_check_iso)

    g = groups.add_parser("divisor", help="compactification models").add_subparsers(dest="cmd", required=True)
    p = g.add_parser("d", parents=[leaf], help="depth d of a model")
    p.add_argument("model", nargs="?")
    p.set_defaults(func=cmd_divisor_d)
    p = g.add_parser("ma", parents=[leaf], help="minimum d over several compactifications")
    p.add_argument("models", nargs="+")
    p.set_defaults(func=cmd_divisor_ma)

    g = groups.add_parser("orbits", help="Hamiltonian orbit censuses").add_subparsers(dest="cmd", required=True)
    for name, fn, help_ in (("census", cmd_orbits_census, "per-lambda census with bound checks"),
                            ("gamma", cmd_orbits_gamma, "fitted growth exponent of the census")):
        p = g.add_parser(name, parents=[leaf], help=help_)
        p.add_argument("--model", help="divisor model JSON (default: bundled d=3 model)")
        p.add_argument("--profile", help="nu profile JSON (default: cubic glue)")
        p.add_argument("--action-filter", type=float, default=None, metavar="C")
        _grid_args(p, 10.0, 1000.0, 40)
        if name == "gamma":
            p.add_argument("--cover", type=int, default=1, help="degree of a finite cover")
        p.set_defaults(func=fn)

    g = groups.add_parser("conj", help="conjugacy growth").add_subparsers(dest="cmd", required=True)
    for name, fn in (("count", cmd_conj_count), ("witness", cmd_conj_witness)):
        p = g.add_parser(name, parents=[leaf])
        p.add_argument("--factors", nargs="+", help="group table JSON files")
        p.add_argument("--cyclic", default="2,2,2", help="cyclic factor orders (default 2,2,2)")
        if name == "count":
            p.add_argument("--max-len", type=int, default=10)
            p.add_argument("--method", choices=("enumerate", "burnside"), default="burnside")
        else:
            p.add_argument("--k", type=int, default=8)
            p.add_argument("--subset", help="comma-separated I; prints the single witness a_I")
        p.set_defaults(func=fn)

    g = groups.add_parser("loops", help="loop-space growth").add_subparsers(dest="cmd", required=True)
    p = g.add_parser("torus", parents=[leaf], help="flat torus lattice model")
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--metric", help="JSON with n and g (rational strings)")
    p.add_argument("--scale", type=float, default=1.0, help="multiply the metric")
    _grid_args(p, 5.0, 50.0, 40)
    p.set_defaults(func=cmd_loops_torus)
    return parser


def _jsonable(v):
    if isinstance(v, float) and v != v:
        return None
    return v


def render(report: dict, rows, fmt: str) -> str:
    if fmt == "json":
        doc = dict(report)
        if rows is not None:
            doc["rows"] = rows
        return json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n"
    buf = io.StringIO()
    if rows:
        keys: list = []
        for r in rows:
            keys += [k for k in r if k not in keys]
        w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _jsonable(r.get(k)) for k in keys})
    else:
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["key", "value"])
        for k, v in sorted(report.items()):
            w.writerow([k, json.dumps(v, sort_keys=True, default=str) if isinstance(v, (dict, list)) else v])
    return buf.getvalue()


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        report, rows, status = args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for line in exc.diagnostics:
            print(f"  {line}", file=sys.stderr)
        return EXIT_INPUT
    except (ValueError, KeyError, TypeError, hamiltonian.CensusCapError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    report = {"command": f"{args.group} {args.cmd}", **report, "exit_status": status}
    if not args.reproducible:
        report["timestamp"] = datetime.now(timezone.utc).isoformat()
    text = render(report, rows, args.format)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return status


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
