"""Command-line front end.

``horizon analyze <spec-file | builtin-name>`` parses a system description,
runs the pipeline, and writes report.json, fits.csv and trajectories/*.csv
into the output directory.  ``horizon sweep <builtin-name> --param a=...``
runs a parameter grid and writes an aggregate CSV.

Exit codes: 0 all verdicts pass (or none declared), 1 verdict failure,
2 parse error (with line/column), 3 pipeline error.

Spec files are UTF-8, line oriented, '#' comments.  Example::

    name demo
    var u0 positive
    var u1 positive
    field u0 : u1 * u0^(-2)
    field u1 : u1^2 * u0^(-1)
    type 0 1
    order 1
    transform directional index=u1
    transform desingularize
    transform rescale u0^2
    initial r=1 u0=1
    tau-end 11
    h-max 0.02
    window 1e-9 1e-3 absolute
    observable u1 : r^(-1) expect rho=1 q=0.5
    kind blow-up
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import pathlib
import sys
from fractions import Fraction

from .casebook import (
    CaseDefinition,
    Observable,
    RunPlan,
    builtin_cases,
    get_case,
    run_case,
    sweep,
)
from .compactify import (
    apply_recipe,
    base_field,
    blowup_chart,
    desingularize,
    directional_compactify,
    quasi_polar_compactify,
    restrict_invariant,
    time_rescale,
)
from .errors import HorizonError, ParseError
from .genpoly import parse_genpoly
from .rates import RateModel
from .structure import TypeVector

__all__ = ["main", "parse_spec_file"]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="horizon",
        description="Finite-time singularity analysis of autonomous ODEs",
    )
    sub = parser.add_subparsers(dest="command")

    pa = sub.add_parser("analyze", help="run one system (spec file or builtin case)")
    pa.add_argument("target", nargs="?", help="spec file path or builtin case name")
    pa.add_argument("--list-cases", action="store_true")
    _common_flags(pa)

    ps = sub.add_parser("sweep", help="run a builtin case over a parameter grid")
    ps.add_argument("case")
    ps.add_argument("--param", action="append", default=[],
                    metavar="NAME=V1,V2,...",
                    help="grid values for one parameter (repeatable)")
    _common_flags(ps)

    args = parser.parse_args(argv)
    if args.command == "analyze":
        return _cmd_analyze(args)
    if args.command == "sweep":
        return _cmd_sweep(args)
    parser.print_help()
    return 2


def _common_flags(p):
    p.add_argument("--tol-rho", type=float, default=None)
    p.add_argument("--tol-q", type=float, default=None)
    p.add_argument("--tau-max", type=float, default=None)
    p.add_argument("--rtol", type=float, default=None)
    p.add_argument("--atol", type=float, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=pathlib.Path, default=pathlib.Path("horizon-out"))


def _cmd_analyze(args) -> int:
    if args.list_cases:
        for name, spec in sorted(builtin_cases().items()):
            print(f"{name:10s} {spec.summary}")
        return 0
    if not args.target:
        print("error: no spec file or case name given", file=sys.stderr)
        return 2
    target = args.target
    try:
        if pathlib.Path(target).exists():
            cdef, params = parse_spec_file(pathlib.Path(target)), None
            report = run_case(_as_spec(cdef), None, seed=args.seed,
                              tol_rho=args.tol_rho, tol_q=args.tol_q,
                              tau_max=args.tau_max, rtol=args.rtol,
                              atol=args.atol, out_dir=args.out)
        else:
            try:
                spec = get_case(target)
            except KeyError as exc:
                print(f"error: {exc}", file=sys.stderr)
                return 2
            report = run_case(spec, None, seed=args.seed,
                              tol_rho=args.tol_rho, tol_q=args.tol_q,
                              tau_max=args.tau_max, rtol=args.rtol,
                              atol=args.atol, out_dir=args.out)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return 2
    except (HorizonError, ValueError) as exc:
        print(f"pipeline error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3

    _write_report(args.out, [report])
    _print_report(report)
    if report.status == "ERROR":
        return 3
    verdicts = report.all_verdicts
    if verdicts and not all(v["passed"] for v in verdicts):
        return 1
    if not report.eq_check.get("all_found", True):
        return 1
    return 0


def _as_spec(cdef: CaseDefinition):
    from .casebook import CaseSpec

    return CaseSpec(cdef.name, {}, {}, lambda: cdef, "from spec file")


def _cmd_sweep(args) -> int:
    try:
        spec = get_case(args.case)
    except KeyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    grid = [{}]
    for p in args.param:
        if "=" not in p:
            print(f"error: bad --param {p!r}", file=sys.stderr)
            return 2
        name, _, vals = p.partition("=")
        name = name.strip()
        if name not in spec.defaults:
            print(f"error: unknown parameter {name!r} for case {args.case}",
                  file=sys.stderr)
            return 2
        values = [_parse_number(v) for v in vals.split(",") if v]
        grid = [dict(g, **{name: v}) for g in grid for v in values]
    if not args.param:
        grid = []
    try:
        reports = sweep(spec, grid, seed=args.seed, jobs=args.jobs,
                        tol_rho=args.tol_rho, tol_q=args.tol_q,
                        tau_max=args.tau_max, rtol=args.rtol, atol=args.atol)
    except (HorizonError, ValueError) as exc:
        print(f"pipeline error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    args.out.mkdir(parents=True, exist_ok=True)
    _write_sweep_csv(args.out / "sweep.csv", reports)
    _write_report(args.out, reports)
    for rep in reports:
        _print_report(rep)
    if any(r.status == "ERROR" for r in reports):
        return 3
    if any(not v["passed"] for r in reports for v in r.all_verdicts):
        return 1
    return 0


def _parse_number(text: str):
    text = text.strip()
    if "/" in text:
        return Fraction(text)
    if "." in text or "e" in text or "E" in text:
        return float(text)
    return int(text)


# -- report emission -----------------------------------------------------------


def _fmt17(x):
    """Floats rendered with 17 significant digits (exact round-trip)."""
    if isinstance(x, float):
        if math.isinf(x) or math.isnan(x):
            return str(x)
        return float(format(x, ".17g"))
    if isinstance(x, dict):
        return {k: _fmt17(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_fmt17(v) for v in x]
    return x


def _write_report(out_dir: pathlib.Path, reports):
    out_dir.mkdir(parents=True, exist_ok=True)
    docs = [_fmt17(r.to_dict()) for r in reports]
    payload = docs[0] if len(docs) == 1 else {"schema": 1, "reports": docs}
    with open(out_dir / "report.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out_dir / "fits.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["case", "params", "run", "observable", "rho", "q", "C",
                    "r2", "s_min", "s_max", "n_samples", "collinear_q"])
        for r in reports:
            pstr = ";".join(f"{k}={v}" for k, v in r.params.items())
            for run in r.runs:
                for f in run.get("fits", []):
                    w.writerow([
                        r.case, pstr, run["label"], f["observable"],
                        f"{f['rho']:.17g}", f"{f['q']:.17g}",
                        f"{f['C']:.17g}", f"{f['r2']:.17g}",
                        f"{f['window'][0]:.17g}", f"{f['window'][1]:.17g}",
                        f["n_samples"], f["collinear_q"],
                    ])


def _write_sweep_csv(path, reports):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["case", "params", "status", "observable", "rho", "q", "r2"])
        for r in reports:
            pstr = ";".join(f"{k}={v}" for k, v in r.params.items())
            for run in r.runs:
                for f in run.get("fits", []):
                    w.writerow([r.case, pstr, r.status, f["observable"],
                                f"{f['rho']:.17g}", f"{f['q']:.17g}",
                                f"{f['r2']:.17g}"])


def _print_report(report):
    print(f"[{report.status}] {report.case} "
          + " ".join(f"{k}={v}" for k, v in report.params.items()))
    if report.error:
        print(f"  error: {report.error}")
    ec = report.eq_check
    if ec.get("expected"):
        ok = "all found" if ec["all_found"] else "MISSING"
        print(f"  equilibria: {len(report.equilibria)} found; expected {ok}")
    for run in report.runs:
        print(f"  run {run['label']}: {run.get('termination', '-')}")
        for v in run.get("verdicts", []):
            print(f"    {v.get('detail', v['name'] + ': ' + str(v['passed']))}")


# -- spec files -----------------------------------------------------------------


def parse_spec_file(path: pathlib.Path) -> CaseDefinition:
    """Parse the key-value system description into a CaseDefinition."""
    text = path.read_text(encoding="utf-8")
    st = _SpecState()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        try:
            _spec_line(st, line, lineno)
        except ParseError:
            raise
        except (ValueError, KeyError) as exc:
            raise ParseError(str(exc), lineno, 1)
    return st.finish()


class _SpecState:
    def __init__(self):
        self.name = "system"
        self.vars = []
        self.positive = []
        self.fields = {}
        self.alpha = None
        self.k = None
        self.boxes = {}
        self.transforms = []
        self.initial = {}
        self.direction = 1
        self.tau_end = 50.0
        self.h_max = math.inf
        self.rtol = 1e-11
        self.atol = 1e-12
        self.window = (1e-10, 1e-4)
        self.window_relative = True
        self.observables = []
        self.kind = "blow-up"
        self.expected_eqs = []
        self.prefactor = None

    def finish(self) -> CaseDefinition:
        if not self.vars:
            raise ParseError("no variables declared")
        missing = [v for v in self.vars if v not in self.fields]
        if missing:
            raise ParseError(f"missing field components for {missing}")
        base = base_field(
            self.vars,
            [self.fields[v] for v in self.vars],
            positive=tuple(self.positive),
            prefactor=self.prefactor,
            name=self.name,
        )
        chart = base
        t = None
        if self.alpha is not None:
            if self.k is None:
                raise ParseError("'type' declared without 'order'")
            t = TypeVector.make(self.alpha, self.k)
        for op, params, lineno in self.transforms:
            try:
                chart = _apply_transform(chart, t, op, params)
            except (HorizonError, ValueError) as exc:
                raise ParseError(f"transform {op}: {exc}", lineno, 1)
        pv = chart.poly_vars
        observables = []
        for name, expr_text, expect, lineno in self.observables:
            try:
                expr = parse_genpoly(expr_text, pv, line=lineno)
            except ParseError:
                raise
            observables.append(Observable(name, expr, *expect))
        init = []
        for v in chart.vars:
            if v not in self.initial:
                raise ParseError(f"initial value for {v!r} missing")
            init.append(self.initial[v])
        plan = RunPlan(
            label=self.name,
            initial=tuple(init),
            tau_end=self.tau_end,
            h_max=self.h_max,
            rtol=self.rtol,
            atol=self.atol,
            direction=self.direction,
            window=self.window,
            window_relative=self.window_relative,
            observables=tuple(observables),
            expect_finite_edge=(self.kind in
                                ("blow-up", "extinction", "quenching",
                                 "compacton-edge")) or None,
            stop_at_equilibrium=False,
        )
        return CaseDefinition(
            name=self.name,
            params={},
            base=base,
            chart=chart,
            type_vector=t,
            singularity_kind=self.kind,
            runs=[plan],
            eq_mode="horizon" if chart.radial is not None else "none",
            eq_box=self.boxes or None,
            expected_equilibria=tuple(tuple(e) for e in self.expected_eqs),
        )


def _spec_line(st: _SpecState, line: str, lineno: int):
    head, _, rest = line.strip().partition(" ")
    rest = rest.strip()
    if head == "name":
        st.name = rest
    elif head == "var":
        parts = rest.split()
        st.vars.append(parts[0])
        if "positive" in parts[1:]:
            st.positive.append(parts[0])
    elif head == "field":
        name, _, expr = rest.partition(":")
        name = name.strip()
        if name not in st.vars:
            raise ParseError(f"field for undeclared variable {name!r}", lineno, 7)
        col0 = line.index(":") + 1
        st.fields[name] = parse_genpoly(expr, st.vars, line=lineno, col0=col0)
    elif head == "prefactor":
        st.prefactor = parse_genpoly(rest, st.vars, line=lineno,
                                     col0=len("prefactor "))
    elif head == "type":
        st.alpha = [Fraction(x) for x in rest.split()]
    elif head == "order":
        st.k = Fraction(rest)
    elif head == "box":
        parts = rest.split()
        st.boxes[parts[0]] = (float(parts[1]), float(parts[2]))
    elif head == "transform":
        op, _, params_text = rest.partition(" ")
        params = _kv(params_text)
        st.transforms.append((op, params, lineno))
    elif head == "initial":
        for k, v in _kv(rest).items():
            st.initial[k] = float(v)
    elif head == "direction":
        st.direction = int(rest)
    elif head == "tau-end":
        st.tau_end = float(rest)
    elif head == "h-max":
        st.h_max = float(rest)
    elif head == "rtol":
        st.rtol = float(rest)
    elif head == "atol":
        st.atol = float(rest)
    elif head == "window":
        parts = rest.split()
        st.window = (float(parts[0]), float(parts[1]))
        st.window_relative = not (len(parts) > 2 and parts[2] == "absolute")
    elif head == "observable":
        name, _, tail = rest.partition(":")
        name = name.strip()
        expr_text, _, expect_text = tail.partition(" expect ")
        expect = (None, 0.05, 0.1)
        if expect_text:
            kv = _kv(expect_text)
            expect = (
                RateModel(float(Fraction(kv["rho"])), float(Fraction(kv.get("q", "0")))),
                float(kv.get("tol-rho", 0.05)),
                float(kv.get("tol-q", 0.1)),
            )
        st.observables.append((name, expr_text, expect, lineno))
    elif head == "kind":
        st.kind = rest
    elif head == "equilibrium":
        st.expected_eqs.append([float(Fraction(x)) for x in rest.split()])
    else:
        raise ParseError(f"unknown directive {head!r}", lineno, 1)


def _kv(text: str) -> dict:
    out = {}
    for item in text.split():
        k, _, v = item.partition("=")
        out[k] = v
    return out


def _apply_transform(chart, t, op, params):
    from .genpoly import GenMonomial

    if op == "directional":
        if t is None:
            raise ValueError("directional transform needs 'type' and 'order'")
        sign = {"+": 1, "-": -1, "": 1}.get(params.get("sign", "+"), 1)
        return directional_compactify(
            chart, t, params["index"], sign,
            radial_name=params.get("radial", "r"),
        )
    if op == "desingularize":
        if t is None:
            raise ValueError("desingularize needs 'order'")
        return desingularize(chart, t.k)
    if op == "rescale":
        factor_text = params.get("factor") or (next(iter(params)) if params else None)
        if factor_text is None:
            raise ValueError("rescale needs a monomial factor")
        poly = parse_genpoly(factor_text, chart.poly_vars)
        if len(poly.terms) != 1:
            raise ValueError("rescale factor must be a single monomial")
        ev, c = poly.terms[0]
        mono = GenMonomial.make(c, dict(zip(poly.vars, ev)))
        return time_rescale(chart, mono, check_positive=False)
    if op == "quasipolar":
        if t is None:
            raise ValueError("quasipolar needs 'type' and 'order'")
        return quasi_polar_compactify(chart, int(params["m"]), t.k)
    if op == "blowup":
        sign = {"+": 1, "-": -1}.get(params.get("sign", "+"), 1)
        return blowup_chart(
            chart,
            (Fraction(params["w1"]), Fraction(params["w2"])),
            params["var"],
            sign,
            radial_name=params.get("radial", "r"),
        )
    if op == "restrict":
        return restrict_invariant(chart, params["var"], Fraction(params["value"]))
    raise ValueError(f"unknown transform {op!r}")


def replay_chart(chart_doc: dict):
    """Rebuild a ChartField from a report's chart block (provenance replay)."""
    prov = chart_doc["provenance"]
    base_step = prov[0]
    bp = base_step["params"]
    vars = tuple(bp["vars"])
    comps = [parse_genpoly(c, vars) for c in bp["components"]]
    pre = parse_genpoly(bp["prefactor"], vars) if bp.get("prefactor") else None
    base = base_field(vars, comps, positive=tuple(bp.get("positive", ())),
                      prefactor=pre, name=bp.get("name", "base"))
    return apply_recipe(base, prov[1:])


if __name__ == "__main__":
    sys.exit(main())
