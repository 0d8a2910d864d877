"""Exact algebra for generalized polynomials.

A generalized polynomial is a finite sum of monomials ``c * prod(v_i^e_i)``
whose coefficients are real (int, Fraction, or float) and whose exponents are
exact rationals, possibly negative or fractional.  This is enough to express
every vector field handled by the pipeline, including inverse powers like
``u0^-2`` and fractional powers like ``v^(3/2)``.

Exponents are never floats: scaling identities, Newton-polyhedron vertices and
order-by-order series solving all require exact exponent arithmetic.
Coefficients stay exact (int/Fraction) as long as the inputs are exact; float
coefficients are carried through unchanged.

Terms are kept in a canonical order (sorted by exponent vector), zero
coefficients are dropped eagerly, and values are immutable, so equality is
term-set equality and instances are safely shareable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence, Union

from .errors import DomainError, ParseError

Coeff = Union[int, float, Fraction]
ExponentVec = tuple[Fraction, ...]

__all__ = [
    "GenMonomial",
    "GenPoly",
    "frac",
    "parse_genpoly",
    "format_genpoly",
]


def frac(value, den=None) -> Fraction:
    """Coerce to an exact Fraction (ints, strings like '3/2', Fractions)."""
    if den is not None:
        return Fraction(value, den)
    if isinstance(value, float):
        raise TypeError("exponents must be exact rationals, not floats")
    return Fraction(value)


@dataclass(frozen=True)
class GenMonomial:
    """A single monomial: coefficient times a power product of named variables."""

    coeff: Coeff
    exps: tuple[tuple[str, Fraction], ...]  # (variable, exponent), exponent != 0

    @staticmethod
    def make(coeff: Coeff, exps: Mapping[str, object] | None = None) -> "GenMonomial":
        items = tuple(sorted((v, frac(e)) for v, e in (exps or {}).items() if frac(e) != 0))
        return GenMonomial(coeff, items)

    def exp_of(self, var: str) -> Fraction:
        for v, e in self.exps:
            if v == var:
                return e
        return Fraction(0)

    def inverse(self) -> "GenMonomial":
        """Reciprocal monomial (coefficient must be nonzero)."""
        if self.coeff == 0:
            raise ZeroDivisionError("cannot invert the zero monomial")
        c = self.coeff
        inv_c = Fraction(1, 1) / c if isinstance(c, (int, Fraction)) else 1.0 / c
        return GenMonomial(inv_c, tuple((v, -e) for v, e in self.exps))


class GenPoly:
    """Immutable generalized polynomial over an ordered tuple of variables."""

    __slots__ = ("vars", "terms")

    def __init__(self, vars: Sequence[str], terms: Mapping[ExponentVec, Coeff] | Iterable):
        object.__setattr__(self, "vars", tuple(vars))
        if isinstance(terms, Mapping):
            items = terms.items()
        else:
            items = terms
        cleaned = {}
        n = len(self.vars)
        for exps, c in items:
            ev = tuple(frac(e) for e in exps)
            if len(ev) != n:
                raise ValueError(f"exponent vector {ev} does not match variables {self.vars}")
            if c == 0:
                continue
            if ev in cleaned:
                c = cleaned[ev] + c
                if c == 0:
                    del cleaned[ev]
                    continue
            cleaned[ev] = c
        object.__setattr__(self, "terms", tuple(sorted(cleaned.items(), key=lambda t: t[0])))

    # -- constructors ------------------------------------------------------

    @staticmethod
    def zero(vars: Sequence[str]) -> "GenPoly":
        return GenPoly(vars, {})

    @staticmethod
    def const(vars: Sequence[str], c: Coeff) -> "GenPoly":
        return GenPoly(vars, {(Fraction(0),) * len(vars): c})

    @staticmethod
    def var(vars: Sequence[str], name: str, power=1, coeff: Coeff = 1) -> "GenPoly":
        vars = tuple(vars)
        if name not in vars:
            raise ValueError(f"unknown variable {name!r}")
        ev = [Fraction(0)] * len(vars)
        ev[vars.index(name)] = frac(power)
        return GenPoly(vars, {tuple(ev): coeff})

    @staticmethod
    def monomial(vars: Sequence[str], m: GenMonomial) -> "GenPoly":
        vars = tuple(vars)
        ev = [Fraction(0)] * len(vars)
        for v, e in m.exps:
            if v not in vars:
                raise ValueError(f"unknown variable {v!r}")
            ev[vars.index(v)] = e
        return GenPoly(vars, {tuple(ev): m.coeff})

    # -- basic protocol ----------------------------------------------------

    def __setattr__(self, *a):  # immutability
        raise AttributeError("GenPoly is immutable")

    def is_zero(self) -> bool:
        return not self.terms

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, GenPoly)
            and self.vars == other.vars
            and self.terms == other.terms
        )

    def __hash__(self):
        return hash((self.vars, self.terms))

    def __repr__(self):
        return f"GenPoly({format_genpoly(self)!r}, vars={self.vars})"

    def _check_same_vars(self, other: "GenPoly"):
        if self.vars != other.vars:
            raise ValueError(f"variable mismatch: {self.vars} vs {other.vars}")

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, (int, float, Fraction)):
            other = GenPoly.const(self.vars, other)
        self._check_same_vars(other)
        acc = dict(self.terms)
        for ev, c in other.terms:
            acc[ev] = acc.get(ev, 0) + c
        return GenPoly(self.vars, acc)

    __radd__ = __add__

    def __neg__(self):
        return GenPoly(self.vars, {ev: -c for ev, c in self.terms})

    def __sub__(self, other):
        if isinstance(other, (int, float, Fraction)):
            other = GenPoly.const(self.vars, other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float, Fraction)):
            return GenPoly(self.vars, {ev: c * other for ev, c in self.terms})
        self._check_same_vars(other)
        acc: dict[ExponentVec, Coeff] = {}
        for ev1, c1 in self.terms:
            for ev2, c2 in other.terms:
                ev = tuple(a + b for a, b in zip(ev1, ev2))
                acc[ev] = acc.get(ev, 0) + c1 * c2
        return GenPoly(self.vars, acc)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if not isinstance(n, int) or n < 0:
            raise ValueError("only nonnegative integer powers of a GenPoly")
        out = GenPoly.const(self.vars, 1)
        for _ in range(n):
            out = out * self
        return out

    # -- calculus and evaluation -------------------------------------------

    def partial(self, var: str) -> "GenPoly":
        """Term-wise partial derivative with the rational power rule."""
        i = self.vars.index(var)
        acc: dict[ExponentVec, Coeff] = {}
        for ev, c in self.terms:
            e = ev[i]
            if e == 0:
                continue
            nev = list(ev)
            nev[i] = e - 1
            coeff = c * e if isinstance(c, (int, Fraction)) else c * float(e)
            acc_key = tuple(nev)
            acc[acc_key] = acc.get(acc_key, 0) + coeff
        return GenPoly(self.vars, acc)

    def eval(self, x: Sequence[float]) -> float:
        """Evaluate at a real point.

        Negative exponents require the corresponding coordinate to be nonzero
        with a defined sign; fractional exponents require it nonnegative
        (zero is allowed for positive exponents and evaluates to 0).
        Never returns NaN: bad inputs raise DomainError instead.
        """
        if len(x) != len(self.vars):
            raise ValueError("point dimension mismatch")
        total = 0.0
        for ev, c in self.terms:
            term = float(c)
            for xi, e, name in zip(x, ev, self.vars):
                if e == 0:
                    continue
                term *= _real_pow(float(xi), e, name)
            total += term
        if math.isnan(total):
            raise DomainError("evaluation produced NaN")
        return total

    def eval_exact(self, x: Sequence[Fraction]):
        """Evaluate exactly at a rational point (integer exponents only)."""
        total = Fraction(0)
        for ev, c in self.terms:
            term = Fraction(c) if isinstance(c, (int, Fraction)) else c
            for xi, e in zip(x, ev):
                if e == 0:
                    continue
                if e.denominator != 1:
                    raise DomainError("exact evaluation requires integer exponents")
                term = term * (Fraction(xi) ** int(e))
            total += term
        return total

    # -- structural operations ----------------------------------------------

    def substitute_power(
        self, assignments: Mapping[str, GenMonomial], new_vars: Sequence[str]
    ) -> "GenPoly":
        """Substitute a single monomial (in new variables) for each variable.

        Variables absent from ``assignments`` are mapped to themselves and
        must exist among ``new_vars``.  The result is exact.
        """
        new_vars = tuple(new_vars)
        mono_exps = {}
        mono_coeff = {}
        for v in self.vars:
            m = assignments.get(v)
            if m is None:
                if v not in new_vars:
                    raise ValueError(f"variable {v!r} has no assignment and is not kept")
                m = GenMonomial.make(1, {v: 1})
            ev = [Fraction(0)] * len(new_vars)
            for nv, e in m.exps:
                ev[new_vars.index(nv)] = e
            mono_exps[v] = tuple(ev)
            mono_coeff[v] = m.coeff
        acc: dict[ExponentVec, Coeff] = {}
        for ev, c in self.terms:
            out_ev = [Fraction(0)] * len(new_vars)
            coeff = c
            for v, e in zip(self.vars, ev):
                if e == 0:
                    continue
                coeff = coeff * _coeff_pow(mono_coeff[v], e)
                for j, me in enumerate(mono_exps[v]):
                    out_ev[j] += e * me
            key = tuple(out_ev)
            acc[key] = acc.get(key, 0) + coeff
        return GenPoly(new_vars, acc)

    def substitute_value(self, var: str, value: Coeff) -> "GenPoly":
        """Substitute an exact constant for one variable (integer exponents,
        unless the value is positive)."""
        i = self.vars.index(var)
        rest = self.vars[:i] + self.vars[i + 1 :]
        acc: dict[ExponentVec, Coeff] = {}
        for ev, c in self.terms:
            e = ev[i]
            coeff = c if e == 0 else c * _coeff_pow(value, e)
            key = ev[:i] + ev[i + 1 :]
            acc[key] = acc.get(key, 0) + coeff
        return GenPoly(rest, acc)

    def mul_monomial(self, m: GenMonomial) -> "GenPoly":
        """Exact multiplication by a single monomial."""
        shift = [Fraction(0)] * len(self.vars)
        for v, e in m.exps:
            shift[self.vars.index(v)] = e
        return GenPoly(
            self.vars,
            {
                tuple(a + b for a, b in zip(ev, shift)): c * m.coeff
                for ev, c in self.terms
            },
        )

    def min_exponent(self, var: str) -> Fraction | None:
        """Least exponent of ``var`` over all terms (None for the zero poly)."""
        if not self.terms:
            return None
        i = self.vars.index(var)
        return min(ev[i] for ev, _ in self.terms)

    def rename_vars(self, mapping: Mapping[str, str]) -> "GenPoly":
        new = tuple(mapping.get(v, v) for v in self.vars)
        return GenPoly(new, dict(self.terms))

    def with_vars(self, vars: Sequence[str]) -> "GenPoly":
        """Re-express over a superset/reordering of the current variables."""
        vars = tuple(vars)
        idx = []
        for v in self.vars:
            if v not in vars:
                raise ValueError(f"variable {v!r} missing from {vars}")
            idx.append(vars.index(v))
        acc = {}
        for ev, c in self.terms:
            out = [Fraction(0)] * len(vars)
            for j, e in zip(idx, ev):
                out[j] = e
            acc[tuple(out)] = c
        return GenPoly(vars, acc)

    def degrees_are_integral(self) -> bool:
        return all(e.denominator == 1 for ev, _ in self.terms for e in ev)

    def degrees_are_nonnegative(self) -> bool:
        return all(e >= 0 for ev, _ in self.terms for e in ev)

    def compile(self) -> Callable[..., float]:
        """Compile to a fast scalar function of the variables (in order).

        Unlike :meth:`eval` the compiled function returns NaN instead of
        raising on domain violations, so adaptive integrators can reject the
        step and retry.
        """
        names = [f"x{i}" for i in range(len(self.vars))]
        parts = []
        for ev, c in self.terms:
            factors = [repr(float(c))]
            for name, e in zip(names, ev):
                if e == 0:
                    continue
                if e.denominator == 1:
                    factors.append(f"{name}**{int(e)}")
                else:
                    factors.append(f"_fpow({name},{float(e)!r})")
            parts.append("*".join(factors))
        body = " + ".join(parts) if parts else "0.0"
        src = f"def _f({', '.join(names)}):\n    return {body}\n"
        ns = {"_fpow": _float_pow_nan}
        exec(compile(src, f"<genpoly:{format_genpoly(self)[:40]}>", "exec"), ns)
        return ns["_f"]


def _real_pow(x: float, e: Fraction, name: str) -> float:
    if e.denominator == 1:
        n = int(e)
        if x == 0.0:
            if n < 0:
                raise DomainError(f"negative power of {name}=0")
            return 0.0
        return x**n
    if x < 0.0:
        raise DomainError(f"fractional power of negative {name}={x}")
    if x == 0.0:
        if e < 0:
            raise DomainError(f"negative power of {name}=0")
        return 0.0
    return x ** float(e)


def _float_pow_nan(x: float, e: float) -> float:
    if x < 0.0:
        return math.nan
    if x == 0.0:
        return 0.0 if e > 0 else math.nan
    return x**e


def _coeff_pow(c: Coeff, e: Fraction) -> Coeff:
    """c**e, exact when possible; fractional e requires c > 0 (or c == +-1)."""
    if c == 1:
        return 1
    if e.denominator == 1:
        n = int(e)
        if isinstance(c, (int, Fraction)):
            return Fraction(c) ** n if n < 0 else c**n
        return c**n
    if c > 0:
        return float(c) ** float(e)
    raise DomainError(f"cannot raise coefficient {c} to fractional power {e}")


# -- textual syntax ---------------------------------------------------------
#
#   poly     := term ((+|-) term)*
#   term     := [coeff *] factor (* factor)*   |   coeff
#   factor   := var [^ exponent]
#   exponent := int | (int/int) | (-int/int) | (int)
#   coeff    := decimal [/ int]
#
# Example: "2 * u1^2 * u0^(-1) - 0.5*x"


def parse_genpoly(text: str, vars: Sequence[str], line: int = 1, col0: int = 0) -> GenPoly:
    """Parse the textual monomial syntax into a GenPoly over ``vars``.

    ``line``/``col0`` offset error positions for embedding in larger files.
    """
    vars = tuple(vars)
    toks = _tokenize(text, line, col0)
    pos = 0

    def peek():
        return toks[pos] if pos < len(toks) else None

    def take():
        nonlocal pos
        t = toks[pos]
        pos += 1
        return t

    poly = GenPoly.zero(vars)
    sign = 1
    first = True
    while peek() is not None:
        tk = peek()
        if tk.kind in "+-":
            take()
            sign = 1 if tk.kind == "+" else -1
        elif not first:
            raise ParseError(f"expected '+' or '-', got {tk.text!r}", line, tk.col)
        poly = poly + _parse_term(vars, sign, take, peek, line)
        sign = 1
        first = False
    if first:
        raise ParseError("empty expression", line, col0 + 1)
    return poly


def _parse_term(vars, sign, take, peek, line):
    coeff: Coeff = sign
    exps = {}
    saw_factor = False
    expect_factor = True
    while True:
        tk = peek()
        if tk is None or tk.kind in "+-":
            break
        if tk.kind == "*":
            take()
            expect_factor = True
            continue
        if not expect_factor:
            break
        take()
        if tk.kind == "num":
            coeff = coeff * tk.value
        elif tk.kind == "name":
            if tk.text not in vars:
                raise ParseError(f"unknown variable {tk.text!r}", line, tk.col)
            e = Fraction(1)
            if peek() is not None and peek().kind == "^":
                take()
                e = _parse_exponent(take, peek, line)
            exps[tk.text] = exps.get(tk.text, Fraction(0)) + e
        else:
            raise ParseError(f"unexpected {tk.text!r}", line, tk.col)
        saw_factor = True
        expect_factor = False
    if not saw_factor:
        t = peek()
        raise ParseError("empty term", line, t.col if t else 1)
    ev = [Fraction(0)] * len(vars)
    for v, e in exps.items():
        ev[vars.index(v)] = e
    return GenPoly(vars, {tuple(ev): coeff})


def _parse_exponent(take, peek, line) -> Fraction:
    tk = peek()
    if tk is None:
        raise ParseError("missing exponent after '^'", line, 1)
    if tk.kind == "num":
        take()
        if isinstance(tk.value, Fraction):
            return tk.value
        raise ParseError("exponents must be exact (use p/q, not decimals)", line, tk.col)
    if tk.kind == "(":
        take()
        sign = 1
        inner = peek()
        if inner is not None and inner.kind in "+-":
            take()
            sign = 1 if inner.kind == "+" else -1
            inner = peek()
        if inner is None or inner.kind != "num" or not isinstance(inner.value, Fraction):
            raise ParseError("expected rational exponent", line, tk.col + 1)
        take()
        closing = peek()
        if closing is None or closing.kind != ")":
            raise ParseError("missing ')'", line, inner.col)
        take()
        return sign * inner.value
    raise ParseError(f"bad exponent {tk.text!r}", line, tk.col)


class _Tok:
    __slots__ = ("kind", "text", "value", "col")

    def __init__(self, kind, text, value, col):
        self.kind = kind
        self.text = text
        self.value = value
        self.col = col


def _tokenize(text: str, line: int, col0: int) -> list[_Tok]:
    out = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        col = col0 + i + 1
        if ch.isspace():
            i += 1
            continue
        if ch in "+-*^()":
            out.append(_Tok(ch, ch, None, col))
            i += 1
            continue
        if ch.isdigit() or ch == ".":
            j = i
            while j < n and (text[j].isdigit() or text[j] in ".eE" or (text[j] in "+-" and text[j - 1] in "eE")):
                j += 1
            lit = text[i:j]
            # optional exact rational p/q
            if j < n and text[j] == "/" and "." not in lit and "e" not in lit and "E" not in lit:
                k = j + 1
                if k < n and (text[k].isdigit() or text[k] == "-"):
                    m = k + 1 if text[k] == "-" else k
                    while m < n and text[m].isdigit():
                        m += 1
                    den_txt = text[k:m]
                    try:
                        val = Fraction(int(lit), int(den_txt))
                    except ZeroDivisionError:
                        raise ParseError("zero denominator in exponent or coefficient", line, col)
                    out.append(_Tok("num", text[i:m], val, col))
                    i = m
                    continue
            try:
                val = Fraction(int(lit)) if ("." not in lit and "e" not in lit and "E" not in lit) else float(lit)
            except ValueError:
                raise ParseError(f"bad number {lit!r}", line, col)
            out.append(_Tok("num", lit, val, col))
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            out.append(_Tok("name", text[i:j], None, col))
            i = j
            continue
        raise ParseError(f"unexpected character {ch!r}", line, col)
    return out


def format_genpoly(p: GenPoly) -> str:
    """Canonical textual form; parse(format(p)) reproduces p term-for-term."""
    if not p.terms:
        return "0"
    parts = []
    for ev, c in p.terms:
        factors = []
        for v, e in zip(p.vars, ev):
            if e == 0:
                continue
            if e == 1:
                factors.append(v)
            elif e.denominator == 1:
                factors.append(f"{v}^{'(' + str(e) + ')' if e < 0 else e}")
            else:
                factors.append(f"{v}^({e})")
        cstr = _format_coeff(c)
        if factors and c == 1:
            term = " * ".join(factors)
        elif factors and c == -1:
            term = "-" + " * ".join(factors)
        else:
            term = " * ".join([cstr] + factors)
        parts.append(term)
    out = parts[0]
    for t in parts[1:]:
        if t.startswith("-"):
            out += " - " + t[1:]
        else:
            out += " + " + t
    return out


def _format_coeff(c: Coeff) -> str:
    if isinstance(c, Fraction):
        return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"
    return repr(c)
