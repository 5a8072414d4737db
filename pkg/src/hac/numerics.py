"""Exact arithmetic for encoder runs, with certified comparisons.

Every quantity a model run can produce lives in the ring

    Q[cos(pi*t/10), sin(pi*t/10) : t rational],

which is closed under the affine maps, dot products and means the runtime
performs (products of trig terms reduce via the product-to-sum identities).
Values are either a bare ``gmpy2.mpq`` (the common case) or an :class:`Exact`
carrying trig terms in canonical form.  Orderings and signs are decided by
certified interval brackets of the trig constants (mpmath's ``iv`` context,
outward rounded), escalating the working precision until the order is
certain; two values are deemed equal only when their canonical forms are
identical.  A comparison that cannot be certified raises
:class:`PrecisionEscalationError` instead of guessing.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, replace
from typing import Iterable, Sequence, Union

from gmpy2 import mpq
from mpmath import iv

RAT = mpq
ZERO = mpq(0)
ONE = mpq(1)

# Working-precision guard bits added on top of the requested bracket width.
_IV_GUARD = 8


class PrecisionEscalationError(ArithmeticError):
    """A sign or ordering could not be certified within the escalation budget."""


def rat(p, q=1) -> mpq:
    """Exact rational from ints or a canonical 'p/q' string."""
    return mpq(p, q) if q != 1 else mpq(p)


@dataclass(frozen=True)
class PrecisionPolicy:
    """Working-precision law for interval brackets: bits(n) = a*n + b.

    ``floor`` is an external override of the minimum bit budget (never below
    64).  ``mode`` is 'bigfloat' or 'exact-rational'; the latter is only
    legal for models whose values stay rational, where every comparison is
    exact and the bit law is irrelevant.
    """

    a: int = 4
    b: int = 64
    mode: str = "bigfloat"
    floor: int = 64
    max_escalations: int = 6

    def __post_init__(self):
        if self.mode not in ("bigfloat", "exact-rational"):
            raise ValueError(f"unknown precision mode {self.mode!r}")
        if self.a < 0 or self.b < 0:
            raise ValueError("precision law coefficients must be non-negative")

    def bits(self, n: int) -> int:
        return max(self.a * n + self.b, self.floor, 64)

    def doubled(self) -> "PrecisionPolicy":
        return replace(self, a=2 * self.a, b=2 * self.b, floor=2 * self.floor)


class Exact:
    """A value q0 + sum c_k*cos(pi*t_k/10) + sum s_k*sin(pi*t_k/10).

    Canonical: all t > 0, coefficients nonzero, terms sorted by t, and at
    least one trig term present (trig-free values are plain ``mpq``).
    Construct through :func:`_build`; instances are immutable.
    """

    __slots__ = ("rat", "cos", "sin", "_hash")

    def __init__(self, rational, cos_terms, sin_terms):
        object.__setattr__(self, "rat", rational)
        object.__setattr__(self, "cos", cos_terms)
        object.__setattr__(self, "sin", sin_terms)
        object.__setattr__(self, "_hash", hash((rational, cos_terms, sin_terms)))

    def __setattr__(self, name, value):
        raise AttributeError("Exact values are immutable")

    def __eq__(self, other):
        if isinstance(other, Exact):
            return (
                self.rat == other.rat
                and self.cos == other.cos
                and self.sin == other.sin
            )
        # canonical Exact always carries a trig term, hence is irrational
        if isinstance(other, (int, type(ZERO))):
            return False
        return NotImplemented

    def __hash__(self):
        return self._hash

    def __repr__(self):
        parts = [str(self.rat)] if self.rat else []
        parts += [f"{c}*cos(pi*{t}/10)" for t, c in self.cos]
        parts += [f"{c}*sin(pi*{t}/10)" for t, c in self.sin]
        return " + ".join(parts) or "0"


Number = Union[mpq, Exact]


class _Builder:
    """Accumulates terms, then emits a canonical mpq or Exact."""

    __slots__ = ("rat", "cos", "sin")

    def __init__(self):
        self.rat = ZERO
        self.cos = {}
        self.sin = {}

    def add_rat(self, c):
        self.rat += c

    def add_cos(self, t, c):
        if t < 0:
            t = -t
        if t == 0:
            self.rat += c
            return
        self.cos[t] = self.cos.get(t, ZERO) + c

    def add_sin(self, t, c):
        if t < 0:
            t, c = -t, -c
        if t == 0:
            return
        self.sin[t] = self.sin.get(t, ZERO) + c

    def add_value(self, x, scale=ONE):
        if isinstance(x, Exact):
            self.rat += scale * x.rat
            for t, c in x.cos:
                self.add_cos(t, scale * c)
            for t, c in x.sin:
                self.add_sin(t, scale * c)
        else:
            self.rat += scale * x

    def build(self) -> Number:
        cos = tuple(sorted((t, c) for t, c in self.cos.items() if c != 0))
        sin = tuple(sorted((t, c) for t, c in self.sin.items() if c != 0))
        if not cos and not sin:
            return self.rat
        return Exact(self.rat, cos, sin)


def cos_pi_tenths(t) -> Number:
    """cos(pi*t/10) for rational t, in canonical form."""
    b = _Builder()
    b.add_cos(mpq(t), ONE)
    return b.build()


def sin_pi_tenths(t) -> Number:
    """sin(pi*t/10) for rational t, in canonical form."""
    b = _Builder()
    b.add_sin(mpq(t), ONE)
    return b.build()


def add(x: Number, y: Number) -> Number:
    if not isinstance(x, Exact) and not isinstance(y, Exact):
        return x + y
    b = _Builder()
    b.add_value(x)
    b.add_value(y)
    return b.build()


def sub(x: Number, y: Number) -> Number:
    if not isinstance(x, Exact) and not isinstance(y, Exact):
        return x - y
    b = _Builder()
    b.add_value(x)
    b.add_value(y, -ONE)
    return b.build()


def neg(x: Number) -> Number:
    if not isinstance(x, Exact):
        return -x
    b = _Builder()
    b.add_value(x, -ONE)
    return b.build()


_HALF = mpq(1, 2)


def mul(x: Number, y: Number) -> Number:
    if not isinstance(x, Exact) and not isinstance(y, Exact):
        return x * y
    if not isinstance(x, Exact):
        x, y = y, x
    if not isinstance(y, Exact):
        if y == 0:
            return ZERO
        b = _Builder()
        b.add_value(x, y)
        return b.build()
    # full product: expand with product-to-sum identities
    b = _Builder()
    b.add_value(x, y.rat)
    b.add_value(Exact(ZERO, y.cos, y.sin), x.rat)
    for t, c in x.cos:
        for u, d in y.cos:
            # cos*cos = (cos(t-u) + cos(t+u)) / 2
            b.add_cos(t - u, _HALF * c * d)
            b.add_cos(t + u, _HALF * c * d)
        for u, d in y.sin:
            # cos*sin = (sin(t+u) - sin(t-u)) / 2
            b.add_sin(t + u, _HALF * c * d)
            b.add_sin(t - u, -_HALF * c * d)
    for t, c in x.sin:
        for u, d in y.cos:
            # sin*cos = (sin(t+u) + sin(t-u)) / 2
            b.add_sin(t + u, _HALF * c * d)
            b.add_sin(t - u, _HALF * c * d)
        for u, d in y.sin:
            # sin*sin = (cos(t-u) - cos(t+u)) / 2
            b.add_cos(t - u, _HALF * c * d)
            b.add_cos(t + u, -_HALF * c * d)
    return b.build()


def dot(xs: Sequence[Number], ys: Sequence[Number]) -> Number:
    if len(xs) != len(ys):
        raise ValueError("dot product of unequal lengths")
    acc: Number = ZERO
    for x, y in zip(xs, ys):
        if x == 0 or y == 0:
            continue
        acc = add(acc, mul(x, y))
    return acc


def mean(values: Iterable[Number]) -> Number:
    values = list(values)
    if not values:
        raise ValueError("mean of empty set")
    inv = mpq(1, len(values))
    acc: Number = ZERO
    for v in values:
        acc = add(acc, mul(v, inv))
    return acc


def _mpf_tuple_to_mpq(t) -> mpq:
    sign, man, exp, _ = t
    if man == 0:
        if exp != 0:
            raise ArithmeticError("non-finite interval endpoint")
        return ZERO
    v = mpq(int(man)) * mpq(2) ** int(exp)
    return -v if sign else v


@functools.lru_cache(maxsize=None)
def _trig_bracket(kind: str, t: mpq, bits: int) -> tuple:
    """Certified [lo, hi] bracket of cos/sin(pi*t/10) at the given precision."""
    old = iv.prec
    try:
        iv.prec = bits + _IV_GUARD
        x = iv.pi * int(t.numerator) / (10 * int(t.denominator))
        val = iv.cos(x) if kind == "cos" else iv.sin(x)
    finally:
        iv.prec = old
    lo, hi = val._mpi_
    return (_mpf_tuple_to_mpq(lo), _mpf_tuple_to_mpq(hi))


def bracket(x: Number, bits: int) -> tuple:
    """Certified rational interval containing x. Exact for rational x."""
    if not isinstance(x, Exact):
        return (x, x)
    lo = hi = x.rat
    for kind, terms in (("cos", x.cos), ("sin", x.sin)):
        for t, c in terms:
            blo, bhi = _trig_bracket(kind, t, bits)
            if c >= 0:
                lo += c * blo
                hi += c * bhi
            else:
                lo += c * bhi
                hi += c * blo
    return (lo, hi)


def to_float(x: Number, bits: int = 128) -> float:
    if not isinstance(x, Exact):
        return float(x)
    lo, hi = bracket(x, bits)
    return float((lo + hi) / 2)


def sign(x: Number, bits: int, max_escalations: int = 6) -> int:
    """Certified sign of x: -1, 0, or +1.

    0 is returned only for the exact rational zero; an Exact value whose
    sign stays uncertified through all escalations raises.
    """
    if not isinstance(x, Exact):
        return -1 if x < 0 else (1 if x > 0 else 0)
    b = bits
    for _ in range(max_escalations + 1):
        lo, hi = bracket(x, b)
        if lo > 0:
            return 1
        if hi < 0:
            return -1
        b *= 2
    raise PrecisionEscalationError(
        f"sign of {x!r} not certified within {max_escalations} escalations "
        f"from {bits} bits"
    )


def argmax(scores: Sequence[Number], bits: int, max_escalations: int = 6) -> list:
    """Indices attaining the exact maximum of ``scores``, sorted ascending.

    Scores with identical canonical forms tie exactly.  Distinct forms are
    separated by interval brackets, escalating precision; if separation
    fails, the ordering is reported as uncertifiable rather than resolved
    numerically.
    """
    if not scores:
        raise ValueError("argmax of empty score list")
    groups: dict = {}
    for idx, s in enumerate(scores):
        groups.setdefault(s, []).append(idx)
    reps = list(groups.items())
    if len(reps) == 1:
        return reps[0][1]
    if all(not isinstance(v, Exact) for v, _ in reps):
        best = max(v for v, _ in reps)
        return sorted(groups[best])
    b = bits
    alive = reps
    for _ in range(max_escalations + 1):
        bracketed = [(bracket(v, b), v, idxs) for v, idxs in alive]
        best_lo = max(br[0] for br, _, _ in bracketed)
        alive = [(v, idxs) for br, v, idxs in bracketed if br[1] >= best_lo]
        if len(alive) == 1:
            return sorted(alive[0][1])
        b *= 2
    raise PrecisionEscalationError(
        f"argmax among {len(alive)} symbolically distinct scores not "
        f"certified within {max_escalations} escalations from {bits} bits"
    )
