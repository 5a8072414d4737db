"""Temporal-logic formulas over finite words, their syntax and semantics.

This module is the ground truth: formulas are evaluated directly from the
satisfaction relation, position by position, and everything the compiler
emits is judged against these functions.  Two fragments are supported: the
monadic fragment (Booleans, X, U, unary numerical predicate atoms) and the
counting fragment, which adds prefix/suffix satisfaction counts, predicates
applied to counts, and integer linear inequalities over counts.

Words are non-empty strings over a fixed alphabet of single-character
symbols; positions run from 0 to n-1.  Unary numerical predicates are total
on 0..n inclusive (counts can reach n).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Iterator, Union

LEFT = "left"
RIGHT = "right"


class ParseError(ValueError):
    """Syntax error, carrying the 0-based offset into the source text."""

    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} (at offset {pos})")
        self.pos = pos


class PredicateDomainError(ValueError):
    """A table-backed predicate was queried outside its stored bound."""


@dataclass(frozen=True)
class Alphabet:
    """Ordered, duplicate-free single-character symbols; order fixes the
    one-hot coordinate assignment."""

    symbols: tuple

    def __post_init__(self):
        if not self.symbols:
            raise ValueError("alphabet must be non-empty")
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError("alphabet symbols must be distinct")
        for s in self.symbols:
            if not isinstance(s, str) or len(s) != 1:
                raise ValueError(f"alphabet symbol {s!r} is not a single character")

    @classmethod
    def of(cls, text: str) -> "Alphabet":
        return cls(tuple(text))

    def index(self, symbol: str) -> int:
        try:
            return self.symbols.index(symbol)
        except ValueError:
            raise ValueError(f"symbol {symbol!r} not in alphabet") from None

    def __contains__(self, symbol: str) -> bool:
        return symbol in self.symbols

    def __len__(self) -> int:
        return len(self.symbols)

    def __iter__(self):
        return iter(self.symbols)

    def __str__(self) -> str:
        return "".join(self.symbols)


# ---------------------------------------------------------------------------
# unary numerical predicates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UnaryPredicate:
    """A named family of bit functions, one per word length n, total on 0..n.

    Identity (equality, hashing, serialization) is (name, params); the
    evaluator is compared by identity of the family, never by function
    object.
    """

    name: str
    params: tuple = ()
    fn: Callable = field(compare=False, repr=False, default=None)

    def __call__(self, n: int, i: int) -> int:
        if n < 1:
            raise ValueError(f"word length must be >= 1, got {n}")
        if not 0 <= i <= n:
            raise ValueError(f"predicate argument {i} out of range 0..{n}")
        bit = self.fn(n, i)
        if bit not in (0, 1):
            raise ValueError(f"predicate {self.name} returned non-bit {bit!r}")
        return bit


def _even_fn(n, i):
    return 1 - i % 2


def _mod_fn(p, r, n, i):
    return 1 if i % p == r else 0


def _eq_fn(c, n, i):
    return 1 if i == c else 0


def _geq_fn(c, n, i):
    return 1 if i >= c else 0


def _midpoint_fn(n, i):
    return 1 if n % 2 == 0 and i == n // 2 - 1 else 0


def _is_prime(k: int) -> bool:
    if k < 2:
        return False
    if k < 4:
        return True
    if k % 2 == 0:
        return False
    d = 3
    while d * d <= k:
        if k % d == 0:
            return False
        d += 2
    return True


def _prime_shift_fn(n, i):
    return 1 if _is_prime(i + 1) else 0


def _table_fn(name, n, i):
    rows = _TABLES.get(name)
    if rows is None:
        raise PredicateDomainError(f"table predicate {name!r} is not registered")
    bits = rows.get(n)
    if bits is None:
        raise PredicateDomainError(f"table {name!r} has no row for length {n}")
    return bits[i]


def even_pred() -> UnaryPredicate:
    return UnaryPredicate("even", (), _even_fn)


def mod_pred(p: int, r: int) -> UnaryPredicate:
    if p < 1 or not 0 <= r < p:
        raise ValueError(f"mod predicate needs p >= 1 and 0 <= r < p, got ({p}, {r})")
    return UnaryPredicate("mod", (p, r), partial(_mod_fn, p, r))

def eq_pred(c: int) -> UnaryPredicate:
    if c < 0:
        raise ValueError("eq predicate parameter must be non-negative")
    return UnaryPredicate("eq", (c,), partial(_eq_fn, c))


def geq_pred(c: int) -> UnaryPredicate:
    if c < 0:
        raise ValueError("geq predicate parameter must be non-negative")
    return UnaryPredicate("geq", (c,), partial(_geq_fn, c))


def midpoint_pred() -> UnaryPredicate:
    return UnaryPredicate("midpoint", (), _midpoint_fn)


def prime_shift_pred() -> UnaryPredicate:
    """1 at argument k iff k+1 is prime; at the last position of a word this
    tests primality of the word length."""
    return UnaryPredicate("primeshift", (), _prime_shift_fn)


# name -> {n: tuple of n+1 bits}; process-local registry for table predicates
_TABLES: dict = {}


def register_table(name: str, rows: dict) -> None:
    """Register an explicit finite predicate table.

    ``rows`` maps a word length n to a sequence of n+1 bits (positions 0..n).
    Lengths outside the registered rows are evaluation errors, never
    defaults.
    """
    clean = {}
    for n, bits in rows.items():
        bits = tuple(int(b) for b in bits)
        if n < 1 or len(bits) != n + 1 or any(b not in (0, 1) for b in bits):
            raise ValueError(f"table row for n={n} must hold n+1 bits")
        clean[n] = bits
    _TABLES[name] = clean


def clear_tables() -> None:
    _TABLES.clear()


def table_pred(name: str) -> UnaryPredicate:
    if name not in _TABLES:
        raise ValueError(f"table predicate {name!r} is not registered")
    return UnaryPredicate("table", (name,), partial(_table_fn, name))


_PRED_BUILDERS = {
    "even": (0, lambda: even_pred()),
    "mod": (2, lambda p, r: mod_pred(p, r)),
    "eq": (1, lambda c: eq_pred(c)),
    "geq": (1, lambda c: geq_pred(c)),
    "midpoint": (0, lambda: midpoint_pred()),
    "primeshift": (0, lambda: prime_shift_pred()),
}


def predicate_from_spec(name: str, params) -> UnaryPredicate:
    """Rebuild a predicate from its (name, params) identity, as used by the
    parser and the model file format."""
    if name == "table":
        if len(params) != 1 or not isinstance(params[0], str):
            raise ValueError("table predicate takes a single name parameter")
        return table_pred(params[0])
    if name not in _PRED_BUILDERS:
        raise ValueError(f"unknown predicate {name!r}")
    arity, builder = _PRED_BUILDERS[name]
    if len(params) != arity:
        raise ValueError(f"predicate {name!r} takes {arity} parameters")
    return builder(*[int(p) for p in params])


# ---------------------------------------------------------------------------
# formulas
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Atom:
    symbol: str


@dataclass(frozen=True)
class Truth:
    pass


@dataclass(frozen=True)
class Not:
    child: "Formula"


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Next:
    child: "Formula"


@dataclass(frozen=True)
class Until:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Pred:
    pred: UnaryPredicate


@dataclass(frozen=True)
class PredOfCount:
    """The predicate applied to the prefix (left) or suffix (right)
    satisfaction count of the child formula."""

    pred: UnaryPredicate
    direction: str
    child: "Formula"


@dataclass(frozen=True)
class LinTerm:
    coef: int
    direction: str
    child: "Formula"


@dataclass(frozen=True)
class LinIneq:
    """sum of coef * (directional count of child) >= 0."""

    terms: tuple

    def __post_init__(self):
        if not self.terms:
            raise ValueError("linear inequality needs at least one term")


Formula = Union[Atom, Truth, Not, And, Or, Next, Until, Pred, PredOfCount, LinIneq]


class Fragment(enum.Enum):
    MON = "Mon"
    CPLUS = "CPlus"


def classify(phi: Formula) -> Fragment:
    """Mon iff no counting construct occurs anywhere in the formula."""
    for node in subformulas(phi):
        if isinstance(node, (PredOfCount, LinIneq)):
            return Fragment.CPLUS
    return Fragment.MON


def _children(node: Formula) -> tuple:
    if isinstance(node, (Not, Next, PredOfCount)):
        return (node.child,)
    if isinstance(node, (And, Or, Until)):
        return (node.left, node.right)
    if isinstance(node, LinIneq):
        return tuple(term.child for term in node.terms)
    return ()


def subformulas(phi: Formula) -> Iterator[Formula]:
    """All distinct subformulas, children before parents."""
    seen = set()

    def walk(node):
        if node in seen:
            return
        for child in _children(node):
            yield from walk(child)
        seen.add(node)
        yield node

    yield from walk(phi)


def formula_alphabet_ok(phi: Formula, alphabet: Alphabet) -> bool:
    return all(
        node.symbol in alphabet
        for node in subformulas(phi)
        if isinstance(node, Atom)
    )


# ---------------------------------------------------------------------------
# semantics
# ---------------------------------------------------------------------------


def _check_word(word: str):
    if len(word) < 1:
        raise ValueError("empty word: languages range over non-empty words only")


def traces(phi: Formula, word: str) -> dict:
    """Satisfaction traces of every subformula of phi on the word.

    Returns {subformula: tuple of n bits}.  Computed bottom-up in one pass;
    Until runs right to left through its fixpoint expansion, counting
    constructs take prefix sums of the child trace.
    """
    _check_word(word)
    n = len(word)
    out: dict = {}

    def prefix_counts(bits):
        acc, left = 0, []
        for b in bits:
            acc += b
            left.append(acc)
        return left

    for node in subformulas(phi):
        if isinstance(node, Atom):
            out[node] = tuple(1 if c == node.symbol else 0 for c in word)
        elif isinstance(node, Truth):
            out[node] = (1,) * n
        elif isinstance(node, Not):
            out[node] = tuple(1 - b for b in out[node.child])
        elif isinstance(node, And):
            out[node] = tuple(
                a & b for a, b in zip(out[node.left], out[node.right])
            )
        elif isinstance(node, Or):
            out[node] = tuple(
                a | b for a, b in zip(out[node.left], out[node.right])
            )
        elif isinstance(node, Next):
            child = out[node.child]
            out[node] = tuple(child[1:]) + (0,)
        elif isinstance(node, Until):
            phi_t, psi_t = out[node.left], out[node.right]
            acc = [0] * n
            nxt = 0
            for i in range(n - 1, -1, -1):
                acc[i] = 1 if psi_t[i] or (phi_t[i] and nxt) else 0
                nxt = acc[i]
            out[node] = tuple(acc)
        elif isinstance(node, Pred):
            out[node] = tuple(node.pred(n, i) for i in range(n))
        elif isinstance(node, PredOfCount):
            left = prefix_counts(out[node.child])
            total = left[-1]
            bits = []
            for i in range(n):
                c = left[i] if node.direction == LEFT else total - left[i] + out[node.child][i]
                bits.append(node.pred(n, c))
            out[node] = tuple(bits)
        elif isinstance(node, LinIneq):
            sums = [0] * n
            for term in node.terms:
                left = prefix_counts(out[term.child])
                total = left[-1]
                for i in range(n):
                    c = left[i] if term.direction == LEFT else total - left[i] + out[term.child][i]
                    sums[i] += term.coef * c
            out[node] = tuple(1 if s >= 0 else 0 for s in sums)
        else:
            raise TypeError(f"not a formula node: {node!r}")
    return out


def trace(phi: Formula, word: str) -> tuple:
    """Position-wise satisfaction bits of phi on the word."""
    return traces(phi, word)[phi]


def eval_at(phi: Formula, word: str, i: int) -> int:
    _check_word(word)
    if not 0 <= i < len(word):
        raise ValueError(f"position {i} out of range 0..{len(word) - 1}")
    return trace(phi, word)[i]


def count_left(phi: Formula, word: str, i: int) -> int:
    """Number of positions in 0..i (inclusive) satisfying phi."""
    _check_word(word)
    if not 0 <= i < len(word):
        raise ValueError(f"position {i} out of range 0..{len(word) - 1}")
    return sum(trace(phi, word)[: i + 1])


def count_right(phi: Formula, word: str, i: int) -> int:
    """Number of positions in i..n-1 (inclusive) satisfying phi."""
    _check_word(word)
    if not 0 <= i < len(word):
        raise ValueError(f"position {i} out of range 0..{len(word) - 1}")
    return sum(trace(phi, word)[i:])


def accepts(phi: Formula, word: str) -> int:
    """1 iff the word satisfies phi at position 0."""
    return eval_at(phi, word, 0)


# ---------------------------------------------------------------------------
# concrete syntax
# ---------------------------------------------------------------------------

# characters that can never serve as alphabet symbols in the concrete syntax
RESERVED_CHARS = set("!&|()[]@#*+-<>= \t\r\nUXFG")


def _desugar_finally(phi: Formula) -> Formula:
    return Until(Truth(), phi)


def _desugar_globally(phi: Formula) -> Formula:
    return Not(Until(Truth(), Not(phi)))


class _Parser:
    def __init__(self, text: str, alphabet: Alphabet):
        self.text = text
        self.pos = 0
        self.alphabet = alphabet

    def fail(self, message: str):
        raise ParseError(message, self.pos)

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos] in " \t\r\n":
            self.pos += 1

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def take(self, token: str) -> bool:
        self.skip_ws()
        if self.text.startswith(token, self.pos):
            self.pos += len(token)
            return True
        return False

    def expect(self, token: str):
        if not self.take(token):
            self.fail(f"expected {token!r}")

    def at_keyword(self, word: str) -> bool:
        if not self.text.startswith(word, self.pos):
            return False
        after = self.pos + len(word)
        return after >= len(self.text) or not self.text[after].isalnum()

    def parse(self) -> Formula:
        phi = self.parse_until()
        self.skip_ws()
        if self.pos != len(self.text):
            self.fail("trailing input after formula")
        return phi

    def parse_until(self) -> Formula:
        left = self.parse_or()
        if self.take("U"):
            return Until(left, self.parse_until())
        return left

    def parse_or(self) -> Formula:
        phi = self.parse_and()
        while self.take("|"):
            phi = Or(phi, self.parse_and())
        return phi

    def parse_and(self) -> Formula:
        phi = self.parse_unary()
        while self.take("&"):
            phi = And(phi, self.parse_unary())
        return phi

    def parse_unary(self) -> Formula:
        self.skip_ws()
        if self.take("!"):
            return Not(self.parse_unary())
        if self.take("X"):
            return Next(self.parse_unary())
        if self.take("F"):
            return _desugar_finally(self.parse_unary())
        if self.take("G"):
            return _desugar_globally(self.parse_unary())
        return self.parse_primary()

    def parse_primary(self) -> Formula:
        self.skip_ws()
        if self.pos >= len(self.text):
            self.fail("unexpected end of formula")
        if self.at_keyword("true"):
            self.pos += 4
            return Truth()
        ch = self.peek()
        if ch == "(":
            self.pos += 1
            phi = self.parse_until()
            self.expect(")")
            return phi
        if ch == "[":
            self.pos += 1
            return self.parse_inequality()
        if ch == "@":
            self.pos += 1
            return self.parse_predicate_atom()
        if ch in self.alphabet:
            self.pos += 1
            return Atom(ch)
        self.fail(f"unexpected character {ch!r}")

    def parse_int(self) -> int:
        self.skip_ws()
        start = self.pos
        if self.peek() == "-":
            self.pos += 1
        if not self.peek().isdigit():
            self.pos = start
            self.fail("expected an integer")
        while self.peek().isdigit():
            self.pos += 1
        return int(self.text[start : self.pos])

    def parse_name(self) -> str:
        self.skip_ws()
        start = self.pos
        while self.peek().isalnum() or self.peek() == "_":
            self.pos += 1
        if start == self.pos:
            self.fail("expected a name")
        return self.text[start : self.pos]

    def parse_predicate_atom(self) -> Formula:
        at = self.pos - 1
        name = self.parse_name()
        params: tuple = ()
        count_app = None
        if self.take("("):
            self.skip_ws()
            if self.text.startswith(("<-", "->"), self.pos):
                count_app = self.parse_count_application()
            elif name == "table":
                params = (self.parse_name(),)
                self.expect(")")
            else:
                vals = [self.parse_int()]
                while self.take(","):
                    vals.append(self.parse_int())
                self.expect(")")
                params = tuple(vals)
        try:
            pred = predicate_from_spec(name, params)
        except ValueError as exc:
            raise ParseError(str(exc), at) from None
        if count_app is None and self.take("("):
            self.skip_ws()
            if not self.text.startswith(("<-", "->"), self.pos):
                self.fail("expected a counting term '<-#' or '->#'")
            count_app = self.parse_count_application()
        if count_app is None:
            return Pred(pred)
        direction, child = count_app
        return PredOfCount(pred, direction, child)

    def parse_count_application(self):
        # cursor sits on '<-' or '->'; the opening '(' is already consumed
        direction = LEFT if self.take("<-") else (RIGHT if self.take("->") else None)
        if direction is None:
            self.fail("expected '<-' or '->'")
        self.expect("#")
        child = self.parse_primary()
        self.expect(")")
        return direction, child

    def parse_inequality(self) -> Formula:
        terms = [self.parse_lin_term(signed=True)]
        while True:
            self.skip_ws()
            if self.take(">="):
                break
            if self.take("+"):
                terms.append(self.parse_lin_term(signed=True))
            elif self.take("-"):
                coef, direction, child = self.parse_lin_term(signed=False)
                terms.append((-coef, direction, child))
            else:
                self.fail("expected '+', '-' or '>=' in inequality")
        self.skip_ws()
        if not self.take("0"):
            self.fail("inequality must compare against 0")
        self.expect("]")
        return LinIneq(tuple(LinTerm(c, d, f) for c, d, f in terms))

    def parse_lin_term(self, signed: bool):
        coef = self.parse_int()
        if not signed and coef < 0:
            self.fail("coefficient sign belongs to the preceding operator")
        self.expect("*")
        self.skip_ws()
        if self.at_keyword("const"):
            # k*const sugar: k times the left count of true, i.e. k*(i+1);
            # equals the plain constant k when evaluated at position 0
            self.pos += 5
            return coef, LEFT, Truth()
        if self.take("<-"):
            direction = LEFT
        elif self.take("->"):
            direction = RIGHT
        else:
            self.fail("expected '<-#', '->#' or 'const'")
        self.expect("#")
        return coef, direction, self.parse_primary()


def parse_formula(text: str, alphabet: Alphabet) -> Formula:
    """Parse the ASCII concrete syntax into a formula over the alphabet."""
    clash = set(alphabet.symbols) & RESERVED_CHARS
    if clash:
        raise ValueError(
            f"alphabet symbols {sorted(clash)} collide with grammar tokens"
        )
    return _Parser(text, alphabet).parse()


_PREC_UNTIL, _PREC_OR, _PREC_AND, _PREC_UNARY, _PREC_PRIMARY = range(5)


def _pred_text(pred: UnaryPredicate) -> str:
    if pred.params:
        return f"@{pred.name}({','.join(str(p) for p in pred.params)})"
    return f"@{pred.name}"


def format_formula(phi: Formula, _level: int = _PREC_UNTIL) -> str:
    """Canonical text form; parsing it reproduces the formula exactly."""
    if isinstance(phi, Atom):
        text, level = phi.symbol, _PREC_PRIMARY
    elif isinstance(phi, Truth):
        text, level = "true", _PREC_PRIMARY
    elif isinstance(phi, Not):
        text, level = "!" + format_formula(phi.child, _PREC_UNARY), _PREC_UNARY
    elif isinstance(phi, Next):
        text, level = "X " + format_formula(phi.child, _PREC_UNARY), _PREC_UNARY
    elif isinstance(phi, And):
        text = (
            format_formula(phi.left, _PREC_AND)
            + " & "
            + format_formula(phi.right, _PREC_UNARY)
        )
        level = _PREC_AND
    elif isinstance(phi, Or):
        text = (
            format_formula(phi.left, _PREC_OR)
            + " | "
            + format_formula(phi.right, _PREC_AND)
        )
        level = _PREC_OR
    elif isinstance(phi, Until):
        text = (
            format_formula(phi.left, _PREC_OR)
            + " U "
            + format_formula(phi.right, _PREC_UNTIL)
        )
        level = _PREC_UNTIL
    elif isinstance(phi, Pred):
        text, level = _pred_text(phi.pred), _PREC_PRIMARY
    elif isinstance(phi, PredOfCount):
        arrow = "<-" if phi.direction == LEFT else "->"
        text = f"{_pred_text(phi.pred)}({arrow}#{format_formula(phi.child, _PREC_PRIMARY)})"
        level = _PREC_PRIMARY
    elif isinstance(phi, LinIneq):
        parts = []
        for k, term in enumerate(phi.terms):
            arrow = "<-" if term.direction == LEFT else "->"
            body = f"{abs(term.coef)}*{arrow}#{format_formula(term.child, _PREC_PRIMARY)}"
            if k == 0:
                parts.append(("-" if term.coef < 0 else "") + body)
            else:
                parts.append(("- " if term.coef < 0 else "+ ") + body)
        text, level = "[" + " ".join(parts) + " >= 0]", _PREC_PRIMARY
    else:
        raise TypeError(f"not a formula node: {phi!r}")
    if level < _level:
        return "(" + text + ")"
    return text
