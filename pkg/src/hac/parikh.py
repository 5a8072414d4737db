"""Letter-count constructions: witness languages for linear sets, Parikh
images by enumeration, permutation closures, and the emission of counting
formulas from quantifier-free constraints.

A linear set v0 + v1*N + ... + vr*N over N^d is realized by the witness
language w0 w1* ... wr*, where w_k spells the vector v_k as a sorted block
a1^{v^1} ... ad^{v^d}; the witness has exactly the linear set as its letter
counts.  Quantifier-free counting constraints (linear inequalities and
congruences over letter counts, closed under Booleans) translate into
counting formulas evaluated at position 0, giving permutation-closed
languages for the compiler's average-hard models.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import product
from typing import Callable, Iterable, Mapping

from .logic import (
    Alphabet,
    And,
    Atom,
    Formula,
    LinIneq,
    LinTerm,
    Not,
    Or,
    Pred,
    PredOfCount,
    Truth,
    Until,
    Next,
    LEFT,
    RIGHT,
    mod_pred,
    prime_shift_pred,
)


@dataclass(frozen=True)
class LinearSet:
    """base + sum_k (period_k * N), all vectors over the naturals."""

    base: tuple
    periods: tuple = ()

    def __post_init__(self):
        d = len(self.base)
        if d < 1:
            raise ValueError("dimension must be at least 1")
        vecs = (self.base,) + tuple(self.periods)
        for v in vecs:
            if len(v) != d:
                raise ValueError("dimension mismatch between base and periods")
            if any(not isinstance(x, int) or x < 0 for x in v):
                raise ValueError("entries must be natural numbers")
        for p in self.periods:
            if not any(p):
                raise ValueError("period vectors must be non-zero")

    @property
    def dimension(self) -> int:
        return len(self.base)


@dataclass(frozen=True)
class SemilinearSet:
    components: tuple

    def __post_init__(self):
        if not self.components:
            raise ValueError("semilinear set needs at least one component")
        dims = {c.dimension for c in self.components}
        if len(dims) != 1:
            raise ValueError("components disagree on dimension")

    @property
    def dimension(self) -> int:
        return self.components[0].dimension


def _linear_member(v: tuple, s: LinearSet) -> bool:
    target = tuple(x - b for x, b in zip(v, s.base))
    if any(x < 0 for x in target):
        return False

    def search(remaining, k):
        if not any(remaining):
            return True
        if k == len(s.periods):
            return False
        p = s.periods[k]
        bound = min(
            (r // c for r, c in zip(remaining, p) if c > 0), default=0
        )
        for m in range(bound, -1, -1):
            nxt = tuple(r - m * c for r, c in zip(remaining, p))
            if all(x >= 0 for x in nxt) and search(nxt, k + 1):
                return True
        return False

    return search(target, 0)


def semilinear_member(v, s) -> bool:
    """Exact membership of the count vector in the (semi)linear set, by
    bounded search over period multipliers."""
    v = tuple(v)
    if isinstance(s, LinearSet):
        s = SemilinearSet((s,))
    if len(v) != s.dimension:
        raise ValueError("vector dimension mismatch")
    return any(_linear_member(v, c) for c in s.components)


@dataclass(frozen=True)
class WitnessLanguage:
    """w0 w1* ... wr* with fixed block words in a fixed star order."""

    prefix: str
    blocks: tuple

    def member(self, word: str) -> bool:
        # positions x next allowed star index; stars may be skipped freely,
        # so reach[p][k] means: word[:p] parsed with stars < k closed
        if not word.startswith(self.prefix):
            return False
        start = len(self.prefix)
        r = len(self.blocks)
        n = len(word)
        reach = [[False] * (r + 1) for _ in range(n + 1)]
        reach[start][0] = True
        for p in range(start, n + 1):
            for k in range(r + 1):
                if not reach[p][k]:
                    continue
                if k < r:
                    reach[p][k + 1] = True
                    w = self.blocks[k]
                    if word.startswith(w, p):
                        reach[p + len(w)][k] = True
        return any(reach[n])

    def pattern(self) -> str:
        parts = [self.prefix] if self.prefix else []
        parts += [f"({w})*" for w in self.blocks]
        return " ".join(parts) if parts else "(empty)"


def spell_vector(v: Iterable[int], alphabet: Alphabet) -> str:
    """a1^{v1} a2^{v2} ... ad^{vd} as a concrete word."""
    return "".join(s * x for s, x in zip(alphabet, v))


def witness_language(s: LinearSet, alphabet: Alphabet) -> WitnessLanguage:
    """The witness whose letter counts are exactly the linear set."""
    if len(alphabet) != s.dimension:
        raise ValueError(
            f"alphabet size {len(alphabet)} != set dimension {s.dimension}"
        )
    return WitnessLanguage(
        spell_vector(s.base, alphabet),
        tuple(spell_vector(p, alphabet) for p in s.periods),
    )


def count_vector(word: str, alphabet: Alphabet) -> tuple:
    return tuple(word.count(s) for s in alphabet)


def parikh_image(
    membership: Callable[[str], bool], alphabet: Alphabet, max_total: int
) -> set:
    """Letter-count vectors of all members up to the total length bound,
    by brute-force enumeration (the empty word included, so zero-base
    witnesses keep their zero vector)."""
    image = set()
    for n in range(0, max_total + 1):
        for tup in product(tuple(alphabet), repeat=n):
            word = "".join(tup)
            if membership(word):
                image.add(count_vector(word, alphabet))
    return image


def linear_set_points(s, max_total: int) -> set:
    """All vectors of the (semi)linear set with entry sum <= max_total."""
    if isinstance(s, LinearSet):
        s = SemilinearSet((s,))
    d = s.dimension
    points = set()
    ranges = [range(max_total + 1)] * d
    for v in product(*ranges):
        if sum(v) <= max_total and semilinear_member(v, s):
            points.add(v)
    return points


# ---------------------------------------------------------------------------
# quantifier-free counting constraints
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinIneqConst:
    """sum(coefs[letter] * count(letter)) + const >= 0."""

    coefs: tuple  # ((letter, coef), ...)
    const: int = 0


@dataclass(frozen=True)
class Congruence:
    """count(letter) === residue (mod modulus)."""

    letter: str
    modulus: int
    residue: int

    def __post_init__(self):
        if self.modulus <= 0 or not 0 <= self.residue < self.modulus:
            raise ValueError("congruence needs modulus > 0 and 0 <= residue < modulus")


@dataclass(frozen=True)
class ConstraintNot:
    child: "CountingConstraint"


@dataclass(frozen=True)
class ConstraintAnd:
    children: tuple


@dataclass(frozen=True)
class ConstraintOr:
    children: tuple


CountingConstraint = (
    LinIneqConst | Congruence | ConstraintNot | ConstraintAnd | ConstraintOr
)


def eval_constraint(c, counts: Mapping[str, int]) -> bool:
    """Direct evaluation on a letter-count assignment."""
    if isinstance(c, LinIneqConst):
        return sum(k * counts.get(letter, 0) for letter, k in c.coefs) + c.const >= 0
    if isinstance(c, Congruence):
        return counts.get(c.letter, 0) % c.modulus == c.residue
    if isinstance(c, ConstraintNot):
        return not eval_constraint(c.child, counts)
    if isinstance(c, ConstraintAnd):
        return all(eval_constraint(x, counts) for x in c.children)
    if isinstance(c, ConstraintOr):
        return any(eval_constraint(x, counts) for x in c.children)
    raise TypeError(f"not a counting constraint: {c!r}")


def constraint_to_formula(c, alphabet: Alphabet) -> Formula:
    """A counting formula whose acceptance (evaluation at position 0)
    agrees with the constraint on every word's letter counts.

    Suffix counts at position 0 cover the whole word; the constant term
    rides on the left count of true, which is exactly 1 at position 0.
    """
    if isinstance(c, LinIneqConst):
        for letter, _ in c.coefs:
            if letter not in alphabet:
                raise ValueError(f"constraint letter {letter!r} not in alphabet")
        terms = [
            LinTerm(k, RIGHT, Atom(letter)) for letter, k in c.coefs if k != 0
        ]
        if c.const != 0 or not terms:
            terms.append(LinTerm(c.const, LEFT, Truth()))
        return LinIneq(tuple(terms))
    if isinstance(c, Congruence):
        if c.letter not in alphabet:
            raise ValueError(f"constraint letter {c.letter!r} not in alphabet")
        return PredOfCount(mod_pred(c.modulus, c.residue), RIGHT, Atom(c.letter))
    if isinstance(c, ConstraintNot):
        return Not(constraint_to_formula(c.child, alphabet))
    if isinstance(c, (ConstraintAnd, ConstraintOr)):
        if not c.children:
            raise ValueError("empty boolean constraint")
        build = And if isinstance(c, ConstraintAnd) else Or
        acc = constraint_to_formula(c.children[0], alphabet)
        for child in c.children[1:]:
            acc = build(acc, constraint_to_formula(child, alphabet))
        return acc
    raise TypeError(f"not a counting constraint: {c!r}")


def equal_counts_constraint(letters: str) -> CountingConstraint:
    """|letters[0]| = |letters[1]| = ... as pairs of opposite inequalities."""
    pairs = []
    for x, y in zip(letters, letters[1:]):
        pairs.append(LinIneqConst(((x, 1), (y, -1))))
        pairs.append(LinIneqConst(((y, 1), (x, -1))))
    return ConstraintAnd(tuple(pairs))


def _distinct_permutations(word: str):
    counts = {}
    for ch in word:
        counts[ch] = counts.get(ch, 0) + 1
    letters = sorted(counts)
    out = []

    def rec():
        if len(out) == len(word):
            yield "".join(out)
            return
        for ch in letters:
            if counts[ch]:
                counts[ch] -= 1
                out.append(ch)
                yield from rec()
                out.pop()
                counts[ch] += 1

    yield from rec()


def perm_closure_member(
    word: str, base_membership: Callable[[str], bool], max_len: int
) -> bool:
    """Brute-force membership in the permutation closure of the base
    language: some rearrangement of the word belongs to it."""
    if len(word) > max_len:
        raise ValueError(f"word length {len(word)} exceeds bound {max_len}")
    return any(base_membership(w) for w in _distinct_permutations(word))


def prime_example_formula() -> Formula:
    """Over the one-letter alphabet: accepts a^n iff n is prime.

    The shifted-prime predicate holds at the last position exactly when the
    word length is prime, and the eventuality pins the last position down.
    The language's letter counts are the primes, which no base-plus-periods
    description can match.
    """
    at_last = And(Pred(prime_shift_pred()), Not(Next(Truth())))
    return Until(Truth(), at_last)


# ---------------------------------------------------------------------------
# documents
# ---------------------------------------------------------------------------


def linear_set_from_dict(doc) -> LinearSet:
    if not isinstance(doc, dict) or set(doc) != {"base", "periods"}:
        raise ValueError('linear set document needs exactly {"base", "periods"}')
    return LinearSet(
        tuple(int(x) for x in doc["base"]),
        tuple(tuple(int(x) for x in p) for p in doc["periods"]),
    )


def semilinear_set_from_dict(doc) -> SemilinearSet:
    if isinstance(doc, dict) and set(doc) == {"union"}:
        return SemilinearSet(tuple(linear_set_from_dict(c) for c in doc["union"]))
    return SemilinearSet((linear_set_from_dict(doc),))


def constraint_from_dict(doc) -> CountingConstraint:
    if not isinstance(doc, dict) or len(doc) != 1:
        raise ValueError("constraint document needs exactly one key")
    kind, body = next(iter(doc.items()))
    if kind == "and":
        return ConstraintAnd(tuple(constraint_from_dict(x) for x in body))
    if kind == "or":
        return ConstraintOr(tuple(constraint_from_dict(x) for x in body))
    if kind == "not":
        return ConstraintNot(constraint_from_dict(body))
    if kind == "ineq":
        if set(body) - {"coefs", "const"} or "coefs" not in body:
            raise ValueError('ineq document needs {"coefs", "const"?}')
        coefs = tuple(sorted((str(k), int(v)) for k, v in body["coefs"].items()))
        return LinIneqConst(coefs, int(body.get("const", 0)))
    if kind == "cong":
        if set(body) != {"letter", "mod", "res"}:
            raise ValueError('cong document needs {"letter", "mod", "res"}')
        return Congruence(str(body["letter"]), int(body["mod"]), int(body["res"]))
    raise ValueError(f"unknown constraint kind {kind!r}")


def load_document(source: str):
    """Inline JSON (starts with a brace) or a path to a JSON file."""
    text = source
    if not source.lstrip().startswith("{"):
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    return json.loads(text)
