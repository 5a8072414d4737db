"""Structural translation of formulas into encoder models.

The invariant maintained throughout: after a subformula's gadget has run,
one dedicated coordinate holds its satisfaction indicator, a 0/1 value, at
every position.  Coordinates are never overwritten; each gadget appends
scratch and output coordinates on the right, so the final sequence carries
every intermediate column and per-layer traces stay auditable.

Monadic formulas compile to unique-selector layers only.  Counting
constructs additionally use one masked average-attention layer per prefix
mean; every other attention in the counting gadgets has a provably unique
maximizer, where unique and average selection coincide.

Position-wise affine stages ride on attention layers with zero score maps
(the combiner C ignores the attended vector), which is how standard layers
express arbitrary position-wise affine maps.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

from gmpy2 import mpq

from .logic import (
    Alphabet,
    And,
    Atom,
    Formula,
    Fragment,
    LinIneq,
    Next,
    Not,
    Or,
    Pred,
    PredOfCount,
    Truth,
    Until,
    LEFT,
    UnaryPredicate,
    classify,
    format_formula,
    formula_alphabet_ok,
    subformulas,
)
from .numerics import ONE, ZERO, PrecisionPolicy
from .runtime import (
    AVERAGE,
    UNIQUE,
    AffineMap,
    AttnLayer,
    EncoderModel,
    PositionalComponent,
    ReluLayer,
)

_SIMPLE_ORDER = ("index", "index_squared", "inv_index", "alt_sign", "cos_geo", "sin_geo")

# attention-score magnitude separating "fires" from "does not fire"; kept
# at 10 so every score stays within the cos term's reach of its bracket
_PENALTY = mpq(10)


class CompileError(ValueError):
    pass


def required_components(phi: Formula) -> tuple:
    """The positional components the compiled model will reference, in a
    fixed canonical order; declared up front for the whole formula."""
    kinds = set()
    preds, preds_at_n = set(), set()
    for node in subformulas(phi):
        if isinstance(node, Next):
            kinds.update(("cos_geo", "sin_geo", "alt_sign", "index", "inv_index"))
        elif isinstance(node, Until):
            kinds.update(("cos_geo", "sin_geo", "index", "inv_index"))
        elif isinstance(node, Pred):
            preds.add(node.pred)
        elif isinstance(node, PredOfCount):
            kinds.update(("index", "index_squared", "inv_index"))
            preds.add(node.pred)
            preds_at_n.add(node.pred)
        elif isinstance(node, LinIneq):
            kinds.update(("index", "index_squared", "inv_index"))
    components = [
        PositionalComponent(kind) for kind in _SIMPLE_ORDER if kind in kinds
    ]
    key = lambda p: (p.name, tuple(str(x) for x in p.params))
    components += [PositionalComponent("pred", p) for p in sorted(preds, key=key)]
    components += [
        PositionalComponent("pred_at_n", p) for p in sorted(preds_at_n, key=key)
    ]
    return tuple(components)


@dataclass
class GadgetPlan:
    """Mutable build state: the coordinate ledger, the layer buffer, and
    the positional-coordinate table."""

    alphabet: Alphabet
    positional: tuple

    width: int = 0
    layers: list = dc_field(default_factory=list)
    ledger: dict = dc_field(default_factory=dict)

    _pos_coord: dict = dc_field(default_factory=dict)
    _counts: dict = dc_field(default_factory=dict)  # (formula, dir) -> coord
    _dcoords: dict = dc_field(default_factory=dict)  # formula -> d_i coord
    _means: dict = dc_field(default_factory=dict)  # formula coord -> mean coord
    _broadcasts: dict = dc_field(default_factory=dict)  # source -> broadcast coord
    _const_one: int = -1
    tags: list = dc_field(default_factory=list)  # (gadget tag, layer index)

    def __post_init__(self):
        self.width = len(self.alphabet) + len(self.positional)
        for k, comp in enumerate(self.positional):
            if comp.kind in ("pred", "pred_at_n"):
                key = (comp.kind, comp.pred)
            else:
                key = comp.kind
            self._pos_coord[key] = len(self.alphabet) + k

    def pos(self, key) -> int:
        if key not in self._pos_coord:
            raise CompileError(f"positional component {key!r} was not declared")
        return self._pos_coord[key]

    # -- layer emission ----------------------------------------------------

    def _affine_of(self, rows, in_width) -> AffineMap:
        matrix, bias = [], []
        for b, entries in rows:
            row = [ZERO] * in_width
            for col, coef in entries:
                row[col] += mpq(coef)
            matrix.append(tuple(row))
            bias.append(mpq(b))
        return AffineMap(tuple(matrix), tuple(bias))

    def emit_attention(self, a_rows, b_rows, c_rows, selector, masked, tag=None) -> list:
        """Appends one standard layer; returns the new coordinates written
        by ``c_rows``.

        ``a_rows``/``b_rows`` map output row -> (bias, [(coord, coef)]) of
        the square score maps; ``c_rows`` rows combine ("v", coord) and
        ("a", coord) references into fresh coordinates appended after an
        identity copy of the current width.  ``tag`` labels the layer in
        the model metadata for audits of gadget-level attention behavior.
        """
        if tag is not None:
            self.tags.append((tag, len(self.layers)))
        d = self.width
        a_spec = [a_rows.get(r, (0, [])) for r in range(d)]
        b_spec = [b_rows.get(r, (0, [])) for r in range(d)]
        c_spec = [(0, [(("v", j), 1)]) for j in range(d)]
        c_spec += c_rows
        c_resolved = []
        for b, entries in c_spec:
            c_resolved.append(
                (
                    b,
                    [
                        (coord if side == "v" else d + coord, coef)
                        for (side, coord), coef in entries
                    ],
                )
            )
        layer = AttnLayer(
            self._affine_of(a_spec, d),
            self._affine_of(b_spec, d),
            self._affine_of(c_resolved, 2 * d),
            selector,
            masked,
        )
        self.layers.append(layer)
        new = list(range(d, d + len(c_rows)))
        self.width = d + len(c_rows)
        return new

    def emit_affine(self, rows) -> list:
        """Position-wise affine stage: rows over current coordinates."""
        c_rows = [
            (b, [(("v", coord), coef) for coord, coef in entries])
            for b, entries in rows
        ]
        return self.emit_attention({}, {}, c_rows, UNIQUE, False)

    def emit_relu(self, coord: int) -> None:
        self.layers.append(ReluLayer(coord + 1))

    # -- shared scratch ----------------------------------------------------

    def const_one(self) -> int:
        if self._const_one < 0:
            self._const_one = self.emit_affine([(1, [])])[0]
        return self._const_one


# ---------------------------------------------------------------------------
# gadgets; each returns the coordinate holding its result
# ---------------------------------------------------------------------------


def gadget_atom(plan: GadgetPlan, symbol: str) -> int:
    """Aliases the symbol's one-hot coordinate; emits nothing."""
    return plan.alphabet.index(symbol)


def gadget_pred(plan: GadgetPlan, pred: UnaryPredicate) -> int:
    """Aliases the predicate's positional coordinate; emits nothing."""
    return plan.pos(("pred", pred))


def gadget_not(plan: GadgetPlan, x: int) -> int:
    return plan.emit_affine([(1, [(x, -1)])])[0]


def gadget_or(plan: GadgetPlan, x: int, y: int) -> int:
    """(max{2x-1, 2y-1} + 1)/2 via max(p,q) = max(0, p-q) + q."""
    s = plan.emit_affine([(0, [(x, 2), (y, -2)])])[0]
    plan.emit_relu(s)
    return plan.emit_affine([(0, [(s, mpq(1, 2)), (y, 1)])])[0]


def gadget_and(plan: GadgetPlan, x: int, y: int) -> int:
    nx = gadget_not(plan, x)
    ny = gadget_not(plan, y)
    return gadget_not(plan, gadget_or(plan, nx, ny))


def gadget_broadcast_last(plan: GadgetPlan, coord: int) -> int:
    """Delivers the value of ``coord`` at position n-1 to every position.

    Score -1/((i+1)(j+1)) is strictly maximized at j = n-1 for every query.
    """
    if coord in plan._broadcasts:
        return plan._broadcasts[coord]
    inv = plan.pos("inv_index")
    out = plan.emit_attention(
        {inv: (0, [(inv, -1)])},
        {inv: (0, [(inv, 1)])},
        [(0, [(("a", coord), 1)])],
        UNIQUE,
        False,
        tag="broadcast_last",
    )[0]
    plan._broadcasts[coord] = out
    return out


def gadget_zero_last(plan: GadgetPlan, x: int) -> int:
    """x_0, ..., x_{n-2}, x_{n-1} -> x_0, ..., x_{n-2}, 0 for bit inputs,
    via x_i - max{0, x_i + i - (n-1)}."""
    index = plan.pos("index")
    last = gadget_broadcast_last(plan, index)  # n-1 at every position
    s = plan.emit_affine([(0, [(x, 1), (index, 1), (last, -1)])])[0]
    plan.emit_relu(s)
    return plan.emit_affine([(0, [(x, 1), (s, -1)])])[0]


def gadget_next(plan: GadgetPlan, x: int) -> int:
    """Pulls x from position i+1 (score maximized there for i <= n-2),
    then zeroes the last position."""
    cos_c, sin_c, alt = plan.pos("cos_geo"), plan.pos("sin_geo"), plan.pos("alt_sign")
    raw = plan.emit_attention(
        {
            cos_c: (0, [(cos_c, 1)]),
            sin_c: (0, [(sin_c, 1)]),
            alt: (0, [(alt, -_PENALTY)]),
        },
        {
            cos_c: (0, [(cos_c, 1)]),
            sin_c: (0, [(sin_c, 1)]),
            alt: (0, [(alt, 1)]),
        },
        [(0, [(("a", x), 1)])],
        UNIQUE,
        False,
        tag="next_pull",
    )[0]
    return gadget_zero_last(plan, raw)


def gadget_until(plan: GadgetPlan, x_phi: int, x_psi: int) -> int:
    """Attends to the first firing position j_i = min{j >= i : chi_j} and
    pulls psi from it, where chi = (not phi') or psi and phi' is phi with
    its last position zeroed.

    chi_{n-1} = 1 always, so a firing position exists; the until formula
    holds at i iff psi holds at j_i.  Non-firing positions are pushed out
    of contention by a flat -10 penalty; among firing positions the cosine
    term is strictly maximized at the smallest j >= i.
    """
    phi_z = gadget_zero_last(plan, x_phi)
    chi = gadget_or(plan, gadget_not(plan, phi_z), x_psi)
    cos_c, sin_c = plan.pos("cos_geo"), plan.pos("sin_geo")
    return plan.emit_attention(
        {
            cos_c: (0, [(cos_c, 1)]),
            sin_c: (0, [(sin_c, 1)]),
            0: (1, []),
        },
        {
            cos_c: (0, [(cos_c, 1)]),
            sin_c: (0, [(sin_c, 1)]),
            0: (-_PENALTY, [(chi, _PENALTY)]),
        },
        [(0, [(("a", x_psi), 1)])],
        UNIQUE,
        False,
        tag="until_fire",
    )[0]


def gadget_prefix_mean(plan: GadgetPlan, x: int) -> int:
    """y_i = (x_0 + ... + x_i)/(i+1): masked average attention with
    constant scores, so the maximizer set is all of 0..i."""
    if x in plan._means:
        return plan._means[x]
    out = plan.emit_attention(
        {}, {}, [(0, [(("a", x), 1)])], AVERAGE, True, tag="prefix_mean"
    )[0]
    plan._means[x] = out
    return out


def _count_coord(plan: GadgetPlan, phi: Formula, direction: str, compile_node) -> int:
    key = (phi, direction)
    if key in plan._counts:
        return plan._counts[key]
    x = compile_node(plan, phi)
    if direction == LEFT:
        coord = gadget_count_left(plan, phi, x)
    else:
        coord = gadget_count_right(plan, phi, x)
    plan._counts[key] = coord
    return coord


def gadget_count_left(plan: GadgetPlan, phi: Formula, x: int) -> int:
    """Prefix count of x's column, exactly, as an integer-valued coordinate.

    Route: prefix mean y_i, then z_i = y_i - min{x_i, 1/(i+1)}, then a
    unique-attention layer scoring 2j*z_i - j^2/(i+1), maximized at
    j = d_i = count - x_i; pulling j and adding back x_i gives the count.
    """
    if (phi, LEFT) in plan._counts:
        return plan._counts[(phi, LEFT)]
    inv = plan.pos("inv_index")
    index, index_sq = plan.pos("index"), plan.pos("index_squared")
    y = gadget_prefix_mean(plan, x)
    s = plan.emit_affine([(0, [(x, 1), (inv, -1)])])[0]
    plan.emit_relu(s)
    z = plan.emit_affine([(0, [(y, 1), (x, -1), (s, 1)])])[0]
    d = plan.emit_attention(
        {0: (0, [(z, 2)]), 1: (0, [(inv, -1)])},
        {0: (0, [(index, 1)]), 1: (0, [(index_sq, 1)])},
        [(0, [(("a", index), 1)])],
        UNIQUE,
        False,
        tag="count_argmax",
    )[0]
    plan._dcoords[phi] = d
    count = plan.emit_affine([(0, [(d, 1), (x, 1)])])[0]
    plan._counts[(phi, LEFT)] = count
    return count


def gadget_count_right(plan: GadgetPlan, phi: Formula, x: int) -> int:
    """Suffix count: total count broadcast from the last position minus
    d_i = (prefix count - x_i)."""
    key = (phi, "right")
    if key in plan._counts:
        return plan._counts[key]
    cl = gadget_count_left(plan, phi, x)
    d = plan._dcoords[phi]
    total = gadget_broadcast_last(plan, cl)
    count = plan.emit_affine([(0, [(total, 1), (d, -1)])])[0]
    plan._counts[key] = count
    return count


def gadget_pred_of_count(plan: GadgetPlan, pred: UnaryPredicate, count: int) -> int:
    """theta_n(count) for a count coordinate in 0..n.

    Attention scoring 2j*count - j^2 lands on j_i = min{n-1, count}; the
    predicate bit there is combined with the length-indexed bit theta_n(n)
    through the indicator min{1, n - count}.
    """
    index, index_sq = plan.pos("index"), plan.pos("index_squared")
    theta_pos = plan.pos(("pred", pred))
    j_coord, theta_j = plan.emit_attention(
        {0: (0, [(count, 2)]), 1: (-1, [])},
        {0: (0, [(index, 1)]), 1: (0, [(index_sq, 1)])},
        [(0, [(("a", index), 1)]), (0, [(("a", theta_pos), 1)])],
        UNIQUE,
        False,
        tag="pred_of_count_argmax",
    )
    last = gadget_broadcast_last(plan, index)  # n-1
    m = plan.emit_affine([(1, [(last, 1), (count, -1)])])[0]  # n - count >= 0
    s = plan.emit_affine([(1, [(m, -1)])])[0]
    plan.emit_relu(s)
    in_range = plan.emit_affine([(1, [(s, -1)])])[0]  # min{1, n - count}
    theta_n = plan.pos(("pred_at_n", pred))
    in_branch = gadget_and(plan, in_range, theta_j)
    out_branch = gadget_and(plan, gadget_not(plan, in_range), theta_n)
    return gadget_or(plan, in_branch, out_branch)


def gadget_lin_ineq(plan: GadgetPlan, term_coords) -> int:
    """Indicator of sum(coef * count) >= 0 over integer-valued counts,
    via max{min{0, l} + 1, 0}."""
    combined: dict = {}
    for coef, coord in term_coords:
        combined[coord] = combined.get(coord, 0) + coef
    l = plan.emit_affine([(0, list(combined.items()))])[0]
    s = plan.emit_affine([(0, [(l, -1)])])[0]
    plan.emit_relu(s)
    out = plan.emit_affine([(1, [(s, -1)])])[0]  # min{0, l} + 1
    plan.emit_relu(out)
    return out


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


def _compile_node(plan: GadgetPlan, node: Formula) -> int:
    if node in plan.ledger:
        return plan.ledger[node]
    if isinstance(node, Atom):
        coord = gadget_atom(plan, node.symbol)
    elif isinstance(node, Truth):
        coord = plan.const_one()
    elif isinstance(node, Pred):
        coord = gadget_pred(plan, node.pred)
    elif isinstance(node, Not):
        coord = gadget_not(plan, _compile_node(plan, node.child))
    elif isinstance(node, Or):
        coord = gadget_or(
            plan, _compile_node(plan, node.left), _compile_node(plan, node.right)
        )
    elif isinstance(node, And):
        # De Morgan route: the only Boolean primitives are negation and
        # disjunction; the synthetic subformulas land in the ledger too
        coord = _compile_node(plan, Not(Or(Not(node.left), Not(node.right))))
    elif isinstance(node, Next):
        coord = gadget_next(plan, _compile_node(plan, node.child))
    elif isinstance(node, Until):
        coord = gadget_until(
            plan, _compile_node(plan, node.left), _compile_node(plan, node.right)
        )
    elif isinstance(node, PredOfCount):
        count = _count_coord(plan, node.child, node.direction, _compile_node)
        coord = gadget_pred_of_count(plan, node.pred, count)
    elif isinstance(node, LinIneq):
        term_coords = [
            (term.coef, _count_coord(plan, term.child, term.direction, _compile_node))
            for term in node.terms
        ]
        coord = gadget_lin_ineq(plan, term_coords)
    else:
        raise CompileError(f"cannot compile node {node!r}")
    plan.ledger[node] = coord
    return coord


def compile_formula(
    phi: Formula,
    alphabet: Alphabet,
    precision: PrecisionPolicy | None = None,
) -> EncoderModel:
    """Builds the encoder recognizing the formula's language.

    The acceptance stage writes 2*(root indicator) - 1 into a fresh
    coordinate selected by the acceptance vector, so the decision value is
    exactly +1 or -1 on every word.
    """
    if not formula_alphabet_ok(phi, alphabet):
        raise CompileError("formula mentions symbols outside the alphabet")
    fragment = classify(phi)
    plan = GadgetPlan(alphabet, required_components(phi))
    root = _compile_node(plan, phi)
    decision = plan.emit_affine([(-1, [(root, 2)])])[0]
    acceptance = tuple(
        ONE if k == decision else ZERO for k in range(plan.width)
    )
    metadata = {
        "formula": format_formula(phi),
        "fragment": fragment.value,
        "ledger": {format_formula(f): c for f, c in plan.ledger.items()},
        "counts": {
            ("<-#" if direction == LEFT else "->#") + format_formula(f): c
            for (f, direction), c in plan._counts.items()
        },
        "gadget_layers": [
            {"tag": tag, "layer": idx} for tag, idx in plan.tags
        ],
    }
    return EncoderModel(
        alphabet=alphabet,
        positional=plan.positional,
        layers=tuple(plan.layers),
        acceptance=acceptance,
        precision=precision or PrecisionPolicy(),
        metadata=metadata,
    )
