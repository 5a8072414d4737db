"""Interpreter for hard-attention encoder models, exact end to end.

A model is a sequence of layers over vectors of exact values (see
:mod:`hac.numerics`).  Attention layers score every pair of positions with
an affine bilinear form and select either the minimum-index maximizer
(unique hard attention) or the uniform average over the full maximizer set
(average hard attention), optionally restricted to positions up to the
query (future masking).  ReLU layers clamp one coordinate.  Every argmax
and every sign decision is certified, so a run is a proof-grade execution,
not a floating-point approximation.

The interpreter accepts any well-formed model, not only compiler output;
adversarial models are legitimate inputs for property tests.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence, Union

from gmpy2 import mpq

from . import numerics as nm
from .logic import Alphabet, UnaryPredicate, predicate_from_spec
from .numerics import ONE, ZERO, Number, PrecisionPolicy

UNIQUE = "unique"
AVERAGE = "average"

_POSITIONAL_KINDS = (
    "index",
    "index_squared",
    "inv_index",
    "alt_sign",
    "cos_geo",
    "sin_geo",
    "pred",
    "pred_at_n",
)


class ModelFormatError(ValueError):
    """A model document violates the file format."""


class ModelInvalidError(RuntimeError):
    """The model produced an acceptance value of exactly zero, which the
    acceptance rule leaves undefined."""


@dataclass(frozen=True)
class AffineMap:
    """x -> matrix @ x + bias over exact rationals."""

    matrix: tuple
    bias: tuple

    def __post_init__(self):
        if len(self.matrix) != len(self.bias):
            raise ValueError("affine map: matrix rows and bias length differ")
        widths = {len(row) for row in self.matrix}
        if len(widths) > 1:
            raise ValueError("affine map: ragged matrix")

    @property
    def rows(self) -> int:
        return len(self.matrix)

    @property
    def cols(self) -> int:
        return len(self.matrix[0]) if self.matrix else 0

    @cached_property
    def _sparse_rows(self):
        rows = []
        for row, b in zip(self.matrix, self.bias):
            rows.append((b, tuple((j, c) for j, c in enumerate(row) if c != 0)))
        return tuple(rows)

    @cached_property
    def is_zero(self) -> bool:
        return all(b == 0 and not entries for b, entries in self._sparse_rows)

    @cached_property
    def identity_prefix(self) -> int:
        """Number of leading rows that copy their own input coordinate."""
        k = 0
        for r, (b, entries) in enumerate(self._sparse_rows):
            if b == 0 and len(entries) == 1 and entries[0] == (r, 1):
                k += 1
            else:
                break
        return k

    def apply(self, vec: Sequence[Number]) -> list:
        if len(vec) != self.cols:
            raise ValueError(f"affine map expects width {self.cols}, got {len(vec)}")
        out = []
        for b, entries in self._sparse_rows:
            if not entries:
                out.append(b)
                continue
            if b == 0 and len(entries) == 1 and entries[0][1] == 1:
                out.append(vec[entries[0][0]])
                continue
            acc: Number = b
            for j, c in entries:
                acc = nm.add(acc, nm.mul(vec[j], c))
            out.append(acc)
        return out

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "AffineMap":
        return cls(tuple((ZERO,) * cols for _ in range(rows)), (ZERO,) * rows)


@dataclass(frozen=True)
class AttnLayer:
    """Standard encoder layer: per position i, select positions maximizing
    <A v_i, B v_j>, attend (v_j or the exact mean over ties), then emit
    C(v_i, a_i)."""

    A: AffineMap
    B: AffineMap
    C: AffineMap
    selector: str
    masked: bool = False

    def __post_init__(self):
        if self.selector not in (UNIQUE, AVERAGE):
            raise ValueError(f"unknown selector {self.selector!r}")
        d = self.A.cols
        if not (self.A.rows == d and self.B.rows == d and self.B.cols == d):
            raise ValueError("attention maps A, B must be square of equal width")
        if self.C.cols != 2 * d:
            raise ValueError("attention map C must take the concatenated width")

    @property
    def in_width(self) -> int:
        return self.A.cols

    @property
    def out_width(self) -> int:
        return self.C.rows


@dataclass(frozen=True)
class ReluLayer:
    """Clamps coordinate ``coord`` (1-based) to max(0, x)."""

    coord: int

    def __post_init__(self):
        if self.coord < 1:
            raise ValueError("relu coordinate is 1-based")


Layer = Union[AttnLayer, ReluLayer]


@dataclass(frozen=True)
class PositionalComponent:
    """One coordinate of the positional encoding, a function of (i, n)."""

    kind: str
    pred: Optional[UnaryPredicate] = None

    def __post_init__(self):
        if self.kind not in _POSITIONAL_KINDS:
            raise ValueError(f"unknown positional component {self.kind!r}")
        needs_pred = self.kind in ("pred", "pred_at_n")
        if needs_pred != (self.pred is not None):
            raise ValueError(f"component {self.kind!r} and predicate mismatch")

    def value(self, i: int, n: int) -> Number:
        kind = self.kind
        if kind == "index":
            return mpq(i)
        if kind == "index_squared":
            return mpq(i * i)
        if kind == "inv_index":
            return mpq(1, i + 1)
        if kind == "alt_sign":
            return ONE if i % 2 == 0 else -ONE
        if kind == "cos_geo":
            return nm.cos_pi_tenths(1 - mpq(1, 2**i))
        if kind == "sin_geo":
            return nm.sin_pi_tenths(1 - mpq(1, 2**i))
        if kind == "pred":
            return mpq(self.pred(n, i))
        return mpq(self.pred(n, n))  # pred_at_n: constant along the word


INDEX = PositionalComponent("index")
INDEX_SQUARED = PositionalComponent("index_squared")
INV_INDEX = PositionalComponent("inv_index")
ALT_SIGN = PositionalComponent("alt_sign")
COS_GEO = PositionalComponent("cos_geo")
SIN_GEO = PositionalComponent("sin_geo")


@dataclass(frozen=True)
class EncoderModel:
    """An immutable compiled or hand-built encoder.

    The input width is |alphabet| + |positional| (one-hot block then
    positional block); layer widths must chain; the acceptance vector lives
    at the final width.  ``metadata`` is free-form and excluded from
    equality.
    """

    alphabet: Alphabet
    positional: tuple
    layers: tuple
    acceptance: tuple
    precision: PrecisionPolicy = PrecisionPolicy()
    metadata: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        width = len(self.alphabet) + len(self.positional)
        for k, layer in enumerate(self.layers):
            if isinstance(layer, AttnLayer):
                if layer.in_width != width:
                    raise ValueError(
                        f"layer {k}: expects width {layer.in_width}, chain has {width}"
                    )
                width = layer.out_width
            elif isinstance(layer, ReluLayer):
                if layer.coord > width:
                    raise ValueError(f"layer {k}: relu coordinate beyond width {width}")
            else:
                raise TypeError(f"layer {k}: not a layer: {layer!r}")
        if len(self.acceptance) != width:
            raise ValueError("acceptance vector width mismatch")
        if self.precision.mode == "exact-rational":
            for comp in self.positional:
                if comp.kind in ("cos_geo", "sin_geo"):
                    raise ValueError(
                        "exact-rational mode is illegal with cos_geo/sin_geo components"
                    )

    @property
    def input_width(self) -> int:
        return len(self.alphabet) + len(self.positional)

    @property
    def final_width(self) -> int:
        return len(self.acceptance)


def embed(model: EncoderModel, word: str) -> list:
    """One-hot symbol block concatenated with the positional block."""
    if len(word) < 1:
        raise ValueError("empty word")
    n = len(word)
    vectors = []
    for i, symbol in enumerate(word):
        if symbol not in model.alphabet:
            raise ValueError(f"symbol {symbol!r} not in model alphabet")
        onehot = [ONE if s == symbol else ZERO for s in model.alphabet]
        vectors.append(onehot + [c.value(i, n) for c in model.positional])
    return vectors


def _universe(i: int, n: int, masked: bool) -> range:
    return range(i + 1) if masked else range(n)


def _selection_sets(A, B, selector, masked, seq, bits, max_esc, want_gaps):
    """Per-position maximizer selections and, optionally, score gaps.

    Returns (sets, gaps): ``sets[i]`` is the selected position list;
    ``gaps`` collects winner-minus-runnerup scores wherever a non-selected
    position exists.
    """
    n = len(seq)
    if A.is_zero or B.is_zero:
        # every score is exactly 0; maximizer set is the whole universe
        sets = []
        for i in range(n):
            uni = list(_universe(i, n, masked))
            sets.append(uni[:1] if selector == UNIQUE else uni)
        return sets, []
    bv = [B.apply(v) for v in seq]
    sets, gaps = [], []
    for i in range(n):
        av = A.apply(seq[i])
        av_nz = [(k, x) for k, x in enumerate(av) if x != 0]
        uni = _universe(i, n, masked)
        scores = []
        for j in uni:
            bvj = bv[j]
            acc = ZERO
            for k, x in av_nz:
                if bvj[k] != 0:
                    acc = nm.add(acc, nm.mul(x, bvj[k]))
            scores.append(acc)
        winners = nm.argmax(scores, bits, max_esc)
        sets.append(winners if selector == AVERAGE else winners[:1])
        if want_gaps:
            losers = [j for j in uni if j not in winners]
            if losers:
                runner = nm.argmax([scores[j] for j in losers], bits, max_esc)
                gaps.append(nm.sub(scores[winners[0]], scores[losers[runner[0]]]))
    return sets, gaps


def attention_select(
    A: AffineMap,
    B: AffineMap,
    seq: Sequence,
    i: int,
    selector: str,
    masked: bool,
    policy: PrecisionPolicy,
) -> list:
    """Positions position i attends to: the full maximizer set under
    ``average``, the singleton minimum-index maximizer under ``unique``."""
    n = len(seq)
    if not 0 <= i < n:
        raise ValueError(f"position {i} out of range")
    bits = policy.bits(n)
    sets, _ = _selection_sets(
        A, B, selector, masked, seq, bits, policy.max_escalations, False
    )
    return sets[i]


def _attend(seq, selected, selector):
    if selector == UNIQUE or len(selected) == 1:
        return seq[selected[0]]
    width = len(seq[0])
    inv = mpq(1, len(selected))
    out = []
    for k in range(width):
        acc: Number = ZERO
        for j in selected:
            acc = nm.add(acc, seq[j][k])
        out.append(nm.mul(acc, inv))
    return out


def apply_layer(layer: Layer, seq: list, policy: PrecisionPolicy) -> list:
    """Applies one layer; see :func:`run` for the traced driver."""
    new_seq, _, _ = _apply_layer_traced(
        layer, seq, policy.bits(len(seq)), policy.max_escalations, False
    )
    return new_seq


def _apply_layer_traced(layer, seq, bits, max_esc, want_gaps):
    if isinstance(layer, ReluLayer):
        k = layer.coord - 1
        if k >= len(seq[0]):
            raise ValueError("relu coordinate beyond sequence width")
        new_seq = []
        for v in seq:
            x = v[k]
            s = nm.sign(x, bits, max_esc)
            w = list(v)
            w[k] = x if s > 0 else ZERO
            new_seq.append(w)
        return new_seq, None, None
    sets, gaps = _selection_sets(
        layer.A, layer.B, layer.selector, layer.masked, seq, bits, max_esc, want_gaps
    )
    d = len(seq[0])
    extension = (
        layer.C._sparse_rows[d:] if layer.C.identity_prefix >= d else None
    )
    new_seq = []
    for i, v in enumerate(seq):
        a = _attend(seq, sets[i], layer.selector)
        if extension is None:
            new_seq.append(layer.C.apply(list(v) + list(a)))
            continue
        # C keeps the current vector verbatim and appends fresh coordinates
        w = list(v)
        for b, entries in extension:
            acc: Number = b
            for j, c in entries:
                x = v[j] if j < d else a[j - d]
                if x != 0:
                    acc = nm.add(acc, nm.mul(x, c))
            w.append(acc)
        new_seq.append(w)
    return new_seq, sets, gaps


@dataclass
class RunResult:
    """Final sequence plus the per-layer evidence of a run."""

    final: list
    selections: list  # per layer: list of selected-position lists, or None
    gaps: list  # per layer: list of winner-minus-runnerup scores, or None
    history: Optional[list] = None  # per layer: sequence snapshot, if kept


def run(
    model: EncoderModel,
    word: str,
    policy: Optional[PrecisionPolicy] = None,
    keep_history: bool = False,
    want_gaps: bool = False,
) -> RunResult:
    policy = policy or model.precision
    seq = embed(model, word)
    bits = policy.bits(len(word))
    selections, gaps, history = [], [], []
    for layer in model.layers:
        seq, sets, layer_gaps = _apply_layer_traced(
            layer, seq, bits, policy.max_escalations, want_gaps
        )
        selections.append(sets)
        gaps.append(layer_gaps)
        if keep_history:
            history.append(seq)
    return RunResult(seq, selections, gaps, history if keep_history else None)


def acceptance_value(model: EncoderModel, result: RunResult) -> Number:
    return nm.dot(list(model.acceptance), result.final[0])


def accept(
    model: EncoderModel, word: str, policy: Optional[PrecisionPolicy] = None
) -> bool:
    """True iff the acceptance value at position 0 is strictly positive.

    An exact zero is undefined behavior for a model and raises; compiled
    models guarantee a margin of 1 either way.
    """
    policy = policy or model.precision
    result = run(model, word, policy=policy)
    value = acceptance_value(model, result)
    s = nm.sign(value, policy.bits(len(word)), policy.max_escalations)
    if s == 0:
        raise ModelInvalidError(
            f"acceptance value is exactly 0 on {word!r}; accept/reject undefined"
        )
    return s > 0


@dataclass(frozen=True)
class RobustnessReport:
    """Outcome of re-running a word at doubled precision.

    Selection or decision changes are findings, not exceptions; ``fragile``
    flags attention layers whose smallest score gap is below 2^-bits(n) at
    the baseline precision.
    """

    word: str
    bits_baseline: int
    bits_doubled: int
    selections_changed: tuple
    accept_changed: bool
    decision: str
    min_gaps: tuple  # per attention layer: float or None
    fragile_layers: tuple

    @property
    def clean(self) -> bool:
        return not self.selections_changed and not self.accept_changed


def robustness_check(
    model: EncoderModel,
    word: str,
    baseline: Optional[RunResult] = None,
    policy: Optional[PrecisionPolicy] = None,
) -> RobustnessReport:
    policy = policy or model.precision
    doubled = policy.doubled()
    n = len(word)
    if baseline is None or baseline.gaps is None:
        baseline = run(model, word, policy=policy, want_gaps=True)
    rerun = run(model, word, policy=doubled, want_gaps=False)

    changed = tuple(
        k
        for k, (s1, s2) in enumerate(zip(baseline.selections, rerun.selections))
        if s1 != s2
    )
    v1 = acceptance_value(model, baseline)
    v2 = acceptance_value(model, rerun)
    s1 = nm.sign(v1, policy.bits(n), policy.max_escalations)
    s2 = nm.sign(v2, doubled.bits(n), doubled.max_escalations)
    threshold = mpq(1, 2 ** policy.bits(n))
    min_gaps, fragile = [], []
    for k, layer_gaps in enumerate(baseline.gaps):
        if layer_gaps is None:
            continue
        if not layer_gaps:
            min_gaps.append(None)
            continue
        min_gaps.append(min(nm.to_float(g) for g in layer_gaps))
        if any(nm.bracket(g, policy.bits(n))[1] < threshold for g in layer_gaps):
            fragile.append(k)
    return RobustnessReport(
        word=word,
        bits_baseline=policy.bits(n),
        bits_doubled=doubled.bits(n),
        selections_changed=changed,
        accept_changed=(s1 > 0) != (s2 > 0),
        decision="accept" if s1 > 0 else ("reject" if s1 < 0 else "zero"),
        min_gaps=tuple(min_gaps),
        fragile_layers=tuple(fragile),
    )


# ---------------------------------------------------------------------------
# model documents
# ---------------------------------------------------------------------------

_RATIONAL_RE = re.compile(r"^-?\d+(?:/\d+)?$")


def _rat_to_str(x) -> str:
    return str(x)


def _rat_from_str(s) -> mpq:
    if not isinstance(s, str) or not _RATIONAL_RE.match(s):
        raise ModelFormatError(f"not a rational string: {s!r}")
    value = mpq(s)
    if str(value) != s:
        raise ModelFormatError(f"rational string {s!r} is not canonical")
    return value


def _check_keys(obj: dict, keys: tuple, what: str):
    if not isinstance(obj, dict):
        raise ModelFormatError(f"{what}: expected an object")
    if tuple(obj.keys()) != keys:
        raise ModelFormatError(
            f"{what}: fields must be exactly {list(keys)} in order, got {list(obj.keys())}"
        )


def _affine_to_dict(m: AffineMap) -> dict:
    return {
        "matrix": [[_rat_to_str(c) for c in row] for row in m.matrix],
        "bias": [_rat_to_str(b) for b in m.bias],
    }


def _affine_from_dict(obj, what: str) -> AffineMap:
    _check_keys(obj, ("matrix", "bias"), what)
    matrix = tuple(
        tuple(_rat_from_str(c) for c in row) for row in obj["matrix"]
    )
    bias = tuple(_rat_from_str(b) for b in obj["bias"])
    return AffineMap(matrix, bias)


def _pred_to_dict(pred: UnaryPredicate) -> dict:
    return {"name": pred.name, "params": list(pred.params)}


def _pred_from_dict(obj, what: str) -> UnaryPredicate:
    _check_keys(obj, ("name", "params"), what)
    try:
        return predicate_from_spec(obj["name"], tuple(obj["params"]))
    except ValueError as exc:
        raise ModelFormatError(f"{what}: {exc}") from None


def _component_to_doc(comp: PositionalComponent):
    if comp.kind == "pred":
        return {"pred": _pred_to_dict(comp.pred)}
    if comp.kind == "pred_at_n":
        return {"pred_at_n": _pred_to_dict(comp.pred)}
    return comp.kind


def _component_from_doc(doc, what: str) -> PositionalComponent:
    if isinstance(doc, str):
        if doc in ("pred", "pred_at_n"):
            raise ModelFormatError(f"{what}: predicate components need a descriptor")
        return PositionalComponent(doc)
    if isinstance(doc, dict) and len(doc) == 1:
        kind, spec = next(iter(doc.items()))
        if kind in ("pred", "pred_at_n"):
            return PositionalComponent(kind, _pred_from_dict(spec, what))
    raise ModelFormatError(f"{what}: bad positional component {doc!r}")


def _layer_to_doc(layer: Layer) -> dict:
    if isinstance(layer, ReluLayer):
        return {"kind": "relu", "coord": layer.coord}
    return {
        "A": _affine_to_dict(layer.A),
        "B": _affine_to_dict(layer.B),
        "C": _affine_to_dict(layer.C),
        "selector": layer.selector,
        "masked": layer.masked,
    }


def _layer_from_doc(doc, what: str) -> Layer:
    if not isinstance(doc, dict):
        raise ModelFormatError(f"{what}: expected an object")
    if "kind" in doc:
        _check_keys(doc, ("kind", "coord"), what)
        if doc["kind"] != "relu":
            raise ModelFormatError(f"{what}: unknown layer kind {doc['kind']!r}")
        if not isinstance(doc["coord"], int):
            raise ModelFormatError(f"{what}: relu coordinate must be an integer")
        return ReluLayer(doc["coord"])
    _check_keys(doc, ("A", "B", "C", "selector", "masked"), what)
    if doc["selector"] not in (UNIQUE, AVERAGE):
        raise ModelFormatError(f"{what}: bad selector {doc['selector']!r}")
    if not isinstance(doc["masked"], bool):
        raise ModelFormatError(f"{what}: masked must be a boolean")
    return AttnLayer(
        _affine_from_dict(doc["A"], f"{what}.A"),
        _affine_from_dict(doc["B"], f"{what}.B"),
        _affine_from_dict(doc["C"], f"{what}.C"),
        doc["selector"],
        doc["masked"],
    )


def model_to_dict(model: EncoderModel) -> dict:
    return {
        "alphabet": str(model.alphabet),
        "positional": [_component_to_doc(c) for c in model.positional],
        "layers": [_layer_to_doc(l) for l in model.layers],
        "acceptance": [_rat_to_str(t) for t in model.acceptance],
        "precision": {
            "a": model.precision.a,
            "b": model.precision.b,
            "mode": model.precision.mode,
        },
        "metadata": dict(model.metadata),
    }


def model_from_dict(doc) -> EncoderModel:
    _check_keys(
        doc,
        ("alphabet", "positional", "layers", "acceptance", "precision", "metadata"),
        "model",
    )
    if not isinstance(doc["alphabet"], str):
        raise ModelFormatError("alphabet must be a string of symbols")
    for key in ("positional", "layers", "acceptance"):
        if not isinstance(doc[key], list):
            raise ModelFormatError(f"{key} must be an array")
    alphabet = Alphabet.of(doc["alphabet"])
    positional = tuple(
        _component_from_doc(c, f"positional[{k}]")
        for k, c in enumerate(doc["positional"])
    )
    layers = tuple(
        _layer_from_doc(l, f"layers[{k}]") for k, l in enumerate(doc["layers"])
    )
    acceptance = tuple(_rat_from_str(t) for t in doc["acceptance"])
    _check_keys(doc["precision"], ("a", "b", "mode"), "precision")
    prec = doc["precision"]
    if not isinstance(prec["a"], int) or not isinstance(prec["b"], int):
        raise ModelFormatError("precision law coefficients must be integers")
    policy = PrecisionPolicy(a=prec["a"], b=prec["b"], mode=prec["mode"])
    metadata = doc["metadata"]
    if not isinstance(metadata, dict):
        raise ModelFormatError("metadata must be an object")
    try:
        return EncoderModel(alphabet, positional, layers, acceptance, policy, metadata)
    except (TypeError, ValueError) as exc:
        raise ModelFormatError(str(exc)) from None


def save_model(model: EncoderModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=1)
        fh.write("\n")


def load_model(path) -> EncoderModel:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"not valid JSON: {exc}") from None
    return model_from_dict(doc)
