"""Gadget-level behavior and compiler-wide invariants.

Attention-score shapes are checked against the closed forms they are built
from, selections against brute-force expectations, and whole models against
the logic oracle; the exhaustive sweeps live in the acceptance suite.
"""

import random

import pytest
from gmpy2 import mpq

from hac import compiler as cp
from hac import logic as lg
from hac import numerics as nm
from hac import runtime as rt
from oracles import all_words, first_firing_position

AB = lg.Alphabet.of("ab")
POLICY = nm.PrecisionPolicy()


def parse(text, alphabet=AB):
    return lg.parse_formula(text, alphabet)


def compile_text(text, alphabet=AB):
    return cp.compile_formula(parse(text, alphabet), alphabet)


def column(final, coord):
    return tuple(v[coord] for v in final)


def mini_model(alphabet, components, build):
    """A model from hand-driven gadget emission; returns (model, result of
    build)."""
    plan = cp.GadgetPlan(alphabet, components)
    out = build(plan)
    model = rt.EncoderModel(
        alphabet,
        plan.positional,
        tuple(plan.layers),
        (mpq(0),) * plan.width,
    )
    return model, out


def layer_index(model, tag, which=0):
    hits = [g["layer"] for g in model.metadata["gadget_layers"] if g["tag"] == tag]
    return hits[which]


def layer_input(model, word, idx):
    if idx == 0:
        return rt.embed(model, word)
    return rt.run(model, word, keep_history=True).history[idx - 1]


def scores_of(layer, seq, i):
    av = layer.A.apply(seq[i])
    return [nm.dot(av, layer.B.apply(vj)) for vj in seq]


# -- boolean gadgets -----------------------------------------------------------

def test_or_truth_table_position_wise():
    model = compile_text("a | b", lg.Alphabet.of("abc"))
    res = rt.run(model, "abc")
    coord = model.metadata["ledger"]["a | b"]
    assert column(res.final, coord) == (1, 1, 0)


def test_and_via_de_morgan_keeps_ledger_entries():
    model = compile_text("a & b")
    ledger = model.metadata["ledger"]
    assert "a & b" in ledger and "!a | !b" in ledger


@pytest.mark.parametrize("text", ["!a", "a | b", "a & b", "!(a & !b)"])
def test_boolean_gadgets_match_oracle(text):
    model = compile_text(text)
    phi = parse(text)
    for word in all_words(AB, 5):
        res = rt.run(model, word)
        got = column(res.final, model.metadata["ledger"][text])
        assert got == lg.trace(phi, word), (text, word)


# -- atoms and predicates --------------------------------------------------------

def test_atom_gadget_aliases_one_hot():
    model = compile_text("a")
    assert model.metadata["ledger"]["a"] == 0
    res = rt.run(model, "ab")
    assert column(res.final, 0) == (1, 0)


def test_pred_gadget_aliases_positional():
    model = compile_text("@even")
    coord = model.metadata["ledger"]["@even"]
    res = rt.run(model, "bbb")
    assert column(res.final, coord) == (1, 0, 1)


def test_midpoint_pred_column():
    model = compile_text("@midpoint")
    coord = model.metadata["ledger"]["@midpoint"]
    assert column(rt.run(model, "abab").final, coord) == (0, 1, 0, 0)


# -- zero-last and broadcast -------------------------------------------------------

def _zero_last_model():
    comps = (rt.INDEX, rt.INV_INDEX)
    return mini_model(AB, comps, lambda plan: cp.gadget_zero_last(plan, 0))


def test_zero_last_zeroes_only_the_final_position():
    model, out = _zero_last_model()
    assert column(rt.run(model, "aaa").final, out) == (1, 1, 0)
    assert column(rt.run(model, "bbb").final, out) == (0, 0, 0)
    assert column(rt.run(model, "aba").final, out) == (1, 0, 0)
    assert column(rt.run(model, "a").final, out) == (0,)


def test_broadcast_last_delivers_last_value_everywhere():
    comps = (rt.INDEX, rt.INV_INDEX)
    model, out = mini_model(
        AB, comps, lambda plan: cp.gadget_broadcast_last(plan, plan.pos("index"))
    )
    res = rt.run(model, "ababa")
    assert column(res.final, out) == (4, 4, 4, 4, 4)
    assert column(rt.run(model, "b").final, out) == (0,)


def test_broadcast_last_selects_last_position_for_every_query():
    model = compile_text("X a")
    idx = layer_index(model, "broadcast_last")
    n = 32
    res = rt.run(model, "ab" * (n // 2))
    assert res.selections[idx] == [[n - 1]] * n


def test_broadcast_score_form():
    # score is exactly -1/((i+1)(j+1))
    model = compile_text("X a")
    idx = layer_index(model, "broadcast_last")
    word = "abba"
    seq = layer_input(model, word, idx)
    layer = model.layers[idx]
    for i in range(4):
        for j, s in enumerate(scores_of(layer, seq, i)):
            assert s == mpq(-1, (i + 1) * (j + 1))


# -- next ---------------------------------------------------------------------------

def test_next_attention_selects_successor():
    model = compile_text("X a")
    idx = layer_index(model, "next_pull")
    for n in (1, 2, 5, 16):
        word = ("ab" * n)[:n]
        res = rt.run(model, word)
        for i in range(n - 1):
            assert res.selections[idx][i] == [i + 1], (n, i)


def test_next_score_form():
    # cos(pi (2^-i - 2^-j)/10) + (-1)^(i+j+1) * 10, exactly
    model = compile_text("X a")
    idx = layer_index(model, "next_pull")
    word = "abab"
    seq = layer_input(model, word, idx)
    layer = model.layers[idx]
    for i in range(len(word)):
        for j, s in enumerate(scores_of(layer, seq, i)):
            t = mpq(1, 2**i) - mpq(1, 2**j)
            want = nm.add(nm.cos_pi_tenths(t), mpq(10 * (-1) ** (i + j + 1)))
            assert s == want, (i, j)


def test_next_end_to_end():
    model = compile_text("X a")
    coord = model.metadata["ledger"]["X a"]
    assert column(rt.run(model, "ba").final, coord) == (1, 0)
    assert column(rt.run(model, "a").final, coord) == (0,)
    assert column(rt.run(model, "b").final, coord) == (0,)


# -- until  -------------------------------------------------------------------------

def test_until_selects_first_firing_position():
    model = compile_text("a U b")
    idx = layer_index(model, "until_fire")
    rng = random.Random(7)
    for n in (1, 2, 5, 12, 24):
        for _ in range(40 if n > 2 else 4):
            word = "".join(rng.choice("ab") for _ in range(n))
            phi_bits = lg.trace(lg.Atom("a"), word)
            psi_bits = lg.trace(lg.Atom("b"), word)
            res = rt.run(model, word)
            for i in range(n):
                want = first_firing_position(phi_bits, psi_bits, i)
                assert res.selections[idx][i] == [want], (word, i)


def test_until_score_form():
    # cos(pi (2^-i - 2^-j)/10) - 10*(1 - chi_j)
    model = compile_text("a U b")
    idx = layer_index(model, "until_fire")
    word = "aab"
    n = len(word)
    seq = layer_input(model, word, idx)
    layer = model.layers[idx]
    phi_bits, psi_bits = lg.trace(lg.Atom("a"), word), lg.trace(lg.Atom("b"), word)
    for i in range(n):
        for j, s in enumerate(scores_of(layer, seq, i)):
            phi_here = phi_bits[j] if j < n - 1 else 0
            chi = 1 if (not phi_here) or psi_bits[j] else 0
            want = nm.add(
                nm.cos_pi_tenths(mpq(1, 2**i) - mpq(1, 2**j)), mpq(-10 * (1 - chi))
            )
            assert s == want, (i, j)


def test_until_counterexample_word_for_uncorrected_gadget():
    # on w = "ba" with phi = a|b, psi = b the until holds at 0; a gadget
    # firing on "phi stops holding" alone would land where psi fails
    phi = parse("(a | b) U b")
    model = cp.compile_formula(phi, AB)
    coord = model.metadata["ledger"][lg.format_formula(phi)]
    assert column(rt.run(model, "ba").final, coord) == (1, 0)


def test_until_end_to_end():
    model = compile_text("a U b")
    coord = model.metadata["ledger"]["a U b"]
    assert column(rt.run(model, "aab").final, coord) == (1, 1, 1)
    assert column(rt.run(model, "aba").final, coord) == (1, 1, 0)


# -- counting gadgets ------------------------------------------------------------------

def _count_model(direction):
    comps = (rt.INDEX, rt.INDEX_SQUARED, rt.INV_INDEX)

    def build(plan):
        if direction == lg.LEFT:
            return cp.gadget_count_left(plan, lg.Atom("a"), 0)
        return cp.gadget_count_right(plan, lg.Atom("a"), 0)

    return mini_model(AB, comps, build)


def test_prefix_mean_values():
    comps = (rt.INDEX, rt.INDEX_SQUARED, rt.INV_INDEX)
    model, y = mini_model(AB, comps, lambda plan: cp.gadget_prefix_mean(plan, 0))
    res = rt.run(model, "aba")
    assert column(res.final, y) == (1, mpq(1, 2), mpq(2, 3))
    assert column(rt.run(model, "bbb").final, y) == (0, 0, 0)
    assert column(rt.run(model, "aaa").final, y) == (1, 1, 1)


def test_count_left_values():
    model, out = _count_model(lg.LEFT)
    assert column(rt.run(model, "aba").final, out) == (1, 1, 2)
    assert column(rt.run(model, "bbb").final, out) == (0, 0, 0)
    assert column(rt.run(model, "aaaa").final, out) == (1, 2, 3, 4)


def test_count_right_values():
    model, out = _count_model(lg.RIGHT)
    assert column(rt.run(model, "aba").final, out) == (2, 1, 1)
    assert column(rt.run(model, "aaaa").final, out) == (4, 3, 2, 1)


def test_count_complementarity_on_random_columns():
    left_model, lcoord = _count_model(lg.LEFT)
    right_model, rcoord = _count_model(lg.RIGHT)
    rng = random.Random(11)
    for _ in range(500):
        n = rng.randint(1, 8)
        word = "".join(rng.choice("ab") for _ in range(n))
        lefts = column(rt.run(left_model, word).final, lcoord)
        rights = column(rt.run(right_model, word).final, rcoord)
        total = word.count("a")
        for i in range(n):
            a_i = 1 if word[i] == "a" else 0
            assert lefts[i] + rights[i] == total + a_i


def test_count_attention_selects_d_i():
    model = compile_text("@even(<-#a)")
    idx = layer_index(model, "count_argmax")
    for word in ("aab", "abab", "bbbb", "aaaa", "a"):
        res = rt.run(model, word)
        for i in range(len(word)):
            a_i = 1 if word[i] == "a" else 0
            d_i = lg.count_left(lg.Atom("a"), word, i) - a_i
            assert res.selections[idx][i] == [d_i], (word, i)


def test_count_score_form():
    # 2 j z_i - j^2/(i+1) == (-(d_i - j)^2 + d_i^2)/(i+1)
    model = compile_text("@even(<-#a)")
    idx = layer_index(model, "count_argmax")
    word = "abaa"
    seq = layer_input(model, word, idx)
    layer = model.layers[idx]
    for i in range(len(word)):
        a_i = 1 if word[i] == "a" else 0
        d_i = lg.count_left(lg.Atom("a"), word, i) - a_i
        for j, s in enumerate(scores_of(layer, seq, i)):
            assert s == mpq(-((d_i - j) ** 2) + d_i**2, i + 1), (i, j)


def test_pred_of_count_attention_selects_clamped_count():
    model = compile_text("@even(->#true)")
    idx = layer_index(model, "pred_of_count_argmax")
    for word in ("ab", "abab", "a", "bbb"):
        n = len(word)
        res = rt.run(model, word)
        for i in range(n):
            c = n - i  # right count of true
            assert res.selections[idx][i] == [min(n - 1, c)], (word, i)


def test_pred_of_count_at_full_count_uses_length_bit():
    # right count of true at position 0 is n, beyond the last index, so the
    # output must be the predicate's value at n itself
    model = compile_text("@even(->#true)")
    coord = model.metadata["ledger"]["@even(->#true)"]
    assert column(rt.run(model, "ab").final, coord)[0] == 1  # even(2)
    assert column(rt.run(model, "aba").final, coord)[0] == 0  # even(3)


def test_pred_of_count_full_range():
    model = compile_text("@even(<-#a)")
    coord = model.metadata["ledger"]["@even(<-#a)"]
    phi = parse("@even(<-#a)")
    for word in all_words(AB, 5):
        assert column(rt.run(model, word).final, coord) == lg.trace(phi, word)


# -- linear inequalities -----------------------------------------------------------------

def test_lin_ineq_boundary_cases():
    model = compile_text("[1*<-#a - 1*<-#b >= 0]")
    coord = model.metadata["ledger"]["[1*<-#a - 1*<-#b >= 0]"]
    assert column(rt.run(model, "ab").final, coord) == (1, 1)  # l = 1 then 0
    assert column(rt.run(model, "ba").final, coord) == (0, 1)  # l = -1 then 0


def test_lin_ineq_matches_oracle():
    text = "[2*->#a - 1*->#true - 1*<-#true >= 0]"
    model = compile_text(text)
    phi = parse(text)
    for word in all_words(AB, 6):
        assert rt.accept(model, word) == bool(lg.accepts(phi, word))


# -- whole-model invariants -----------------------------------------------------------------

_POOL = [
    "a",
    "!a",
    "a | b",
    "X a",
    "a U b",
    "F (@even & a)",
    "@mod(2,0)(->#a)",
    "@even(<-#(a U b))",
    "[1*->#a - 1*->#b >= 0]",
]


@pytest.mark.parametrize("text", _POOL)
def test_differential_accept_and_margin(text):
    model = compile_text(text)
    phi = parse(text)
    for word in all_words(AB, 5):
        res = rt.run(model, word)
        value = rt.acceptance_value(model, res)
        assert abs(value) == 1
        assert (value > 0) == bool(lg.accepts(phi, word))


def test_mon_models_use_no_average_and_no_masking():
    for text in ("a", "!a", "X X a", "a U b", "F (@even & a)", "G a"):
        model = compile_text(text)
        assert model.metadata["fragment"] == "Mon"
        for layer in model.layers:
            if isinstance(layer, rt.AttnLayer):
                assert layer.selector == rt.UNIQUE
                assert not layer.masked


def test_cplus_models_mask_only_prefix_means():
    model = compile_text("@mod(2,0)(->#a)")
    assert model.metadata["fragment"] == "CPlus"
    mean_layers = {
        g["layer"] for g in model.metadata["gadget_layers"] if g["tag"] == "prefix_mean"
    }
    for k, layer in enumerate(model.layers):
        if isinstance(layer, rt.AttnLayer) and (layer.masked or layer.selector == rt.AVERAGE):
            assert k in mean_layers


def test_layer_and_width_growth_is_linear():
    # generous fixed constants guard against accidental blowup
    kappa_layers, kappa_width = 40, 32
    for text in _POOL + ["(a U b) U a", "a & b & a", "[1*->#a - 2*const >= 0]"]:
        phi = parse(text)
        size = len(list(lg.subformulas(phi)))
        model = compile_text(text)
        base = len(model.alphabet) + len(model.positional)
        assert len(model.layers) <= kappa_layers * size, text
        assert model.final_width - base <= kappa_width * size, text


def test_declared_positional_components_are_referenced():
    for text in _POOL:
        model = compile_text(text)
        base = len(model.alphabet)
        declared = set(range(base, base + len(model.positional)))
        referenced = set()
        width = base + len(model.positional)
        for layer in model.layers:
            if not isinstance(layer, rt.AttnLayer):
                continue
            for m, offset in ((layer.A, 0), (layer.B, 0), (layer.C, 0), (layer.C, layer.A.cols)):
                for row in m.matrix:
                    for col, coef in enumerate(row):
                        if coef != 0:
                            c = col - offset
                            if 0 <= c < width:
                                referenced.add(c)
        ledger_coords = set(model.metadata["ledger"].values())
        assert declared <= referenced | ledger_coords, text
        assert referenced & declared <= declared


def test_compile_rejects_foreign_symbols():
    with pytest.raises(cp.CompileError):
        cp.compile_formula(lg.Atom("z"), AB)


def test_compile_is_deterministic():
    a = compile_text("@mod(3,1)(->#a) & (a U b)")
    b = compile_text("@mod(3,1)(->#a) & (a U b)")
    assert a == b
    assert rt.model_to_dict(a) == rt.model_to_dict(b)


def test_shared_subformulas_compile_once():
    # both inequalities use the same two suffix counts; each count chain is
    # built exactly once (a right count also materializes its left count)
    model = compile_text("[1*->#a - 1*->#b >= 0] & [1*->#b - 1*->#a >= 0]")
    counts = model.metadata["counts"]
    assert set(counts) == {"->#a", "->#b", "<-#a", "<-#b"}
