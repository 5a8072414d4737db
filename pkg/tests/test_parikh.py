"""Letter-count constructions against enumeration and independent matchers."""

import random
from itertools import product

import pytest

from hac import logic as lg
from hac import parikh as pk
from hac import runtime as rt
from hac.compiler import compile_formula
from oracles import all_words

ABC = lg.Alphabet.of("abc")


def naive_star_match(word, prefix, blocks):
    """Backtracking matcher for prefix blocks[0]* ... blocks[r-1]*,
    independent of the package's table-driven parse."""
    if not word.startswith(prefix):
        return False

    def rec(s, k):
        if k == len(blocks):
            return s == ""
        if rec(s, k + 1):
            return True
        return s.startswith(blocks[k]) and rec(s[len(blocks[k]) :], k)

    return rec(word[len(prefix) :], 0)


def random_linear_set(rng, max_dim=3, max_entry=3):
    d = rng.randint(1, max_dim)
    base = tuple(rng.randint(0, max_entry) for _ in range(d))
    periods = []
    for _ in range(rng.randint(0, 3)):
        vec = tuple(rng.randint(0, max_entry) for _ in range(d))
        if any(vec):
            periods.append(vec)
    return pk.LinearSet(base, tuple(periods))


# -- witness languages ---------------------------------------------------------

def test_running_example_witness():
    s = pk.LinearSet((1, 1, 0), ((2, 0, 1),))
    w = pk.witness_language(s, ABC)
    assert w.prefix == "ab" and w.blocks == ("aac",)
    assert w.pattern() == "ab (aac)*"
    assert len(w.prefix) == 2 and len(w.blocks[0]) == 3  # length abstractions


def test_base_only_witness_is_a_single_word():
    s = pk.LinearSet((2, 0))
    w = pk.witness_language(s, lg.Alphabet.of("ab"))
    assert w.member("aa") and not w.member("a") and not w.member("aab")


def test_witness_dimension_mismatch():
    with pytest.raises(ValueError):
        pk.witness_language(pk.LinearSet((1, 1)), ABC)


def test_member_on_overlapping_blocks():
    # maximal-munch consumption of the first star would wrongly reject
    # "aab" = a * ab here; the table-driven parse accepts it
    w = pk.WitnessLanguage("", ("a", "ab"))
    assert w.member("aab") and w.member("") and w.member("aaa")
    assert not w.member("ba") and not w.member("aba")


def test_member_agrees_with_backtracking_matcher():
    rng = random.Random(3)
    for _ in range(30):
        s = random_linear_set(rng)
        alphabet = lg.Alphabet.of("abc"[: s.dimension])
        w = pk.witness_language(s, alphabet)
        for word in all_words(alphabet, 6, min_len=0):
            assert w.member(word) == naive_star_match(word, w.prefix, w.blocks), (
                w,
                word,
            )


def test_linear_set_validation():
    with pytest.raises(ValueError):
        pk.LinearSet((1, -1))
    with pytest.raises(ValueError):
        pk.LinearSet((1,), ((0,),))  # zero period
    with pytest.raises(ValueError):
        pk.LinearSet((1, 0), ((1, 0, 0),))


# -- parikh images ----------------------------------------------------------------

def test_running_example_image_box_8():
    s = pk.LinearSet((1, 1, 0), ((2, 0, 1),))
    w = pk.witness_language(s, ABC)
    assert pk.parikh_image(w.member, ABC, 8) == {(1, 1, 0), (3, 1, 1), (5, 1, 2)}


def test_image_of_anbn_oracle():
    ab = lg.Alphabet.of("ab")

    def anbn(word):
        n = len(word) // 2
        return len(word) >= 2 and word == "a" * n + "b" * n

    assert pk.parikh_image(anbn, ab, 6) == {(1, 1), (2, 2), (3, 3)}


def test_image_of_empty_language():
    assert pk.parikh_image(lambda w: False, ABC, 4) == set()


def test_zero_base_witness_keeps_zero_vector():
    s = pk.LinearSet((0, 0), ((1, 1),))
    w = pk.witness_language(s, lg.Alphabet.of("ab"))
    image = pk.parikh_image(w.member, lg.Alphabet.of("ab"), 6)
    assert (0, 0) in image and image == pk.linear_set_points(s, 6)


# -- semilinear membership -----------------------------------------------------------

def test_semilinear_member_running_example():
    s = pk.LinearSet((1, 1, 0), ((2, 0, 1),))
    assert pk.semilinear_member((3, 1, 1), s)
    assert not pk.semilinear_member((2, 1, 0), s)
    assert pk.semilinear_member((1, 1, 0), s)


def test_semilinear_member_union():
    s = pk.SemilinearSet((pk.LinearSet((1, 0)), pk.LinearSet((0, 2), ((0, 1),))))
    assert pk.semilinear_member((1, 0), s)
    assert pk.semilinear_member((0, 5), s)
    assert not pk.semilinear_member((1, 1), s)
    with pytest.raises(ValueError):
        pk.semilinear_member((1, 0, 0), s)


def test_semilinear_member_agrees_with_direct_generation():
    rng = random.Random(5)
    for _ in range(25):
        s = random_linear_set(rng, max_dim=2)
        box = 7
        generated = set()
        multipliers = product(range(box + 1), repeat=len(s.periods))
        for ks in multipliers:
            v = list(s.base)
            for k, p in zip(ks, s.periods):
                v = [x + k * y for x, y in zip(v, p)]
            if sum(v) <= box:
                generated.add(tuple(v))
        for v in product(range(box + 1), repeat=s.dimension):
            if sum(v) <= box:
                assert pk.semilinear_member(v, s) == (tuple(v) in generated), (s, v)


def test_parikh_equivalence_on_random_sets():
    rng = random.Random(9)
    for _ in range(10):
        s = random_linear_set(rng)
        alphabet = lg.Alphabet.of("abc"[: s.dimension])
        w = pk.witness_language(s, alphabet)
        assert pk.parikh_image(w.member, alphabet, 8) == pk.linear_set_points(s, 8)


# -- constraints and emitted formulas ---------------------------------------------------

def test_constraint_evaluation():
    c = pk.ConstraintAnd(
        (
            pk.LinIneqConst((("a", 1), ("b", -1))),
            pk.ConstraintNot(pk.Congruence("a", 3, 2)),
        )
    )
    assert pk.eval_constraint(c, {"a": 4, "b": 1})
    assert not pk.eval_constraint(c, {"a": 2, "b": 3})
    assert not pk.eval_constraint(c, {"a": 5, "b": 0})  # 5 = 2 (mod 3)


def test_constraint_to_formula_guarantee():
    cases = [
        pk.equal_counts_constraint("ab"),
        pk.Congruence("a", 2, 0),
        pk.ConstraintOr(
            (pk.LinIneqConst((("a", 2), ("b", -1)), const=-1), pk.Congruence("b", 3, 0))
        ),
        pk.ConstraintNot(pk.LinIneqConst((("c", 1),), const=-2)),
    ]
    for c in cases:
        phi = pk.constraint_to_formula(c, ABC)
        for word in all_words(ABC, 5):
            counts = dict(zip("abc", pk.count_vector(word, ABC)))
            assert bool(lg.accepts(phi, word)) == pk.eval_constraint(c, counts), (
                c,
                word,
            )


def test_constant_terms_ride_on_left_count_of_true():
    c = pk.LinIneqConst((("a", 2),), const=-3)
    phi = pk.constraint_to_formula(c, ABC)
    assert lg.LinTerm(-3, lg.LEFT, lg.Truth()) in phi.terms


def test_emitted_formulas_are_permutation_invariant():
    c = pk.equal_counts_constraint("abc")
    phi = pk.constraint_to_formula(c, ABC)
    for word in all_words(ABC, 7):
        canonical = "".join(sorted(word))
        assert lg.accepts(phi, word) == lg.accepts(phi, canonical), word


def test_parity_constraint_route():
    phi = pk.constraint_to_formula(pk.Congruence("a", 2, 0), lg.Alphabet.of("ab"))
    assert lg.format_formula(phi) == "@mod(2,0)(->#a)"
    for word in all_words(lg.Alphabet.of("ab"), 6):
        assert bool(lg.accepts(phi, word)) == (word.count("a") % 2 == 0)


def test_majority_constraint_route():
    # strict majority of a's: 2|a| - |a| - |b| - 1 >= 0 over {a,b}
    c = pk.LinIneqConst((("a", 1), ("b", -1)), const=-1)
    phi = pk.constraint_to_formula(c, lg.Alphabet.of("ab"))
    for word in all_words(lg.Alphabet.of("ab"), 6):
        want = word.count("a") > len(word) / 2
        assert bool(lg.accepts(phi, word)) == want


# -- permutation closure oracle -----------------------------------------------------------

def _base_abc_star(word):
    return len(word) % 3 == 0 and word == "abc" * (len(word) // 3)


def _base_ab_plus(word):
    return len(word) >= 2 and len(word) % 2 == 0 and word == "ab" * (len(word) // 2)


def test_perm_closure_member():
    assert pk.perm_closure_member("cab", _base_abc_star, 9)
    assert not pk.perm_closure_member("aab", _base_abc_star, 9)
    assert pk.perm_closure_member("bbaa", _base_ab_plus, 9)
    with pytest.raises(ValueError):
        pk.perm_closure_member("aaaa", _base_abc_star, 3)


def test_perm_closure_is_count_determined():
    for word in all_words(ABC, 6):
        want = (
            word.count("a") == word.count("b") == word.count("c") and len(word) > 0
        ) and len(word) % 3 == 0
        assert pk.perm_closure_member(word, _base_abc_star, 6) == want


# -- prime example --------------------------------------------------------------------------

_PRIMES = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61}


def test_prime_formula_oracle_1_to_64():
    phi = pk.prime_example_formula()
    for n in range(1, 65):
        assert bool(lg.accepts(phi, "a" * n)) == (n in _PRIMES), n


def test_prime_formula_compiled_agrees_1_to_64():
    phi = pk.prime_example_formula()
    model = compile_formula(phi, lg.Alphabet.of("a"))
    assert model.metadata["fragment"] == "Mon"
    for n in range(1, 65):
        assert rt.accept(model, "a" * n) == (n in _PRIMES), n


# -- documents -------------------------------------------------------------------------------

def test_set_documents():
    s = pk.linear_set_from_dict({"base": [1, 1, 0], "periods": [[2, 0, 1]]})
    assert s == pk.LinearSet((1, 1, 0), ((2, 0, 1),))
    u = pk.semilinear_set_from_dict(
        {"union": [{"base": [1], "periods": []}, {"base": [0], "periods": [[2]]}]}
    )
    assert len(u.components) == 2
    with pytest.raises(ValueError):
        pk.linear_set_from_dict({"base": [1]})


def test_constraint_documents():
    c = pk.constraint_from_dict(
        {
            "or": [
                {"ineq": {"coefs": {"a": 1, "b": -1}, "const": 2}},
                {"not": {"cong": {"letter": "a", "mod": 2, "res": 1}}},
            ]
        }
    )
    assert isinstance(c, pk.ConstraintOr)
    assert pk.eval_constraint(c, {"a": 0, "b": 0})
    with pytest.raises(ValueError):
        pk.constraint_from_dict({"what": 1})
    with pytest.raises(ValueError):
        pk.constraint_from_dict({"cong": {"letter": "a", "mod": 0, "res": 0}})
