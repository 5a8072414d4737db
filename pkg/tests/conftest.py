import pytest

from hac import compiler, logic


_MODEL_CACHE = {}


@pytest.fixture(scope="session")
def compiled():
    """Session-wide cache of compiled models keyed by (formula, alphabet)."""

    def get(text: str, alphabet: str):
        key = (text, alphabet)
        if key not in _MODEL_CACHE:
            ab = logic.Alphabet.of(alphabet)
            phi = logic.parse_formula(text, ab)
            _MODEL_CACHE[key] = compiler.compile_formula(phi, ab)
        return _MODEL_CACHE[key]

    return get
