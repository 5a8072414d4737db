"""Hard-attention compiler: temporal-counting formulas to exact encoder
models, with a differential verifier against the logic semantics."""

from .logic import (
    Alphabet,
    Atom,
    And,
    Formula,
    Fragment,
    LinIneq,
    LinTerm,
    Next,
    Not,
    Or,
    Pred,
    PredOfCount,
    Truth,
    Until,
    accepts,
    classify,
    eval_at,
    format_formula,
    parse_formula,
    trace,
)
from .compiler import compile_formula
from .numerics import PrecisionPolicy
from .runtime import EncoderModel, accept, load_model, run, save_model

__all__ = [
    "Alphabet",
    "Atom",
    "And",
    "EncoderModel",
    "Formula",
    "Fragment",
    "LinIneq",
    "LinTerm",
    "Next",
    "Not",
    "Or",
    "Pred",
    "PredOfCount",
    "PrecisionPolicy",
    "Truth",
    "Until",
    "accept",
    "accepts",
    "classify",
    "compile_formula",
    "eval_at",
    "format_formula",
    "load_model",
    "parse_formula",
    "run",
    "save_model",
    "trace",
]
