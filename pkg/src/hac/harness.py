"""Differential verification of compiled models against the logic oracle.

A check compiles the formula once, enumerates every word up to a length
bound in length-lexicographic order, and compares (1) the model's accept
decision against direct evaluation and (2) every ledger column against the
position-wise satisfaction trace of its subformula.  Optionally each word
is re-run at doubled precision and any change of attention selection or
decision is recorded.  Reports are deterministic: same inputs, byte-equal
output, regardless of worker count.
"""

from __future__ import annotations

import json
import multiprocessing
from dataclasses import dataclass, field
from itertools import product
from typing import Optional

from gmpy2 import mpq

from . import logic as lg
from . import numerics as nm
from . import runtime as rt
from .compiler import compile_formula
from .numerics import PrecisionPolicy


@dataclass(frozen=True)
class Mismatch:
    word: str
    position: int
    oracle: int
    model: int
    subformula: str

    def sort_key(self):
        return (len(self.word), self.word, self.subformula, self.position)


@dataclass
class CheckReport:
    formula: str
    alphabet: str
    min_len: int
    max_len: int
    words_tested: int
    mismatches: tuple
    min_score_gap: Optional[float]
    precision: dict
    min_margin: Optional[str]  # smallest |acceptance value|, canonical rational
    max_margin: Optional[str]
    robustness_checked: bool = False
    robustness_failures: tuple = ()

    @property
    def verdict(self) -> str:
        return "equivalent" if not self.mismatches else "mismatch"

    def to_records(self) -> list:
        records = [
            {
                "record": "mismatch",
                "word": m.word,
                "position": m.position,
                "oracle": m.oracle,
                "model": m.model,
                "subformula": m.subformula,
            }
            for m in self.mismatches
        ]
        records.append(
            {
                "record": "summary",
                "formula": self.formula,
                "alphabet": self.alphabet,
                "min_len": self.min_len,
                "max_len": self.max_len,
                "words": self.words_tested,
                "mismatches": len(self.mismatches),
                "verdict": self.verdict,
                "min_score_gap": self.min_score_gap,
                "precision": self.precision,
                "min_margin": self.min_margin,
                "max_margin": self.max_margin,
                "robustness_checked": self.robustness_checked,
                "robustness_failures": list(self.robustness_failures),
            }
        )
        return records

    def to_jsonl(self) -> str:
        return "\n".join(json.dumps(r, sort_keys=True) for r in self.to_records()) + "\n"


def words_up_to(alphabet: lg.Alphabet, max_len: int, min_len: int = 1):
    """All words in length-lexicographic order, alphabet order within a
    length."""
    symbols = tuple(alphabet)
    for n in range(min_len, max_len + 1):
        for tup in product(symbols, repeat=n):
            yield "".join(tup)


@dataclass
class _ChunkResult:
    mismatches: list = field(default_factory=list)
    min_gap: Optional[float] = None
    min_margin: Optional[mpq] = None
    max_margin: Optional[mpq] = None
    robustness_failures: list = field(default_factory=list)
    words: int = 0


def _check_chunk(payload) -> _ChunkResult:
    model, phi, ledger_subs, words, policy, check_traces, robustness = payload
    out = _ChunkResult()
    for word in words:
        out.words += 1
        n = len(word)
        res = rt.run(model, word, policy=policy, want_gaps=True)
        value = rt.acceptance_value(model, res)
        s = nm.sign(value, policy.bits(n), policy.max_escalations)
        model_bit = 1 if s > 0 else 0
        oracle_bit = lg.accepts(phi, word)
        if model_bit != oracle_bit:
            out.mismatches.append(
                Mismatch(word, 0, oracle_bit, model_bit, "<accept>")
            )
        if isinstance(value, mpq):
            margin = abs(value)
            if out.min_margin is None or margin < out.min_margin:
                out.min_margin = margin
            if out.max_margin is None or margin > out.max_margin:
                out.max_margin = margin
        for layer_gaps in res.gaps:
            if not layer_gaps:
                continue
            g = min(nm.to_float(g) for g in layer_gaps)
            if out.min_gap is None or g < out.min_gap:
                out.min_gap = g
        if check_traces:
            for sub_text, sub_phi, coord in ledger_subs:
                want = lg.trace(sub_phi, word)
                for i in range(n):
                    got = res.final[i][coord]
                    got_bit = 1 if got == 1 else (0 if got == 0 else -1)
                    if got_bit != want[i]:
                        out.mismatches.append(
                            Mismatch(word, i, want[i], got_bit, sub_text)
                        )
        if robustness:
            rob = rt.robustness_check(model, word, baseline=res, policy=policy)
            if not rob.clean:
                out.robustness_failures.append(word)
    return out


def differential_check(
    formula_text: str,
    alphabet: lg.Alphabet,
    max_len: int,
    policy: Optional[PrecisionPolicy] = None,
    workers: int = 1,
    check_traces: bool = True,
    robustness: bool = False,
    min_len: int = 1,
    model: Optional[rt.EncoderModel] = None,
) -> CheckReport:
    """Compile once, sweep every word, and report the comparison."""
    phi = lg.parse_formula(formula_text, alphabet)
    if model is None:
        model = compile_formula(phi, alphabet, precision=policy)
    policy = policy or model.precision
    ledger_subs = []
    if check_traces:
        for sub_text, coord in sorted(
            model.metadata.get("ledger", {}).items(), key=lambda kv: kv[1]
        ):
            ledger_subs.append((sub_text, lg.parse_formula(sub_text, alphabet), coord))

    words = list(words_up_to(alphabet, max_len, min_len))
    chunks = []
    k = max(1, min(workers, len(words)))
    step = (len(words) + k - 1) // k
    for start in range(0, len(words), step):
        chunks.append(
            (
                model,
                phi,
                ledger_subs,
                words[start : start + step],
                policy,
                check_traces,
                robustness,
            )
        )
    if k > 1 and len(chunks) > 1:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(processes=k) as pool:
            results = pool.map(_check_chunk, chunks)
    else:
        results = [_check_chunk(c) for c in chunks]

    mismatches, rob_failures = [], []
    min_gap, min_margin, max_margin = None, None, None
    total = 0
    for r in results:
        total += r.words
        mismatches.extend(r.mismatches)
        rob_failures.extend(r.robustness_failures)
        if r.min_gap is not None and (min_gap is None or r.min_gap < min_gap):
            min_gap = r.min_gap
        if r.min_margin is not None and (min_margin is None or r.min_margin < min_margin):
            min_margin = r.min_margin
        if r.max_margin is not None and (max_margin is None or r.max_margin > max_margin):
            max_margin = r.max_margin
    mismatches.sort(key=Mismatch.sort_key)
    return CheckReport(
        formula=formula_text,
        alphabet=str(alphabet),
        min_len=min_len,
        max_len=max_len,
        words_tested=total,
        mismatches=tuple(mismatches),
        min_score_gap=min_gap,
        precision={
            "a": policy.a,
            "b": policy.b,
            "mode": policy.mode,
            "floor": policy.floor,
        },
        min_margin=str(min_margin) if min_margin is not None else None,
        max_margin=str(max_margin) if max_margin is not None else None,
        robustness_checked=robustness,
        robustness_failures=tuple(sorted(rob_failures, key=lambda w: (len(w), w))),
    )
