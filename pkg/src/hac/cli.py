"""Command-line surface: compile, run, check, oracle, and the letter-count
toolkit.

Exit codes are a stable contract: 0 for success (accept / equivalent /
pass), 1 for a verified negative (reject / mismatch / fail), 2 for usage or
input errors.  All machine output is JSON or JSONL on stdout.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import logic as lg
from . import parikh as pk
from . import runtime as rt
from .compiler import compile_formula
from .harness import differential_check
from .numerics import PrecisionPolicy


def _policy_from_args(args) -> PrecisionPolicy:
    floor = 64
    env = os.environ.get("HAC_PRECISION_BITS")
    if env is not None:
        try:
            floor = max(64, int(env))
        except ValueError:
            raise ValueError(f"HAC_PRECISION_BITS must be an integer, got {env!r}")
    mode = {"exact": "exact-rational", "bigfloat": "bigfloat"}[args.mode]
    return PrecisionPolicy(a=args.precision_a, b=args.precision_b, mode=mode, floor=floor)


def _add_precision_flags(p):
    p.add_argument("--precision-a", type=int, default=4, metavar="A",
                   help="precision law slope: bits(n) = A*n + B")
    p.add_argument("--precision-b", type=int, default=64, metavar="B",
                   help="precision law offset")
    p.add_argument("--mode", choices=("exact", "bigfloat"), default="bigfloat",
                   help="exact forbids irrational positional components")


def _emit(obj, out_path=None):
    text = obj if isinstance(obj, str) else json.dumps(obj, sort_keys=True) + "\n"
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_compile(args) -> int:
    alphabet = lg.Alphabet.of(args.alphabet)
    phi = lg.parse_formula(args.formula, alphabet)
    model = compile_formula(phi, alphabet, precision=_policy_from_args(args))
    rt.save_model(model, args.out)
    _emit(
        {
            "fragment": model.metadata["fragment"],
            "layers": len(model.layers),
            "width": model.final_width,
            "positional": len(model.positional),
            "ledger_size": len(model.metadata["ledger"]),
            "out": args.out,
        }
    )
    return 0


def cmd_run(args) -> int:
    model = rt.load_model(args.model)
    result = rt.run(model, args.word)
    value = rt.acceptance_value(model, result)
    from . import numerics as nm

    policy = model.precision
    s = nm.sign(value, policy.bits(len(args.word)), policy.max_escalations)
    if s == 0:
        raise rt.ModelInvalidError("acceptance value is exactly zero")
    decision = "accept" if s > 0 else "reject"
    if args.trace:
        ledger = model.metadata.get("ledger", {})
        for sub_text, coord in sorted(ledger.items(), key=lambda kv: kv[1]):
            bits = ",".join(str(v[coord]) for v in result.final)
            print(f"coord {coord:4d}  [{bits}]  {sub_text}")
    print(decision)
    return 0 if s > 0 else 1


def cmd_check(args) -> int:
    alphabet = lg.Alphabet.of(args.alphabet)
    max_len = args.max_len
    if max_len is None:
        max_len = 8 if len(alphabet) <= 2 else 6
    report = differential_check(
        args.formula,
        alphabet,
        max_len,
        policy=_policy_from_args(args),
        workers=args.workers,
        robustness=args.robustness,
    )
    _emit(report.to_jsonl(), args.out)
    return 0 if report.verdict == "equivalent" else 1


def cmd_oracle(args) -> int:
    alphabet = lg.Alphabet.of(args.alphabet)
    phi = lg.parse_formula(args.formula, alphabet)
    bits = lg.trace(phi, args.word)
    print("trace: " + ",".join(str(b) for b in bits))
    decision = "accept" if bits[0] else "reject"
    print(decision)
    return 0 if bits[0] else 1


def cmd_parikh(args) -> int:
    if args.parikh_cmd == "witness":
        s = pk.linear_set_from_dict(pk.load_document(args.set))
        alphabet = _default_alphabet(s.dimension)
        w = pk.witness_language(s, alphabet)
        _emit({"w0": w.prefix, "periods": list(w.blocks), "pattern": w.pattern()})
        return 0
    if args.parikh_cmd == "image":
        s = pk.linear_set_from_dict(pk.load_document(args.set))
        alphabet = _default_alphabet(s.dimension)
        w = pk.witness_language(s, alphabet)
        image = pk.parikh_image(w.member, alphabet, args.box)
        _emit({"box": args.box, "vectors": sorted(list(v) for v in image)})
        return 0
    if args.parikh_cmd == "perm-formula":
        constraint = pk.constraint_from_dict(pk.load_document(args.constraint))
        letters = args.alphabet or "".join(sorted(_constraint_letters(constraint)))
        alphabet = lg.Alphabet.of(letters)
        phi = pk.constraint_to_formula(constraint, alphabet)
        _emit({"alphabet": letters, "formula": lg.format_formula(phi)})
        return 0
    if args.parikh_cmd == "check-equiv":
        s = pk.linear_set_from_dict(pk.load_document(args.set))
        alphabet = _default_alphabet(s.dimension)
        w = pk.witness_language(s, alphabet)
        image = pk.parikh_image(w.member, alphabet, args.box)
        points = pk.linear_set_points(s, args.box)
        missing = sorted(list(v) for v in points - image)
        extra = sorted(list(v) for v in image - points)
        verdict = "pass" if not missing and not extra else "fail"
        _emit(
            {
                "box": args.box,
                "verdict": verdict,
                "missing_from_image": missing,
                "not_in_set": extra,
            }
        )
        return 0 if verdict == "pass" else 1
    raise ValueError(f"unknown parikh subcommand {args.parikh_cmd!r}")


def _default_alphabet(d: int) -> lg.Alphabet:
    if d > 26:
        raise ValueError("dimensions beyond 26 letters are not supported")
    return lg.Alphabet.of("abcdefghijklmnopqrstuvwxyz"[:d])


def _constraint_letters(c) -> set:
    if isinstance(c, pk.LinIneqConst):
        return {letter for letter, _ in c.coefs}
    if isinstance(c, pk.Congruence):
        return {c.letter}
    if isinstance(c, pk.ConstraintNot):
        return _constraint_letters(c.child)
    if isinstance(c, (pk.ConstraintAnd, pk.ConstraintOr)):
        out = set()
        for child in c.children:
            out |= _constraint_letters(child)
        return out
    raise TypeError(f"not a constraint: {c!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hac",
        description="compile temporal-counting formulas to hard-attention "
        "encoders, run them exactly, and verify them against the semantics",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("compile", help="compile a formula to a model file")
    p.add_argument("-a", "--alphabet", required=True)
    p.add_argument("-f", "--formula", required=True)
    p.add_argument("-o", "--out", required=True)
    _add_precision_flags(p)
    p.set_defaults(fn=cmd_compile)

    p = sub.add_parser("run", help="run a model file on a word")
    p.add_argument("-m", "--model", required=True)
    p.add_argument("word")
    p.add_argument("--trace", action="store_true",
                   help="print every ledger column")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("check", help="differential sweep against the oracle")
    p.add_argument("-a", "--alphabet", required=True)
    p.add_argument("-f", "--formula", required=True)
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--robustness", action="store_true",
                   help="re-run each word at doubled precision")
    p.add_argument("-o", "--out", default=None)
    _add_precision_flags(p)
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("oracle", help="evaluate a formula directly")
    p.add_argument("-a", "--alphabet", required=True)
    p.add_argument("-f", "--formula", required=True)
    p.add_argument("word")
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("parikh", help="letter-count toolkit")
    psub = p.add_subparsers(dest="parikh_cmd", required=True)
    w = psub.add_parser("witness", help="witness language of a linear set")
    w.add_argument("--set", required=True, help="JSON document or path")
    i = psub.add_parser("image", help="letter counts of the witness language")
    i.add_argument("--set", required=True)
    i.add_argument("--box", type=int, default=10, help="total-count bound")
    f = psub.add_parser("perm-formula", help="formula for a counting constraint")
    f.add_argument("--constraint", required=True, help="JSON document or path")
    f.add_argument("-a", "--alphabet", default=None)
    e = psub.add_parser("check-equiv", help="verify witness counts equal the set")
    e.add_argument("--set", required=True)
    e.add_argument("--box", type=int, default=10)
    p.set_defaults(fn=cmd_parikh)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except (
        lg.ParseError,
        lg.PredicateDomainError,
        rt.ModelFormatError,
        rt.ModelInvalidError,
        ValueError,
        OSError,
        json.JSONDecodeError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
