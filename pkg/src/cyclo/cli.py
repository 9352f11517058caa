"""Command-line front end.

    cyclo check FILE                 associativity and the operator identity suite
    cyclo homology FILE              HH, HC and HP dimensions
    cyclo hp FILE                    HP dimensions only
    cyclo chern FILE --idempotent P  Chern character, closedness and trace pairings
    cyclo transport FAMILY ...       Gauss-Manin transport of a chain or of ch P
    cyclo retract FILE ...           bidimension, exact HP of the retract, retract transport

FILE is an algebra or family JSON document, or ``builtin:NAME``.  Every
command prints a human-readable table (or, with ``--json``, the report
document).  Exit codes: 0 success, 1 mathematical failure, 2 input error,
3 resource cap.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
from fractions import Fraction
from typing import Optional

import numpy as np
import scipy

from . import __version__
from .algebra import STANDARD_ALGEBRAS, AlgebraError, FiniteAlgebra, upper_triangular
from .chains import ChainError, ChainVector, random_cochain
from .chern import ChernError, chern_idempotent, chern_invertible
from .deformation import (DeformationError, DeformationFamily, constant_family, fiber, from_filtered,
                          make_family, parse_family_scalar, transport, x_squared_t_family)
from .exactnum import linalg
from .exactnum.linalg import ResourceCapError
from .exactnum.poly import DegreeCapError, format_rational, parse_rational, parse_scalar
from .homology import hh_dims, hp_dims
from .operators import hochschild_b, identity_suite
from .retract import (CoboundingCochain, NotFound, RetractError, bidimension_upper, build_retract,
                      retract_transport, solve_universal_coboundary)

EXIT_OK, EXIT_MATH, EXIT_INPUT, EXIT_CAP = 0, 1, 2, 3

BUILTIN_FAMILIES = {
    "x2=t": x_squared_t_family,
    "UT2-filtered": lambda: from_filtered(upper_triangular(), (0, 0, 1), "UT2-filtered"),
}


class InputError(ValueError):
    pass


class MathFailure(Exception):
    """A computation finished but a mathematical check failed; carries the partial report."""

    def __init__(self, message: str, results: Optional[dict] = None):
        super().__init__(message)
        self.results = results or {}


# documents

def _load_text(path: str) -> tuple:
    if path.startswith("builtin:"):
        return None, path.encode()
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return json.loads(raw), raw
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: malformed JSON ({exc.msg} at line {exc.lineno})") from None


def _field(doc: dict, name: str):
    if not isinstance(doc, dict) or name not in doc:
        raise InputError(f"missing field {name!r}")
    return doc[name]


def _scalars(structure, d: int, poly: bool):
    if (not isinstance(structure, list) or len(structure) != d
            or any(not isinstance(r, list) or len(r) != d for r in structure)
            or any(not isinstance(c, list) or len(c) != d for r in structure for c in r)):
        raise InputError(f"structure must be a {d}x{d}x{d} array")
    parse = parse_family_scalar if poly else parse_scalar
    try:
        return [[[parse(x) for x in c] for c in r] for r in structure]
    except (ValueError, TypeError) as exc:
        raise InputError(f"bad scalar in structure: {exc}") from None


def _is_family_doc(doc: dict) -> bool:
    if "safe_interval" in doc:
        return True
    for r in doc.get("structure", []):
        for c in r:
            for x in c:
                try:
                    if not isinstance(parse_scalar(x), Fraction):
                        return True
                except (ValueError, TypeError):
                    return False
    return False


def algebra_from_doc(doc: dict) -> FiniteAlgebra:
    d = _field(doc, "dim")
    if not isinstance(d, int) or d < 1:
        raise InputError("dim must be a positive integer")
    structure = _scalars(_field(doc, "structure"), d, poly=False)
    if any(not isinstance(x, Fraction) for r in structure for c in r for x in c):
        raise InputError("algebra structure constants must be rational (use a family document for t)")
    unit = doc.get("unit")
    if unit is not None:
        try:
            unit = [parse_rational(str(x)) for x in unit]
        except ValueError as exc:
            raise InputError(f"bad unit: {exc}") from None
    return FiniteAlgebra(structure, doc.get("basis"), unit)


def family_from_doc(doc: dict) -> DeformationFamily:
    d = _field(doc, "dim")
    if not isinstance(d, int) or d < 1:
        raise InputError("dim must be a positive integer")
    structure = _scalars(_field(doc, "structure"), d, poly=True)
    unit = doc.get("unit")
    safe = doc.get("safe_interval")
    try:
        if unit is not None:
            unit = [parse_rational(str(x)) for x in unit]
        if safe is not None:
            if len(safe) != 2:
                raise InputError("safe_interval needs two endpoints")
            safe = [parse_rational(str(x)) for x in safe]
    except ValueError as exc:
        raise InputError(f"bad rational: {exc}") from None
    return make_family(structure, unit, doc.get("basis"), doc.get("label", ""), safe)


def load_algebra_or_family(path: str):
    """``("algebra", A)`` or ``("family", F)`` plus the raw bytes for the digest."""
    doc, raw = _load_text(path)
    if doc is None:
        name = path[len("builtin:"):]
        if name in STANDARD_ALGEBRAS:
            return "algebra", STANDARD_ALGEBRAS[name](), raw
        if name in BUILTIN_FAMILIES:
            return "family", BUILTIN_FAMILIES[name](), raw
        raise InputError(f"unknown builtin {name!r}; choose from "
                         f"{', '.join(sorted(STANDARD_ALGEBRAS) + sorted(BUILTIN_FAMILIES))}")
    if not isinstance(doc, dict):
        raise InputError("expected a JSON object")
    if _is_family_doc(doc):
        return "family", family_from_doc(doc), raw
    return "algebra", algebra_from_doc(doc), raw


def load_algebra(path: str) -> tuple:
    kind, obj, raw = load_algebra_or_family(path)
    if kind == "family":
        raise InputError("this command needs an algebra, not a family")
    return obj, raw


def load_family(path: str) -> tuple:
    kind, obj, raw = load_algebra_or_family(path)
    if kind == "algebra":
        obj = constant_family(obj)
    return obj, raw


def _element_doc(path: str) -> dict:
    doc, raw = _load_text(path)
    if not isinstance(doc, dict) or "element" not in doc:
        raise InputError(f"{path}: expected an object with an 'element' coordinate list")
    try:
        elem = [parse_rational(str(x)) for x in doc["element"]]
    except ValueError as exc:
        raise InputError(f"{path}: bad coordinate: {exc}") from None
    return {"element": elem, "N": int(doc.get("N", 1)), "digest": _digest(raw)}


def _digest(raw: bytes) -> str:
    return "sha256:" + hashlib.sha256(raw).hexdigest()


# reports

def report_document(command: str, inputs: dict, results: dict, residuals: dict, exit_code: int) -> dict:
    return {"command": command, "inputs": inputs, "results": results, "residuals": residuals,
            "versions": {"cyclo": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                         "python": platform.python_version()},
            "exit_code": exit_code}


def dumps(doc: dict) -> str:
    """Canonical JSON; re-parsing and re-emitting reproduces the same bytes."""
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=True) + "\n"


def _flat_rows(prefix: str, value, out: list) -> None:
    if isinstance(value, dict):
        for k in sorted(value):
            _flat_rows(f"{prefix}.{k}" if prefix else str(k), value[k], out)
    elif isinstance(value, list) and value and all(not isinstance(v, (dict, list)) for v in value):
        out.append((prefix, "[" + ", ".join(json.dumps(v) for v in value) + "]"))
    elif isinstance(value, list):
        if len(value) > 12:
            out.append((prefix, f"<{len(value)} entries; see --json>"))
        else:
            for i, v in enumerate(value):
                _flat_rows(f"{prefix}[{i}]", v, out)
    else:
        out.append((prefix, json.dumps(value)))


def render_table(doc: dict) -> str:
    """Two-column table of every scalar in ``results`` and ``residuals`` (values as in the JSON)."""
    rows: list = []
    _flat_rows("", {"results": doc["results"], "residuals": doc["residuals"]}, rows)
    width = max((len(k) for k, _ in rows), default=0)
    lines = [f"cyclo {doc['command']}  (exit {doc['exit_code']})"]
    lines += [f"  {k.ljust(width)}  {v}" for k, v in rows]
    return "\n".join(lines) + "\n"


# commands

def cmd_check(args) -> tuple:
    kind, obj, raw = load_algebra_or_family(args.file)
    A = obj if kind == "algebra" else fiber(obj, parse_rational(args.at))
    cochains = [random_cochain(A, 1 + i % 3, args.seed + i) for i in range(args.cochains)]
    checks = identity_suite(A, cochains, args.max_degree, stop_at_first=True)
    failed = [c for c in checks if not c.holds]
    results = {"kind": kind, "dim": A.dim, "identities_checked": len(checks), "all_hold": not failed}
    if kind == "family":
        results["fiber"] = args.at
    inputs = {"digest": _digest(raw), "flags": {"max_degree": args.max_degree, "cochains": args.cochains,
                                                "seed": args.seed, "at": args.at}}
    if failed:
        results["first_failure"] = {"identity": failed[0].name, "degree": failed[0].degree}
        raise MathFailure(f"identity fails: {failed[0].name} on C_{failed[0].degree}",
                          {"inputs": inputs, "results": results})
    return inputs, results, {}


def cmd_homology(args) -> tuple:
    A, raw = load_algebra(args.file)
    rep = hp_dims(A, args.hp_window, hh_max=args.max_degree)
    inputs = {"digest": _digest(raw), "flags": {"max_degree": args.max_degree, "hp_window": args.hp_window}}
    return inputs, rep.to_json(), {}


def cmd_hp(args) -> tuple:
    A, raw = load_algebra(args.file)
    rep = hp_dims(A, args.hp_window)
    inputs = {"digest": _digest(raw), "flags": {"hp_window": args.hp_window}}
    return inputs, {"hp": rep.to_json()["hp"], "s_ranks": rep.to_json()["s_ranks"]}, {}


def _traces(A: FiniteAlgebra) -> list:
    """Exact basis of traces (degree-0 cocycles): functionals vanishing on ``b(C_1)``."""
    _, ker = linalg.rank_kernel(hochschild_b(A, 1).matrix.T)
    return ker


def cmd_chern(args) -> tuple:
    A, raw = load_algebra(args.file)
    if (args.idempotent is None) == (args.invertible is None):
        raise InputError("give exactly one of --idempotent or --invertible")
    src = _element_doc(args.idempotent or args.invertible)
    if args.idempotent:
        ch = chern_idempotent(A, src["element"], args.cutoff, src["N"])
    else:
        ch = chern_invertible(A, src["element"], args.cutoff, src["N"], literal=args.literal)
    results = ch.to_json()
    results["closed"] = ch.closed
    if ch.parity == "even":
        comp0 = ch.chain.dense(0) if 0 in ch.chain.components else [Fraction(0)] * A.dim
        results["trace_pairings"] = [format_rational(sum(a * b for a, b in zip(tau, comp0)))
                                     for tau in _traces(A)]
    inputs = {"digest": _digest(raw), "element_digest": src["digest"],
              "flags": {"cutoff": args.cutoff, "literal": args.literal}}
    if not ch.closed:
        raise MathFailure("Chern character is not closed below the cutoff", {"inputs": inputs, "results": results})
    return inputs, results, {}


def cmd_transport(args) -> tuple:
    family, raw = load_family(args.file)
    s, t = parse_rational(args.from_), parse_rational(args.to)
    family.check_interval(s, t)
    A_s = fiber(family, s)
    inputs = {"digest": _digest(raw), "flags": {"from": args.from_, "to": args.to, "window": args.window,
                                                "method": args.method, "step": args.step,
                                                "drift_tol": args.drift_tol}}
    if (args.chain is None) == (args.chern_idempotent is None):
        raise InputError("give exactly one of --chain or --chern-idempotent")
    if args.chain:
        doc, craw = _load_text(args.chain)
        try:
            omega = ChainVector.from_json(A_s, doc)
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed chain document: {exc}") from None
        inputs["chain_digest"] = _digest(craw)
        truncate = False
    else:
        src = _element_doc(args.chern_idempotent)
        omega = chern_idempotent(A_s, src["element"], args.window + 2, src["N"])
        inputs["idempotent_digest"] = src["digest"]
        truncate = True
    rep = transport(family, s, t, omega, args.window, args.method, args.step, truncate=truncate)
    doc = rep.to_json()
    residuals = doc.pop("residuals")
    drift = residuals.get("pairing_drift")
    if drift is not None and drift > args.drift_tol:
        raise MathFailure(f"pairing_drift {drift:.3g} exceeds {args.drift_tol:g}",
                          {"inputs": inputs, "results": doc, "residuals": residuals})
    return inputs, doc, residuals


def cmd_retract(args) -> tuple:
    kind, obj, raw = load_algebra_or_family(args.file)
    inputs = {"digest": _digest(raw), "flags": {"n_max": args.n_max, "N": args.N, "from": args.from_,
                                                "to": args.to, "grid_step": args.grid_step}}
    if kind == "family" and args.from_ is not None:
        s, t = parse_rational(args.from_), parse_rational(args.to)
        n = bidimension_upper(fiber(obj, s), args.n_max)
        if isinstance(n, NotFound):
            raise MathFailure(str(n), {"inputs": inputs, "results": {"bidimension_upper": str(n)}})
        N = max(args.N, n // 2 + 1)
        rep = retract_transport(obj, n, N, s, t, parse_rational(args.grid_step),
                                check_interval=not args.ignore_safe_interval)
        doc = rep.to_json()
        residuals = doc["transport"].pop("residuals")
        doc["bidimension_upper"] = n
        drift = residuals.get("pairing_drift")
        if drift is not None and drift > args.drift_tol:
            raise MathFailure(f"pairing_drift {drift:.3g} exceeds {args.drift_tol:g}",
                              {"inputs": inputs, "results": doc, "residuals": residuals})
        return inputs, doc, residuals
    A = obj if kind == "algebra" else fiber(obj, parse_rational(args.at))
    n = bidimension_upper(A, args.n_max)
    results = {"bidimension_upper": n if isinstance(n, int) else str(n)}
    if isinstance(n, int):
        phi = solve_universal_coboundary(A, n)
        assert isinstance(phi, CoboundingCochain)
        N = max(args.N, n // 2 + 1)
        rc = build_retract(A, phi, N)
        results.update({"n": n, "N": N, "hp": list(rc.homology_dims()),
                        "retract_dims": {"even": int(sum(s for k, s in enumerate(rc.sizes0[:-1]) if k % 2 == 0))
                                         + rc.sizes0[-1],
                                         "odd": int(sum(s for k, s in enumerate(rc.sizes0[:-1]) if k % 2))},
                        "checks": {k: v for k, v in rc.checks.items() if isinstance(v, bool)}})
    return inputs, results, {}


COMMANDS = {"check": cmd_check, "homology": cmd_homology, "hp": cmd_hp, "chern": cmd_chern,
            "transport": cmd_transport, "retract": cmd_retract}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cyclo", description="Exact cyclic homology and Gauss-Manin transport")
    p.add_argument("--version", action="version", version=f"cyclo {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp_):
        sp_.add_argument("file", help="algebra/family JSON or builtin:NAME")
        sp_.add_argument("--json", action="store_true", help="print the JSON report instead of a table")
        sp_.add_argument("--output", help="also write the JSON report to this path")

    c = sub.add_parser("check", help="associativity and operator identities")
    common(c)
    c.add_argument("--max-degree", type=int, default=4)
    c.add_argument("--cochains", type=int, default=6)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--at", default="1", help="fiber used for family documents")

    h = sub.add_parser("homology", help="HH, HC and HP dimensions")
    common(h)
    h.add_argument("--max-degree", type=int, default=4)
    h.add_argument("--hp-window", type=int, default=3)

    h = sub.add_parser("hp", help="HP dimensions")
    common(h)
    h.add_argument("--hp-window", type=int, default=3)

    c = sub.add_parser("chern", help="Chern character of an idempotent or invertible")
    common(c)
    c.add_argument("--idempotent")
    c.add_argument("--invertible")
    c.add_argument("--cutoff", type=int, default=6)
    c.add_argument("--literal", action="store_true", help="odd character without the A_+ lift")

    tr = sub.add_parser("transport", help="Gauss-Manin transport along a family")
    common(tr)
    tr.add_argument("--from", dest="from_", required=True)
    tr.add_argument("--to", required=True)
    tr.add_argument("--window", type=int, default=6)
    tr.add_argument("--method", choices=["rk4", "dyson", "nilpotent_exp"], default="rk4")
    tr.add_argument("--step", type=float, default=1e-3)
    tr.add_argument("--chain")
    tr.add_argument("--chern-idempotent")
    tr.add_argument("--drift-tol", type=float, default=1e-6)

    r = sub.add_parser("retract", help="bidimension, retract homology and retract transport")
    common(r)
    r.add_argument("--n-max", type=int, default=4)
    r.add_argument("--N", type=int, default=1)
    r.add_argument("--at", default="1", help="fiber used for family documents without --from")
    r.add_argument("--from", dest="from_")
    r.add_argument("--to")
    r.add_argument("--grid-step", default="1/100")
    r.add_argument("--drift-tol", type=float, default=1e-6)
    r.add_argument("--ignore-safe-interval", action="store_true",
                   help="transport outside the declared safe interval (solvability is still checked)")
    return p


def _classify(exc: BaseException) -> int:
    if isinstance(exc, (ResourceCapError, DegreeCapError)):
        return EXIT_CAP
    if isinstance(exc, (InputError, ChainError)):
        return EXIT_INPUT
    if isinstance(exc, (AlgebraError, ChernError, DeformationError, RetractError, MathFailure)):
        return EXIT_MATH
    return EXIT_INPUT


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "retract" and (args.from_ is None) != (args.to is None):
        parser.error("--from and --to go together")
    inputs, results, residuals = {"file": args.file}, {}, {}
    try:
        inputs, results, residuals = COMMANDS[args.command](args)
        code, error = EXIT_OK, None
    except MathFailure as exc:
        code, error = EXIT_MATH, str(exc)
        inputs = exc.results.get("inputs", inputs)
        results = exc.results.get("results", {})
        residuals = exc.results.get("residuals", {})
    except (ResourceCapError, DegreeCapError, InputError, ChainError, AlgebraError, ChernError,
            DeformationError, RetractError, ValueError) as exc:
        name = type(exc).__name__
        code, error = _classify(exc), (str(exc) if str(exc).startswith(name) else f"{name}: {exc}")
    if error is not None:
        results = dict(results)
        results["error"] = error
    doc = report_document(args.command, inputs, results, residuals, code)
    text = dumps(doc)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    sys.stdout.write(text if args.json else render_table(doc))
    return code


if __name__ == "__main__":
    sys.exit(main())
