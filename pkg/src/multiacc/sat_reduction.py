"""Compile a 3CNF into two pairing structures whose intersection counts its models.

For clause ``j`` and slot ``s`` there are four indices ``(j, s, c1, c2)``.
Setting variable ``a`` to ``r`` pairs ``(j, s, 0, 0)`` with ``(j, s, 1, r)``
and ``(j, s, 0, 1)`` with ``(j, s, 1, 1 - r)`` at every slot where ``a``
occurs.  ``T`` is the product over variables of the two consistent
choices, ``U`` the product over clauses of the seven slot patterns that
satisfy the clause, and ``|S(T) ∩ S(U)|`` is the number of satisfying
assignments of the occurring variables.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import pairing as pr
from .errors import CapacityError, ParseError

BRUTE_MAX_VARS = 24


@dataclass(frozen=True)
class CnfFormula:
    """Clauses of ``(variable, bit)`` literals; a literal holds when ``x_variable == bit``."""

    num_vars: int
    clauses: tuple

    def __post_init__(self):
        if self.num_vars < 1:
            raise ValueError("a formula needs at least one variable")
        clauses = tuple(tuple((int(v), int(b)) for v, b in c) for c in self.clauses)
        for c in clauses:
            if len(c) != 3:
                raise ValueError(f"every clause needs exactly 3 literals, got {len(c)}")
            for v, b in c:
                if not 1 <= v <= self.num_vars or b not in (0, 1):
                    raise ValueError(f"bad literal ({v}, {b})")
        object.__setattr__(self, "clauses", clauses)

    @property
    def num_clauses(self) -> int:
        return len(self.clauses)

    @property
    def occurring_vars(self) -> list:
        return sorted({v for c in self.clauses for v, _ in c})

    def satisfied_by(self, assignment) -> bool:
        """``assignment`` maps variables to bits (a dict or a 1-based sequence with a dummy 0)."""
        return all(any(assignment[v] == b for v, b in c) for c in self.clauses)

    def to_dimacs(self) -> str:
        lines = [f"p cnf {self.num_vars} {self.num_clauses}"]
        for c in self.clauses:
            lines.append(" ".join(str(v if b else -v) for v, b in c) + " 0")
        return "\n".join(lines) + "\n"


def parse_dimacs(text: str) -> CnfFormula:
    """Read DIMACS CNF restricted to 3-literal clauses.

    Comment lines start with ``c``; a ``%`` line ends the clause list.
    Clauses may span lines and are terminated by ``0``.
    """
    header = None
    tokens = []
    offset = 0
    for line in text.splitlines(keepends=True):
        stripped = line.strip()
        if stripped.startswith("%"):
            break
        if not stripped or stripped.startswith("c"):
            offset += len(line)
            continue
        if stripped.startswith("p"):
            parts = stripped.split()
            if header is not None:
                raise ParseError("duplicate problem line", offset)
            if len(parts) != 4 or parts[1] != "cnf":
                raise ParseError("expected 'p cnf <vars> <clauses>'", offset)
            try:
                header = (int(parts[2]), int(parts[3]))
            except ValueError:
                raise ParseError("non-integer counts in problem line", offset) from None
            if header[0] < 1 or header[1] < 0:
                raise ParseError("problem line counts out of range", offset)
        else:
            if header is None:
                raise ParseError("clause before problem line", offset)
            col = 0
            for tok in line.split():
                col = line.index(tok, col)
                tokens.append((tok, offset + col))
                col += len(tok)
        offset += len(line)
    if header is None:
        raise ParseError("missing problem line")
    m, k = header
    clauses, cur = [], []
    for tok, pos in tokens:
        try:
            lit = int(tok)
        except ValueError:
            raise ParseError(f"bad literal {tok!r}", pos) from None
        if lit == 0:
            if len(cur) != 3:
                raise ParseError(f"clause-arity error: clause has {len(cur)} literals, expected 3", pos)
            clauses.append(tuple(cur))
            cur = []
            continue
        if abs(lit) > m:
            raise ParseError(f"variable {abs(lit)} exceeds declared count {m}", pos)
        cur.append((abs(lit), 1 if lit > 0 else 0))
    if cur:
        raise ParseError("last clause is not terminated by 0")
    if len(clauses) != k:
        raise ParseError(f"header declares {k} clauses, found {len(clauses)}")
    return CnfFormula(m, tuple(clauses))


def random_cnf(num_vars: int, num_clauses: int, rng: np.random.Generator) -> CnfFormula:
    """Clauses with independent uniform variables (repeats allowed) and signs."""
    vs = rng.integers(1, num_vars + 1, size=(num_clauses, 3))
    bs = rng.integers(0, 2, size=(num_clauses, 3))
    return CnfFormula(num_vars, tuple(tuple(zip(v.tolist(), b.tolist())) for v, b in zip(vs, bs)))


def flat_index(j: int, s: int, c1: int, c2: int) -> int:
    """``(j, s, c1, c2) -> 12(j-1) + 4(s-1) + 2 c1 + c2 + 1`` for ``j, s`` 1-based."""
    return 12 * (j - 1) + 4 * (s - 1) + 2 * c1 + c2 + 1


def _slot(j: int, s: int, r: int) -> pr.PairingStructure:
    return pr.product(
        pr.base(flat_index(j, s, 0, 0), flat_index(j, s, 1, r)),
        pr.base(flat_index(j, s, 0, 1), flat_index(j, s, 1, 1 - r)),
    )


@dataclass(frozen=True)
class ReductionOutput:
    T: pr.PairingStructure
    U: pr.PairingStructure
    index_map: dict
    occurring_vars: tuple
    free_multiplier: int

    def to_dict(self) -> dict:
        return {
            "T": pr.serialize_structure(self.T),
            "U": pr.serialize_structure(self.U),
            "index_map": [[*key, idx] for key, idx in sorted(self.index_map.items(), key=lambda kv: kv[1])],
            "occurring_vars": list(self.occurring_vars),
            "free_multiplier": self.free_multiplier,
        }


def build_reduction(phi: CnfFormula) -> ReductionOutput:
    k = phi.num_clauses
    if k == 0:
        raise ValueError("formula has no clauses")
    index_map = {
        (j, s, c1, c2): flat_index(j, s, c1, c2)
        for j in range(1, k + 1) for s in (1, 2, 3) for c1 in (0, 1) for c2 in (0, 1)
    }
    occ = {}
    for j, clause in enumerate(phi.clauses, start=1):
        for s, (v, _) in enumerate(clause, start=1):
            occ.setdefault(v, []).append((j, s))
    variables = sorted(occ)

    # branch x_a = 1 first, then x_a = 0
    T_parts = [pr.union(*(pr.product(*(_slot(j, s, r) for j, s in occ[a])) for r in (1, 0))) for a in variables]
    T = pr.product(*T_parts)

    U_parts = []
    for j, clause in enumerate(phi.clauses, start=1):
        branches = [
            pr.product(*(_slot(j, s, r[s - 1]) for s in (1, 2, 3)))
            for r in itertools.product((0, 1), repeat=3)
            if any(r[s] == clause[s][1] for s in range(3))
        ]
        U_parts.append(pr.union(*branches))
    U = pr.product(*U_parts)
    return ReductionOutput(T, U, index_map, tuple(variables), 2 ** (phi.num_vars - len(variables)))


def decode_pairing(p: pr.Pairing, out: ReductionOutput, phi: CnfFormula) -> dict:
    """Assignment of the occurring variables encoded by a pairing of ``S(T)``.

    Raises ``ValueError`` if the slots of one variable disagree.
    """
    partner = p.partner_map()
    assignment = {}
    for j, clause in enumerate(phi.clauses, start=1):
        for s, (v, _) in enumerate(clause, start=1):
            q = partner[flat_index(j, s, 0, 0)]
            if q not in (flat_index(j, s, 1, 0), flat_index(j, s, 1, 1)):
                raise ValueError(f"index {(j, s, 0, 0)} is not paired inside its slot")
            r = 1 if q == flat_index(j, s, 1, 1) else 0
            if assignment.setdefault(v, r) != r:
                raise ValueError(f"slots of variable {v} encode different values")
    return assignment


def _count(phi: CnfFormula, variables) -> int:
    if len(variables) > BRUTE_MAX_VARS:
        raise CapacityError(f"brute-force model counting limited to {BRUTE_MAX_VARS} variables")
    total = 0
    for bits in itertools.product((0, 1), repeat=len(variables)):
        if phi.satisfied_by(dict(zip(variables, bits))):
            total += 1
    return total


def sat_count_bruteforce(phi: CnfFormula) -> int:
    """Number of satisfying assignments over all ``num_vars`` declared variables."""
    if phi.num_vars > BRUTE_MAX_VARS:
        raise CapacityError(f"brute-force model counting limited to {BRUTE_MAX_VARS} variables")
    occ = phi.occurring_vars
    return _count(phi, occ) * 2 ** (phi.num_vars - len(occ))


def sat_count_occurring(phi: CnfFormula) -> int:
    """Satisfying assignments of the variables that appear in some clause."""
    return _count(phi, phi.occurring_vars)


def verify_reduction(phi: CnfFormula, cap: int = pr.DEFAULT_CAP) -> dict:
    out = build_reduction(phi)
    inter = pr.intersection_count(out.T, out.U, cap)
    count = sat_count_occurring(phi)
    return {
        "intersection": inter,
        "sat_count_occurring": count,
        "sat_count": count * out.free_multiplier,
        "free_multiplier": out.free_multiplier,
        "num_pairings_T": out.T.num_pairings,
        "num_pairings_U": out.U.num_pairings,
        "match": inter == count,
    }
