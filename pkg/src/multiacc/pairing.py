"""Pairings and pairing structures.

A pairing structure is a binary tree whose leaves are single pairs
``Base(i, j)`` and whose inner nodes are either a ``Union`` of two
structures over the same index set (denoting disjoint sets of pairings) or
a ``Product`` of two structures over disjoint index sets.  The set of
pairings a structure denotes can be exponentially large; everything here
except enumeration runs in time linear in the size of the tree.

Indices are positive integers.  Counts are Python ints (arbitrary
precision) so that structures with astronomically many pairings are fine.

Besides the scalar operations there are batched versions working on
"partner arrays": an ``(B, W)`` integer array whose row ``b`` encodes a
pairing by storing, at column ``k``, the index paired with ``k``.  These
are what the adaptive merge uses in its sampling loop.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .errors import CapacityError, ParseError, StructureError

DEFAULT_CAP = 4096

_INT64_SAFE = 1 << 62


# ---------------------------------------------------------------------------
# Pairings


@dataclass(frozen=True, order=True)
class Pairing:
    """A perfect pairing of a finite index set, stored canonically.

    ``pairs`` holds ``(lo, hi)`` tuples with ``lo < hi``, sorted by ``lo``;
    two pairings are equal exactly when they are the same set of pairs.
    """

    pairs: tuple

    def __post_init__(self):
        canon = tuple(sorted(tuple(sorted((int(a), int(b)))) for a, b in self.pairs))
        seen = set()
        for a, b in canon:
            if a == b:
                raise StructureError(f"pair ({a}, {b}) pairs an index with itself")
            if a < 1:
                raise StructureError(f"indices must be positive, got {a}")
            if a in seen or b in seen:
                raise StructureError(f"index repeated in pairing {canon}")
            seen.update((a, b))
        object.__setattr__(self, "pairs", canon)

    @classmethod
    def of(cls, pairs: Iterable[Sequence[int]]) -> "Pairing":
        return cls(tuple(tuple(p) for p in pairs))

    @cached_property
    def index_set(self) -> tuple:
        return tuple(sorted(i for pair in self.pairs for i in pair))

    def partner_map(self) -> dict:
        out = {}
        for a, b in self.pairs:
            out[a] = b
            out[b] = a
        return out

    def to_partner_row(self, width: int) -> np.ndarray:
        row = np.zeros(width, dtype=np.int32)
        for a, b in self.pairs:
            row[a] = b
            row[b] = a
        return row

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def __str__(self):
        return "{" + ", ".join(f"{{{a},{b}}}" for a, b in self.pairs) + "}"


def split(p: Pairing, index_set: Iterable[int]) -> Optional[Pairing]:
    """Restrict ``p`` to ``index_set``.

    Returns ``None`` when some pair of ``p`` has exactly one end inside the
    set, i.e. ``p`` does not pair the set up among itself.
    """
    keep = set(index_set)
    sub = []
    for a, b in p.pairs:
        inside = (a in keep) + (b in keep)
        if inside == 1:
            return None
        if inside == 2:
            sub.append((a, b))
    return Pairing(tuple(sub))


def all_pairings(n: int) -> list:
    """All ``(n-1)!!`` pairings of ``{1, ..., n}`` in canonical order.

    Odd ``n`` has no pairings and yields an empty list.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n % 2:
        return []
    return sorted(Pairing(tuple(p)) for p in _pairings_of(list(range(1, n + 1))))


def _pairings_of(items: list) -> Iterator[list]:
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for k, other in enumerate(rest):
        for tail in _pairings_of(rest[:k] + rest[k + 1 :]):
            yield [(first, other)] + tail


# ---------------------------------------------------------------------------
# Structures


class PairingStructure:
    """Common interface of ``Base``, ``Union`` and ``Product`` nodes.

    Every node carries its sorted ``index_set``, exact ``num_pairings`` and
    ``rsize``, computed once at construction from the children.
    """

    index_set: tuple
    num_pairings: int
    rsize: int

    @cached_property
    def _index_array(self) -> np.ndarray:
        return np.asarray(self.index_set, dtype=np.intp)

    @property
    def max_index(self) -> int:
        return self.index_set[-1]

    def children(self) -> tuple:
        return ()

    def __str__(self):
        return serialize_structure(self)


@dataclass(frozen=True)
class Base(PairingStructure):
    i: int
    j: int
    index_set: tuple = field(init=False, repr=False, compare=False)
    num_pairings: int = field(init=False, repr=False, compare=False)
    rsize: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        i, j = int(self.i), int(self.j)
        if i == j:
            raise StructureError(f"base pair needs two distinct indices, got ({i}, {j})")
        if min(i, j) < 1:
            raise StructureError(f"indices must be positive, got ({i}, {j})")
        lo, hi = min(i, j), max(i, j)
        object.__setattr__(self, "i", lo)
        object.__setattr__(self, "j", hi)
        object.__setattr__(self, "index_set", (lo, hi))
        object.__setattr__(self, "num_pairings", 1)
        object.__setattr__(self, "rsize", 1)


@dataclass(frozen=True)
class Union(PairingStructure):
    """Union of two structures over the same index set.

    Disjointness of the two pairing sets is not checked here (it is not
    cheap in general); see :func:`validate_structure`.
    """

    left: PairingStructure
    right: PairingStructure
    index_set: tuple = field(init=False, repr=False, compare=False)
    num_pairings: int = field(init=False, repr=False, compare=False)
    rsize: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.left.index_set != self.right.index_set:
            raise StructureError(
                "union children must share an index set: "
                f"{self.left.index_set} vs {self.right.index_set}"
            )
        object.__setattr__(self, "index_set", self.left.index_set)
        object.__setattr__(self, "num_pairings", self.left.num_pairings + self.right.num_pairings)
        object.__setattr__(self, "rsize", self.left.rsize + self.right.rsize + 1)

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class Product(PairingStructure):
    left: PairingStructure
    right: PairingStructure
    index_set: tuple = field(init=False, repr=False, compare=False)
    num_pairings: int = field(init=False, repr=False, compare=False)
    rsize: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        overlap = set(self.left.index_set) & set(self.right.index_set)
        if overlap:
            raise StructureError(
                f"product children must have disjoint index sets; shared: {sorted(overlap)}"
            )
        object.__setattr__(
            self, "index_set", tuple(sorted(self.left.index_set + self.right.index_set))
        )
        object.__setattr__(self, "num_pairings", self.left.num_pairings * self.right.num_pairings)
        object.__setattr__(self, "rsize", self.left.rsize + self.right.rsize + 1)

    @cached_property
    def _left_mask(self) -> np.ndarray:
        mask = np.zeros(self.max_index + 1, dtype=bool)
        mask[self.left._index_array] = True
        return mask

    def children(self):
        return (self.left, self.right)




def base(i: int, j: int) -> Base:
    return Base(i, j)


def union(*parts: PairingStructure) -> PairingStructure:
    """Left-associated union ``((p0 ∪ p1) ∪ p2) ∪ ...``."""
    if not parts:
        raise StructureError("union of zero structures")
    out = parts[0]
    for nxt in parts[1:]:
        out = Union(out, nxt)
    return out


def product(*parts: PairingStructure) -> PairingStructure:
    """Left-associated product ``((p0 ⊗ p1) ⊗ p2) ⊗ ...``."""
    if not parts:
        raise StructureError("product of zero structures")
    out = parts[0]
    for nxt in parts[1:]:
        out = Product(out, nxt)
    return out


def from_pairing(p: Pairing) -> PairingStructure:
    """The singleton structure ``{p}`` as a product of bases."""
    return product(*(Base(a, b) for a, b in p.pairs))


def full_structure(indices: Iterable[int]) -> PairingStructure:
    """A structure denoting every pairing of ``indices`` (even size).

    Built by pairing the smallest index with each other index in turn, so
    its size grows like ``(n-1)!!``; only sensible for small sets.
    """
    idx = sorted(indices)
    if not idx or len(idx) % 2:
        raise StructureError("full structure needs a nonempty even index set")
    if len(idx) == 2:
        return Base(idx[0], idx[1])
    first, rest = idx[0], idx[1:]
    branches = []
    for k, other in enumerate(rest):
        branches.append(Product(Base(first, other), full_structure(rest[:k] + rest[k + 1 :])))
    return union(*branches)


def block_structure(n: int, block: int = 4) -> PairingStructure:
    """Pairings that pair each consecutive block of ``block`` indices internally.

    With ``block=4`` this has ``3**(n/4)`` pairings.
    """
    if n % block or block % 2:
        raise StructureError("n must be a multiple of an even block size")
    return product(*(full_structure(range(s + 1, s + block + 1)) for s in range(0, n, block)))


def random_structure(indices: Iterable[int], rng: np.random.Generator, p_product: float = 0.4) -> PairingStructure:
    """A random valid structure over ``indices`` (even count).

    Unions branch on the partner of the smallest index, so their children
    are disjoint by construction.
    """
    idx = sorted(indices)
    if not idx or len(idx) % 2:
        raise StructureError("need a nonempty even index set")
    if len(idx) == 2:
        return base(*idx)
    if rng.random() < p_product:
        k = 2 * int(rng.integers(1, len(idx) // 2))
        left = sorted(rng.choice(idx, size=k, replace=False).tolist())
        right = [i for i in idx if i not in left]
        return product(random_structure(left, rng, p_product), random_structure(right, rng, p_product))
    first, rest = idx[0], idx[1:]
    partners = rng.choice(rest, size=int(rng.integers(1, min(3, len(rest)) + 1)), replace=False)
    branches = [
        product(base(first, int(j)), random_structure([i for i in rest if i != j], rng, p_product))
        for j in sorted(partners.tolist())
    ]
    return union(*branches)


# ---------------------------------------------------------------------------
# Counting, sampling, membership


def num_pairings(T: PairingStructure) -> int:
    return T.num_pairings


def rsize(T: PairingStructure) -> int:
    return T.rsize


def _randbelow(rng: np.random.Generator, n: int) -> int:
    """Exact uniform integer in ``[0, n)`` for arbitrary ``n``."""
    if n < _INT64_SAFE:
        return int(rng.integers(0, n))
    nbits = n.bit_length()
    nbytes = (nbits + 7) // 8
    excess = 8 * nbytes - nbits
    while True:
        u = int.from_bytes(rng.bytes(nbytes), "little") >> excess
        if u < n:
            return u


def _randbelow_many(rng: np.random.Generator, n: int, size: int) -> np.ndarray:
    """``size`` exact uniform draws in ``[0, n)``; object array when ``n`` is huge."""
    if n < _INT64_SAFE:
        return rng.integers(0, n, size=size, dtype=np.int64)
    return np.array([_randbelow(rng, n) for _ in range(size)], dtype=object)


def sample(T: PairingStructure, rng: np.random.Generator) -> Pairing:
    """A uniformly random element of ``S(T)``.

    At a union the left branch is taken when a uniform integer below
    ``|S(T)|`` falls below ``|S(left)|``, so no floating point is involved.
    """
    pairs = []
    stack = [T]
    while stack:
        node = stack.pop()
        if isinstance(node, Base):
            pairs.append((node.i, node.j))
        elif isinstance(node, Product):
            stack.append(node.right)
            stack.append(node.left)
        else:
            u = _randbelow(rng, node.num_pairings)
            stack.append(node.left if u < node.left.num_pairings else node.right)
    return Pairing(tuple(pairs))


def contains(T: PairingStructure, p: Pairing) -> bool:
    """Whether ``p`` belongs to ``S(T)``; ``p`` must pair exactly T's index set."""
    if p.index_set != T.index_set:
        raise StructureError(
            f"pairing index set {p.index_set} does not match structure index set {T.index_set}"
        )
    return _contains(T, p)


def _contains(T, p):
    if isinstance(T, Base):
        return True
    if isinstance(T, Product):
        p1 = split(p, T.left.index_set)
        if p1 is None:
            return False
        taken = set(p1.pairs)
        rest = Pairing(tuple(q for q in p.pairs if q not in taken))
        return _contains(T.left, p1) and _contains(T.right, rest)
    return _contains(T.left, p) or _contains(T.right, p)


def sample_partners(
    T: PairingStructure, size: int, rng: np.random.Generator, width: Optional[int] = None
) -> np.ndarray:
    """Draw ``size`` uniform pairings of ``S(T)`` as a partner array.

    Row ``b`` satisfies ``out[b, k] == l`` iff ``{k, l}`` is a pair of the
    ``b``-th sample.  Columns of indices outside ``T`` are left at zero.
    """
    width = T.max_index + 1 if width is None else width
    out = np.zeros((size, width), dtype=_partner_dtype(width))
    _fill_partners(T, out, np.arange(size), rng)
    return out


def _partner_dtype(width: int):
    # narrow rows make the gather-heavy containment test much faster
    for dt in (np.int8, np.int16, np.int32):
        if width <= np.iinfo(dt).max:
            return dt
    return np.int64


def _fill_partners(T, out, rows, rng):
    if rows.size == 0:
        return
    if isinstance(T, Base):
        out[rows, T.i] = T.j
        out[rows, T.j] = T.i
    elif isinstance(T, Product):
        _fill_partners(T.left, out, rows, rng)
        _fill_partners(T.right, out, rows, rng)
    else:
        u = _randbelow_many(rng, T.num_pairings, rows.size)
        go_left = np.asarray(u < T.left.num_pairings, dtype=bool)
        _fill_partners(T.left, out, rows[go_left], rng)
        _fill_partners(T.right, out, rows[~go_left], rng)


def contains_partners(T: PairingStructure, partners: np.ndarray) -> np.ndarray:
    """Vectorised :func:`contains` over the rows of a partner array.

    Each row must pair T's index set among itself (as rows drawn from
    another structure over the same index set do).
    """
    return _contains_rows(T, partners)


def _contains_rows(T, partners):
    if isinstance(T, Base):
        return partners[:, T.i] == T.j
    if isinstance(T, Union):
        return _contains_rows(T.left, partners) | _contains_rows(T.right, partners)
    vals = partners[:, T.left._index_array]
    ok = ((vals <= T.max_index) & T._left_mask[np.minimum(vals, T.max_index)]).all(axis=1)
    if not ok.any():
        return ok
    return ok & _contains_rows(T.left, partners) & _contains_rows(T.right, partners)


def partners_to_pairings(partners: np.ndarray, index_set: Sequence[int]) -> list:
    out = []
    for row in partners:
        out.append(Pairing(tuple((k, int(row[k])) for k in index_set if k < row[k])))
    return out


def pairings_to_partners(pairings: Sequence[Pairing], width: int) -> np.ndarray:
    arr = np.zeros((len(pairings), width), dtype=_partner_dtype(width))
    for b, p in enumerate(pairings):
        for a, c in p.pairs:
            arr[b, a] = c
            arr[b, c] = a
    return arr


# ---------------------------------------------------------------------------
# Enumeration and intersections


def enumerate_pairings(T: PairingStructure, cap: int = DEFAULT_CAP) -> list:
    """Every element of ``S(T)`` in canonical order.

    Raises :class:`CapacityError` when ``|S(T)| > cap``.
    """
    if T.num_pairings > cap:
        raise CapacityError(f"structure has {T.num_pairings} pairings, more than cap={cap}")
    return sorted(Pairing(p) for p in _enum(T))


def _enum(T) -> list:
    if isinstance(T, Base):
        return [((T.i, T.j),)]
    if isinstance(T, Union):
        return _enum(T.left) + _enum(T.right)
    lefts, rights = _enum(T.left), _enum(T.right)
    return [tuple(sorted(a + b)) for a in lefts for b in rights]


def intersection_count(T: PairingStructure, U: PairingStructure, cap: int = DEFAULT_CAP) -> int:
    """``|S(T) ∩ S(U)|`` by enumerating the smaller side.

    Exponential in general: counting intersections of pairing structures
    is #P-hard, so this is a brute-force oracle for small instances.
    """
    if T.index_set != U.index_set:
        raise StructureError("structures must share an index set")
    small, big = (T, U) if T.num_pairings <= U.num_pairings else (U, T)
    if small.num_pairings > cap:
        raise CapacityError(
            f"both structures exceed cap={cap} ({T.num_pairings} and {U.num_pairings} pairings)"
        )
    members = enumerate_pairings(small, cap)
    partners = pairings_to_partners(members, small.max_index + 1)
    return int(contains_partners(big, partners).sum())


# ---------------------------------------------------------------------------
# Validation


@dataclass
class ValidationReport:
    index_set: tuple
    num_pairings: int
    rsize: int
    checked_unions: int = 0
    trusted_unions: int = 0

    @property
    def trusted(self) -> bool:
        """True when some union's disjointness was assumed rather than verified."""
        return self.trusted_unions > 0

    def to_dict(self) -> dict:
        return {
            "index_set": list(self.index_set),
            "num_pairings": str(self.num_pairings),
            "rsize": self.rsize,
            "checked_unions": self.checked_unions,
            "trusted_unions": self.trusted_unions,
            "trusted": self.trusted,
        }


def validate_structure(T: PairingStructure, cap: int = DEFAULT_CAP) -> ValidationReport:
    """Check union disjointness wherever the smaller child has at most ``cap`` pairings.

    Index-set invariants are already enforced by the node constructors.
    Raises :class:`StructureError` on the first overlapping union found.
    """
    report = ValidationReport(T.index_set, T.num_pairings, T.rsize)
    stack = [T]
    seen = set()
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        if isinstance(node, Union):
            a, b = node.left, node.right
            small, big = (a, b) if a.num_pairings <= b.num_pairings else (b, a)
            if small.num_pairings <= cap:
                members = enumerate_pairings(small, cap)
                hits = contains_partners(big, pairings_to_partners(members, node.max_index + 1))
                if hits.any():
                    shared = members[int(np.argmax(hits))]
                    raise StructureError(f"union children share the pairing {shared}")
                report.checked_unions += 1
            else:
                report.trusted_unions += 1
        stack.extend(node.children())
    return report


# ---------------------------------------------------------------------------
# Evaluation against a covariance matrix


def eval_x(T: PairingStructure, sigma: np.ndarray):
    """``X_T = Σ_{p ∈ S(T)} Π_{{i,j} ∈ p} Σ_ij`` in ``O(rsize(T))`` operations.

    ``sigma`` is an ``(n, n)`` matrix or a stack ``(..., n, n)``; indices
    are 1-based.  Returns a float or an array of the leading shape.
    """
    sigma = np.asarray(sigma, dtype=float)
    n = sigma.shape[-1]
    if T.max_index > n:
        raise IndexError(f"structure uses index {T.max_index} but sigma is {n}x{n}")
    return _eval(T, sigma)


def _eval(T, sigma):
    if isinstance(T, Base):
        return sigma[..., T.i - 1, T.j - 1]
    if isinstance(T, Union):
        return _eval(T.left, sigma) + _eval(T.right, sigma)
    return _eval(T.left, sigma) * _eval(T.right, sigma)


# ---------------------------------------------------------------------------
# Text format


_TOKEN = re.compile(r"\(|\)|[^\s()]+")


def parse_structure(text: str, cap: int = DEFAULT_CAP) -> PairingStructure:
    """Parse ``(base i j)`` / ``(union S S ...)`` / ``(prod S S ...)`` text.

    Unions and products with more than two children nest to the left.
    The result is validated with :func:`validate_structure`.
    """
    tokens = [(m.group(), m.start()) for m in _TOKEN.finditer(text)]
    if not tokens:
        raise ParseError("empty structure text", 0)
    T, k = _parse(tokens, 0, len(text))
    if k != len(tokens):
        raise ParseError("trailing input after structure", tokens[k][1])
    validate_structure(T, cap)
    return T


def _parse(tokens, k, end):
    if k + 1 >= len(tokens):
        raise ParseError("unexpected end of input", end)
    tok, pos = tokens[k]
    if tok != "(":
        raise ParseError(f"expected '(' but found {tok!r}", pos)
    head, hpos = tokens[k + 1]
    k += 2
    if head == "base":
        args = []
        while k < len(tokens) and tokens[k][0] not in "()":
            tok, p = tokens[k]
            if not tok.isdigit():
                raise ParseError(f"expected a positive integer index, found {tok!r}", p)
            args.append(int(tok))
            k += 1
        if len(args) != 2:
            raise ParseError(f"base takes exactly two indices, got {len(args)}", hpos)
        build = lambda: Base(*args)
    elif head in ("union", "prod"):
        kids = []
        while k < len(tokens) and tokens[k][0] == "(":
            child, k = _parse(tokens, k, end)
            kids.append(child)
        if len(kids) < 2:
            raise ParseError(f"{head} needs at least two children", hpos)
        build = (lambda: union(*kids)) if head == "union" else (lambda: product(*kids))
    else:
        raise ParseError(f"unknown node kind {head!r}", hpos)
    if k >= len(tokens):
        raise ParseError("missing ')'", end)
    if tokens[k][0] != ")":
        raise ParseError(f"expected ')' but found {tokens[k][0]!r}", tokens[k][1])
    try:
        node = build()
    except StructureError as exc:
        raise StructureError(f"{exc} (in {head} at position {hpos})") from None
    return node, k + 1


def serialize_structure(T: PairingStructure) -> str:
    """Canonical single-spaced text; inverse of :func:`parse_structure`."""
    parts = []
    _ser(T, parts)
    return "".join(parts)


def _ser(T, parts):
    if isinstance(T, Base):
        parts.append(f"(base {T.i} {T.j})")
        return
    parts.append("(union " if isinstance(T, Union) else "(prod ")
    _ser(T.left, parts)
    parts.append(" ")
    _ser(T.right, parts)
    parts.append(")")
