"""Permanent oracles and closed-form permanent estimators.

The estimators are presumption-of-independence heuristics:

* ``E_row`` pretends the column chosen in each row is independent,
  ``(n!/n^n) Π_i (row sum i)``; ``E_col`` is the column analogue.
* ``E_ms`` pretends every entry of every term is independent,
  ``(n!/n^{2n}) (Σ A)^n``.
* ``E'_ms``, ``E_{row,col}`` and ``E_{row,col,ms}`` are OLS merges of the
  above over ``D`` (i.i.d. standard normal entries).
* ``E_us`` averages over ``n``-subsets of distinct cells.

Over ``D`` every estimator here is a sum of products of linear forms in
the entries, so exact second moments follow from Isserlis' theorem; see
:class:`PermanentMoments`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .accuracy import CONSTANT, ExactMoments, MonteCarloMoments, Predictor, check_accuracy
from .errors import CapacityError, EstimatorUndefined
from .gaussian_moments import double_factorial, haf_enumerate

NAIVE_MAX_N = 10
RYSER_MAX_N = 20
US_BRUTE_MAX_N = 4
RCSU_MAX_TUPLES = 10**7


def _as_matrix(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ValueError(f"expected square matrix (or a stack of them), got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix entries must be finite")
    return A


# ---------------------------------------------------------------------------
# Oracles


@lru_cache(maxsize=None)
def _perm_table(n: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(n))), dtype=np.intp).reshape(-1, n)


def perm_naive(A):
    """``Σ_σ Π_i A_{i,σ(i)}`` over all ``n!`` permutations; works on stacks."""
    A = _as_matrix(A)
    n = A.shape[-1]
    if n > NAIVE_MAX_N:
        raise CapacityError(f"naive permanent limited to n <= {NAIVE_MAX_N}, got {n}")
    if n == 0:
        return 1.0
    perms = _perm_table(n)
    rows = np.arange(n)
    flat = A.reshape(-1, n, n)
    out = np.zeros(flat.shape[0])
    step = max(1, (1 << 21) // n)
    for s in range(0, len(perms), step):
        p = perms[s : s + step]
        out += flat[:, rows, p].prod(axis=-1).sum(axis=-1)
    return out.reshape(A.shape[:-2]) if A.ndim > 2 else float(out[0])


def perm_ryser(A) -> float:
    """Ryser's inclusion-exclusion formula, ``O(2^n n)`` per matrix."""
    A = _as_matrix(A)
    if A.ndim > 2:
        return np.array([perm_ryser(a) for a in A.reshape(-1, *A.shape[-2:])]).reshape(A.shape[:-2])
    n = A.shape[0]
    if n > RYSER_MAX_N:
        raise CapacityError(f"Ryser permanent limited to n <= {RYSER_MAX_N}, got {n}")
    if n == 0:
        return 1.0
    total = 0.0
    weights = 1 << np.arange(n)
    step = 1 << min(n, 16)
    for start in range(1, 1 << n, step):
        masks = np.arange(start, min(start + step, 1 << n))
        bits = ((masks[:, None] & weights) != 0).astype(float)
        sizes = bits.sum(axis=1)
        sign = np.where((n - sizes) % 2 == 0, 1.0, -1.0)
        total += float((sign * (bits @ A.T).prod(axis=1)).sum())
    return total


def perm_bruteforce(A, check: bool = True, rtol: float = 1e-9) -> float:
    """Permanent by the naive sum (``n <= 10``) or Ryser's formula (``n <= 20``).

    With ``check`` and ``n <= 10`` the two are cross-checked.
    """
    A = _as_matrix(A)
    n = A.shape[-1]
    if n > RYSER_MAX_N:
        raise CapacityError(f"permanent limited to n <= {RYSER_MAX_N}, got {n}")
    if n > NAIVE_MAX_N:
        return perm_ryser(A)
    value = perm_naive(A)
    if check:
        other = perm_ryser(A)
        scale = perm_naive(np.abs(A)) or 1.0
        if not np.isclose(value, other, rtol=rtol, atol=rtol * scale):
            raise AssertionError(f"permanent oracles disagree: {value!r} vs {other!r}")
    return value


# ---------------------------------------------------------------------------
# Estimators (all accept a single matrix or a stack)


def _ratio(num: int, den: int) -> float:
    # int / int is correctly rounded even for huge operands
    return num / den


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def e_row(A):
    A = _as_matrix(A)
    n = A.shape[-1]
    return _scalar(_ratio(math.factorial(n), n**n) * A.sum(axis=-1).prod(axis=-1))


def e_col(A):
    A = _as_matrix(A)
    n = A.shape[-1]
    return _scalar(_ratio(math.factorial(n), n**n) * A.sum(axis=-2).prod(axis=-1))


def e_ms(A):
    A = _as_matrix(A)
    n = A.shape[-1]
    return _scalar(_ratio(math.factorial(n), n ** (2 * n)) * A.sum(axis=(-1, -2)) ** n)


def ms_regression_denominator(n: int) -> int:
    """``(2n-1)!! - [n even] (n-1)!!²``, exactly."""
    even = n % 2 == 0
    return double_factorial(2 * n - 1) - (double_factorial(n - 1) ** 2 if even else 0)


def ms_coefficient(n: int) -> float:
    """``b = n! / ((2n-1)!! - [n even](n-1)!!²)``, the regression slope of perm on ``E_ms``."""
    return _ratio(math.factorial(n), ms_regression_denominator(n))


def ms_offset(n: int) -> float:
    """``[n even] n! (n-1)!! / n^n``, the mean of ``E_ms`` over ``D``."""
    if n % 2:
        return 0.0
    return _ratio(math.factorial(n) * double_factorial(n - 1), n**n)


def e_ms_prime(A):
    A = _as_matrix(A)
    n = A.shape[-1]
    return _scalar(ms_coefficient(n) * (np.asarray(e_ms(A)) - ms_offset(n)))


def e_row_col(A):
    A = _as_matrix(A)
    n = A.shape[-1]
    nn, f = n**n, math.factorial(n)
    return _scalar(_ratio(nn, nn + f) * (np.asarray(e_row(A)) + np.asarray(e_col(A))))


def row_col_ms_weights(n: int, literal: bool = False) -> tuple:
    """Weights ``(w_rc, w_ms)`` with ``E_{row,col,ms} = w_rc (E_row + E_col) + w_ms E'_ms``.

    With ``p = n!/n^n``, ``q = 1 - p`` and ``D = 2(1 - p b) - q`` the OLS
    solution is ``w_rc = (1 - p b)/D`` and ``w_ms = -q/D``.  ``literal``
    instead uses ``w_rc = q b / D``, a form that agrees only at ``n = 2``
    (where ``b = 1``) and is kept for comparison.
    """
    b = ms_coefficient(n)
    p = _ratio(math.factorial(n), n**n)
    q = 1.0 - p
    den = 2.0 * (1.0 - p * b) - q
    w_rc = q * b / den if literal else (1.0 - p * b) / den
    return w_rc, -q / den


def e_row_col_ms(A, literal: bool = False):
    A = _as_matrix(A)
    w_rc, w_ms = row_col_ms_weights(A.shape[-1], literal)
    rc = np.asarray(e_row(A)) + np.asarray(e_col(A))
    return _scalar(w_rc * rc + w_ms * np.asarray(e_ms_prime(A)))


def _is_binary(A) -> bool:
    return bool(np.all((A == 0) | (A == 1)))


def e_us(A, method: str = "auto"):
    """Unique sum estimate ``(n!/C(n², n)) Σ_{|S|=n} Π_{(i,j)∈S} A_ij``.

    ``method`` is ``"fast"`` (0-1 input: the sum is ``C(k, n)`` for ``k``
    ones), ``"brute"`` (subset enumeration, ``n <= 4``) or ``"auto"``.
    """
    A = _as_matrix(A)
    n = A.shape[-1]
    if method == "auto":
        method = "fast" if _is_binary(A) else "brute"
    coef_num, coef_den = math.factorial(n), math.comb(n * n, n)
    if method == "fast":
        if not _is_binary(A):
            raise ValueError("fast unique-sum path needs a 0-1 matrix")
        ks = np.rint(A.sum(axis=(-1, -2))).astype(int)
        vals = np.vectorize(lambda k: math.comb(int(k), n) * coef_num / coef_den)(ks)
        return _scalar(np.asarray(vals, dtype=float))
    if method != "brute":
        raise ValueError(f"unknown method {method!r}")
    if n > US_BRUTE_MAX_N:
        raise CapacityError(f"unique-sum enumeration limited to n <= {US_BRUTE_MAX_N}, got {n}")
    subsets = np.array(list(itertools.combinations(range(n * n), n)), dtype=np.intp)
    flat = A.reshape(*A.shape[:-2], n * n)
    total = flat[..., subsets].prod(axis=-1).sum(axis=-1)
    return _scalar(total * _ratio(coef_num, coef_den))


def multiplicative(A, denominator: str = "ms", strict: bool = True):
    """``E_row E_col / E_ms`` (or ``/ E_us``).

    A vanishing denominator raises :class:`EstimatorUndefined` when
    ``strict``; otherwise those entries of a stack come back as NaN.
    """
    A = _as_matrix(A)
    if denominator == "ms":
        den = np.asarray(e_ms(A))
    elif denominator == "us":
        den = np.asarray(e_us(A))
    else:
        raise ValueError(f"denominator must be 'ms' or 'us', got {denominator!r}")
    num = np.asarray(e_row(A)) * np.asarray(e_col(A))
    zero = den == 0
    if np.any(zero) and strict:
        raise EstimatorUndefined(f"E_{denominator} vanishes, multiplicative estimate undefined")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(zero, np.nan, num / np.where(zero, 1.0, den))
    return _scalar(out)


ESTIMATORS = {
    "e_row": e_row,
    "e_col": e_col,
    "e_ms": e_ms,
    "e_ms_prime": e_ms_prime,
    "e_row_col": e_row_col,
    "e_row_col_ms": e_row_col_ms,
    "e_us": e_us,
    "multiplicative": multiplicative,
}


def sample_matrix(n: int, rng: np.random.Generator) -> np.ndarray:
    """One draw from ``D``: i.i.d. standard normal entries."""
    return rng.standard_normal((n, n))


def sample_matrices(n: int, size: int, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal((size, n, n))


def matrix_sampler(n: int):
    return lambda rng, size: sample_matrices(n, size, rng)


# ---------------------------------------------------------------------------
# R/C/S/U moments over uniform index tuples


@dataclass
class RCSUMoments:
    """Moments of ``S``, ``R``, ``C``, ``U`` for tuples ``(I_k, J_k)`` uniform on ``[n]²``.

    ``S = Π A_{I_k J_k}``; ``R``, ``C``, ``U`` additionally require the row
    indices, the column indices, or the cells to be distinct.
    """

    n: int
    mode: str
    samples: int
    ES: float
    ER: float
    EC: float
    ERC: float
    EU: float
    ES2: float
    ERS: float
    ER2: float
    ECS: float
    EC2: float
    var_S: float
    cov_RS: float
    cov_CS: float
    std_errors: dict

    @property
    def degenerate(self) -> bool:
        """``Var(S) = 0``, e.g. for the all-ones matrix; the regression step is undefined."""
        return self.var_S <= 1e-15 * max(self.ES2, 1e-300)

    @property
    def regression_estimate(self) -> float:
        """``E[R]E[C] + Cov(R,S) Cov(C,S) / Var(S)``: the estimate of ``E[RC]``."""
        if self.degenerate:
            return float("nan")
        return self.ER * self.EC + self.cov_RS * self.cov_CS / self.var_S

    def to_dict(self) -> dict:
        keys = ("n", "mode", "samples", "ES", "ER", "EC", "ERC", "EU", "ES2", "ERS", "ER2",
                "ECS", "EC2", "var_S", "cov_RS", "cov_CS")
        out = {k: getattr(self, k) for k in keys}
        out["degenerate"] = self.degenerate
        out["regression_estimate"] = None if self.degenerate else self.regression_estimate
        out["std_errors"] = dict(self.std_errors)
        return out


def _distinct(x: np.ndarray) -> np.ndarray:
    s = np.sort(x, axis=1)
    return np.all(s[:, 1:] != s[:, :-1], axis=1)


def _rcsu_values(flat: np.ndarray, n: int, rows: np.ndarray, cols: np.ndarray):
    cells = rows * n + cols
    S = flat[cells].prod(axis=1)
    R = S * _distinct(rows)
    C = S * _distinct(cols)
    U = S * _distinct(cells)
    return S, R, C, U


def rcsu_moments(A, mode: str = "exact", samples: int = 10**5, rng=None, chunk: int = 1 << 18) -> RCSUMoments:
    """Moments of ``S, R, C, U`` for a 0-1 matrix.

    ``mode="exact"`` enumerates all ``n^{2n}`` tuples (at most 10⁷);
    ``mode="mc"`` draws ``samples`` uniform tuples from ``rng``.
    """
    A = _as_matrix(A)
    if A.ndim != 2:
        raise ValueError("rcsu_moments takes a single matrix")
    if not _is_binary(A) or not A.any():
        raise ValueError("rcsu_moments needs a 0-1 matrix that is not all zero")
    n = A.shape[0]
    flat = A.reshape(-1)
    acc = np.zeros(10)
    sq = np.zeros(10)
    if mode == "exact":
        total = n ** (2 * n)
        if total > RCSU_MAX_TUPLES:
            raise CapacityError(f"n^(2n) = {total} tuples exceeds {RCSU_MAX_TUPLES}")
        powers = n ** np.arange(2 * n - 1, -1, -1)
        batches = ((np.arange(s, min(s + chunk, total))[:, None] // powers) % n for s in range(0, total, chunk))
        count = total
    elif mode == "mc":
        if rng is None:
            raise ValueError("monte-carlo mode needs an rng")
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        count = int(samples)
        batches = (rng.integers(0, n, size=(min(chunk, count - s), 2 * n)) for s in range(0, count, chunk))
    else:
        raise ValueError(f"mode must be 'exact' or 'mc', got {mode!r}")
    for digits in batches:
        S, R, C, U = _rcsu_values(flat, n, digits[:, 0::2], digits[:, 1::2])
        cols = np.stack([S, R, C, R * C, U, S * S, R * S, R * R, C * S, C * C])
        acc += cols.sum(axis=1)
        sq += (cols * cols).sum(axis=1)
    mean = acc / count
    ES, ER, EC, ERC, EU, ES2, ERS, ER2, ECS, EC2 = mean
    names = ("ES", "ER", "EC", "ERC", "EU")
    if mode == "mc":
        var = np.maximum(sq / count - mean**2, 0.0) * count / max(count - 1, 1)
        se = {k: float(np.sqrt(var[i] / count)) for i, k in enumerate(names)}
    else:
        se = {k: 0.0 for k in names}
    return RCSUMoments(
        n=n, mode=mode, samples=count,
        ES=float(ES), ER=float(ER), EC=float(EC), ERC=float(ERC), EU=float(EU),
        ES2=float(ES2), ERS=float(ERS), ER2=float(ER2), ECS=float(ECS), EC2=float(EC2),
        var_S=float(ES2 - ES * ES), cov_RS=float(ERS - ER * ES), cov_CS=float(ECS - EC * ES),
        std_errors=se,
    )


def rcsu_identities(A) -> dict:
    """Closed-form values the exact ``R/C/S/U`` moments should take, keyed like :class:`RCSUMoments`."""
    A = _as_matrix(A)
    n = A.shape[0]
    f = math.factorial(n)
    out = {
        "ES": e_ms(A) / f,
        "ER": e_row(A) / n**n,
        "EC": e_col(A) / n**n,
        "ERC": _ratio(f, n ** (2 * n)) * perm_bruteforce(A),
        "EU": e_us(A) * _ratio(math.comb(n * n, n), n ** (2 * n)),
    }
    den = e_ms(A)
    out["regression_estimate"] = _ratio(f, n ** (2 * n)) * e_row(A) * e_col(A) / den if den else float("nan")
    return out


# ---------------------------------------------------------------------------
# Exact second moments over D via Isserlis


def _cell(n, i, j):
    v = np.zeros(n * n)
    v[i * n + j] = 1.0
    return v


def _row_form(n, i):
    v = np.zeros((n, n))
    v[i] = 1.0
    return v.reshape(-1)


def _col_form(n, j):
    v = np.zeros((n, n))
    v[:, j] = 1.0
    return v.reshape(-1)


@lru_cache(maxsize=None)
def _poly(name: str, n: int) -> tuple:
    """``((coef, forms), ...)``: the estimator as ``Σ coef Π_k <forms[k], A>``."""
    f = math.factorial(n)
    empty = np.zeros((0, n * n))
    if name == "1":
        return ((1.0, empty),)
    if name == "perm":
        return tuple((1.0, np.array([_cell(n, i, p[i]) for i in range(n)])) for p in _perm_table(n))
    if name == "e_row":
        return ((_ratio(f, n**n), np.array([_row_form(n, i) for i in range(n)])),)
    if name == "e_col":
        return ((_ratio(f, n**n), np.array([_col_form(n, j) for j in range(n)])),)
    if name == "e_ms":
        return ((_ratio(f, n ** (2 * n)), np.ones((n, n * n))),)
    b = ms_coefficient(n)
    if name == "e_ms_prime":
        return _scale(_poly("e_ms", n), b) + ((-b * ms_offset(n), empty),)
    if name == "e_row_col":
        w = _ratio(n**n, n**n + f)
        return _scale(_poly("e_row", n), w) + _scale(_poly("e_col", n), w)
    if name == "e_row_col_ms":
        w_rc, w_ms = row_col_ms_weights(n)
        return _scale(_poly("e_row", n) + _poly("e_col", n), w_rc) + _scale(_poly("e_ms_prime", n), w_ms)
    raise KeyError(name)


def _scale(terms, c):
    return tuple((c * a, F) for a, F in terms)


def _gaussian_poly_inner(p, q) -> float:
    """``E[P(A) Q(A)]`` for i.i.d. standard normal entries."""
    groups = {}
    for ca, Fa in p:
        for cb, Fb in q:
            F = np.vstack([Fa, Fb])
            groups.setdefault(F.shape[0], []).append((ca * cb, F))
    total = 0.0
    for d, items in groups.items():
        if d % 2:
            continue
        coefs = np.array([c for c, _ in items])
        if d == 0:
            total += coefs.sum()
            continue
        stack = np.array([F @ F.T for _, F in items])
        total += float(coefs @ haf_enumerate(stack))
    return total


PERMANENT_FAMILY = ("1", "perm", "e_row", "e_col", "e_ms", "e_ms_prime", "e_row_col", "e_row_col_ms")
EXACT_MAX_N = 5


def permanent_predictor(name: str, n: int) -> Predictor:
    """Predictor for a member of the permanent family at size ``n``.

    Names: ``1``, ``perm``, ``e_row``, ``e_col``, ``e_ms``, ``e_ms_prime``,
    ``e_row_col``, ``e_row_col_ms``.
    """
    if name == "1":
        return CONSTANT
    fn = perm_naive if name == "perm" else ESTIMATORS.get(name)
    if fn is None or name not in PERMANENT_FAMILY:
        raise KeyError(f"unknown permanent-family predictor {name!r}")
    return Predictor(name, lambda A, fn=fn: np.asarray(fn(A), dtype=float), ("permanent", name, n))


class PermanentMoments(ExactMoments):
    """Exact ``E_D[P Q]`` for members of the permanent family (``n <= 5``)."""

    def __init__(self, n: int):
        if n > EXACT_MAX_N:
            raise CapacityError(f"exact permanent moments limited to n <= {EXACT_MAX_N}")
        self.n = n
        super().__init__(self._gram)

    def _gram(self, a: Predictor, b: Predictor) -> float:
        return _gaussian_poly_inner(_poly(self._name(a), self.n), _poly(self._name(b), self.n))

    def _name(self, p: Predictor) -> str:
        if p is CONSTANT:
            return "1"
        if p.meta and p.meta[0] == "permanent" and p.meta[2] == self.n:
            return p.meta[1]
        raise ValueError(f"no exact permanent moments for predictor {p.name!r} at n={self.n}")


def binary_sampler(n: int, denominator: str = "ms"):
    """Uniform 0-1 matrices conditioned on the multiplicative estimate being defined."""

    def draw(rng, size):
        out = np.empty((0, n, n))
        while out.shape[0] < size:
            cand = rng.integers(0, 2, size=(2 * size, n, n)).astype(float)
            den = e_ms(cand) if denominator == "ms" else e_us(cand, "fast")
            out = np.concatenate([out, cand[np.asarray(den) != 0]])
        return out[:size]

    return draw


def multiplicative_self_accuracy(n: int, denominator: str = "us", samples: int = 10**5, seed: int = 0) -> list:
    """Monte-Carlo ``1``- and self-accuracy reports of the multiplicative estimate.

    The distribution is uniform 0-1 ``n × n`` matrices, conditioned on the
    denominator being nonzero.  Returned for inspection, not asserted.
    """
    fn = Predictor(f"multiplicative_{denominator}", lambda A: multiplicative(A, denominator, strict=False))
    perm = Predictor("perm", perm_naive)
    mom = MonteCarloMoments(binary_sampler(n, denominator), samples, seed)
    return [check_accuracy(fn, X, perm, mom) for X in (CONSTANT, fn)]
