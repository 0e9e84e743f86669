"""Hafnian oracles and the covariance distribution used for hafnian estimation.

``E[Z_1 ... Z_n]`` for ``Z ~ N(0, Σ)`` equals ``haf(Σ)``, the sum over all
perfect pairings of products of paired entries.  Two independent brute
force evaluations are provided (pairing enumeration and first-row
expansion) plus a Monte-Carlo estimate of the Gaussian product moment.

The distribution ``D_n`` draws every off-diagonal entry i.i.d. ``N(0, 1)``;
the diagonal is set to ``1 + Σ_{j≠i} |Σ_ij|`` which makes the matrix
strictly diagonally dominant (so positive definite) without affecting the
hafnian, which never touches diagonal entries.
"""

from __future__ import annotations

from functools import lru_cache
from math import prod

import numpy as np

from . import pairing as pr
from .accuracy import CONSTANT, ExactMoments, Predictor
from .errors import CapacityError, StructureError

MAX_HAFNIAN_N = 14


def double_factorial(k: int) -> int:
    """``k!!`` for ``k >= -1`` (with ``(-1)!! = 0!! = 1``)."""
    return prod(range(k, 0, -2)) if k > 0 else 1


@lru_cache(maxsize=None)
def _pairing_index_array(n: int) -> np.ndarray:
    """All pairings of ``{0..n-1}`` as an ``(P, n/2, 2)`` array."""
    pairs = [[(a - 1, b - 1) for a, b in p.pairs] for p in pr.all_pairings(n)]
    return np.asarray(pairs, dtype=np.intp).reshape(len(pairs), n // 2, 2)


def haf_enumerate(sigma: np.ndarray, max_n: int = MAX_HAFNIAN_N):
    """Hafnian by summing over every pairing.  Accepts a stack ``(..., n, n)``."""
    sigma = np.asarray(sigma, dtype=float)
    n = sigma.shape[-1]
    lead = sigma.shape[:-2]
    if n % 2:
        return np.zeros(lead) if lead else 0.0
    if n > max_n:
        raise CapacityError(f"hafnian enumeration limited to n <= {max_n}, got {n}")
    if n == 0:
        return np.ones(lead) if lead else 1.0
    idx = _pairing_index_array(n)
    flat = sigma.reshape(-1, n, n)
    out = np.empty(flat.shape[0])
    step = max(1, (1 << 22) // idx[..., 0].size)
    for s in range(0, flat.shape[0], step):
        chunk = flat[s : s + step]
        out[s : s + step] = chunk[:, idx[..., 0], idx[..., 1]].prod(axis=-1).sum(axis=-1)
    return out.reshape(lead) if lead else float(out[0])


def haf_recursive(sigma: np.ndarray, max_n: int = MAX_HAFNIAN_N) -> float:
    """Hafnian by expanding along the first remaining index.

    ``haf(Σ) = Σ_{j} Σ_{1j} haf(Σ without rows/cols 1 and j)``, memoised on
    the set of remaining indices.
    """
    sigma = np.asarray(sigma, dtype=float)
    n = sigma.shape[-1]
    if n % 2:
        return 0.0
    if n > max_n:
        raise CapacityError(f"hafnian recursion limited to n <= {max_n}, got {n}")
    memo = {0: 1.0}

    def rec(mask: int) -> float:
        if mask in memo:
            return memo[mask]
        first = (mask & -mask).bit_length() - 1
        rest = mask & ~(1 << first)
        total = 0.0
        m = rest
        while m:
            j = (m & -m).bit_length() - 1
            m &= m - 1
            total += sigma[first, j] * rec(rest & ~(1 << j))
        memo[mask] = total
        return total

    return rec((1 << n) - 1)


def haf_bruteforce(sigma: np.ndarray, check: bool = True, rtol: float = 1e-9) -> float:
    """Hafnian of a symmetric matrix; odd order gives 0.

    With ``check`` the enumeration result is cross-checked against the
    recursive expansion and an ``AssertionError`` is raised on disagreement.
    """
    value = haf_enumerate(sigma)
    if check:
        other = haf_recursive(sigma)
        if not np.isclose(value, other, rtol=rtol, atol=rtol * _haf_scale(sigma)):
            raise AssertionError(f"hafnian oracles disagree: {value!r} vs {other!r}")
    return value


def _haf_scale(sigma):
    # sum of |terms| bounds roundoff in both evaluations
    sigma = np.asarray(sigma, dtype=float)
    n = sigma.shape[-1]
    if n % 2 or n == 0:
        return 1.0
    return float(haf_enumerate(np.abs(sigma))) or 1.0


def sample_sigma(n: int, rng: np.random.Generator) -> np.ndarray:
    """One draw from ``D_n``."""
    return sample_sigmas(n, 1, rng)[0]


def sample_sigmas(n: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """``size`` i.i.d. draws from ``D_n`` as a ``(size, n, n)`` stack."""
    if n < 2:
        raise ValueError("n must be at least 2")
    iu = np.triu_indices(n, k=1)
    out = np.zeros((size, n, n))
    vals = rng.standard_normal((size, iu[0].size))
    out[:, iu[0], iu[1]] = vals
    out[:, iu[1], iu[0]] = vals
    diag = 1.0 + np.abs(out).sum(axis=-1)
    out[:, np.arange(n), np.arange(n)] = diag
    return out


def mc_product_moment(
    sigma: np.ndarray, samples: int, rng: np.random.Generator, chunk: int = 1 << 16
) -> tuple:
    """Monte-Carlo estimate of ``E[Π Z_i]`` for ``Z ~ N(0, Σ)`` and its standard error.

    Raises ``numpy.linalg.LinAlgError`` if ``Σ`` is not positive definite.
    """
    sigma = np.asarray(sigma, dtype=float)
    L = np.linalg.cholesky(sigma)
    n = sigma.shape[0]
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < samples:
        k = min(chunk, samples - done)
        z = rng.standard_normal((k, n)) @ L.T
        p = z.prod(axis=1)
        total += p.sum()
        total_sq += (p * p).sum()
        done += k
    mean = total / samples
    var = max(total_sq / samples - mean * mean, 0.0) * samples / max(samples - 1, 1)
    return mean, float(np.sqrt(var / samples))


def exact_moment_xs(T: pr.PairingStructure, U: pr.PairingStructure, cap: int = pr.DEFAULT_CAP) -> int:
    """Exact ``E_{D_n}[X_T X_U]``, which equals ``|S(T) ∩ S(U)|``.

    Taking ``U`` to be the full structure gives ``E[X_T haf(Σ)] = |S(T)|``.
    """
    return pr.intersection_count(T, U, cap)


# ---------------------------------------------------------------------------
# Predictors over D_n and their exact second moments


def structure_predictor(T: pr.PairingStructure, name: str = None) -> Predictor:
    """The predictor ``Σ ↦ X_T(Σ)``."""
    return Predictor(name or f"X[{pr.serialize_structure(T)}]", lambda s: pr.eval_x(T, s), ("structure", T))


def hafnian_predictor(n: int, name: str = "haf") -> Predictor:
    """The target ``Σ ↦ haf(Σ)`` over ``n × n`` covariance matrices."""
    return Predictor(name, lambda s: haf_enumerate(s), ("hafnian", n))


class HafnianMoments(ExactMoments):
    """Exact second moments over ``D_n`` for constants, ``X_T`` and ``haf``.

    ``E[X_T X_U] = |S(T) ∩ S(U)|``, ``E[haf · X_T] = |S(T)|``,
    ``E[haf²] = (n-1)!!``, and all of them have mean zero.
    """

    def __init__(self, n: int, cap: int = pr.DEFAULT_CAP):
        self.n = n
        self.cap = cap
        super().__init__(self._gram)

    def _gram(self, a: Predictor, b: Predictor) -> float:
        ka, kb = _kind(a), _kind(b)
        if ka == "const" or kb == "const":
            return 1.0 if ka == kb else 0.0
        if ka == "hafnian" and kb == "hafnian":
            return float(double_factorial(self.n - 1))
        if ka == "hafnian" or kb == "hafnian":
            T = (b if ka == "hafnian" else a).meta[1]
            self._check(T)
            return float(T.num_pairings)
        self._check(a.meta[1])
        self._check(b.meta[1])
        return float(pr.intersection_count(a.meta[1], b.meta[1], self.cap))

    def _check(self, T):
        if T.index_set != tuple(range(1, self.n + 1)):
            raise StructureError(f"structure must pair exactly 1..{self.n}")


def _kind(p: Predictor) -> str:
    if p is CONSTANT or (p.meta and p.meta[0] == "const"):
        return "const"
    if p.meta and p.meta[0] in ("structure", "hafnian"):
        return p.meta[0]
    raise ValueError(f"no exact hafnian moments registered for predictor {p.name!r}")


def sigma_sampler(n: int):
    """Sampler ``(rng, size) -> stack`` for :class:`~multiacc.accuracy.MonteCarloMoments`."""
    return lambda rng, size: sample_sigmas(n, size, rng)
