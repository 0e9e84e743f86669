"""Accuracy, multiaccuracy and approximate accuracy of estimators.

An estimator ``f`` is ``X``-accurate for a target ``Y`` over a distribution
when ``E[(Y - f) X] = 0``; ``(ε, X)``-accurate when
``E[(Y - f) X]² <= ε² E[X²] E[f²]``.  Everything here is phrased in terms
of a moment provider that returns expectations of products of two
quantities, either exactly (closed forms registered per predictor family)
or by Monte Carlo over a shared set of draws.

Quantities are :class:`Predictor` objects (named functions of a sample,
vectorised over a leading batch axis) or :class:`LinearEstimator` linear
combinations of them.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

VERDICT_SIGMAS = 5.0
EXACT_RTOL = 1e-9
PINV_RCOND = 1e-10


@dataclass(frozen=True, eq=False)
class Predictor:
    """A named real-valued function of a sample.

    ``fn`` maps a stack of samples ``(N, ...)`` to an ``(N,)`` array.
    ``meta`` lets exact moment providers recognise the predictor family.
    """

    name: str
    fn: Callable
    meta: Optional[tuple] = None

    def __call__(self, batch):
        return np.asarray(self.fn(batch), dtype=float)

    def evaluate(self, x) -> float:
        """Value on a single sample."""
        return float(self(np.asarray(x)[None])[0])


def _ones(batch):
    return np.ones(len(batch))


CONSTANT = Predictor("1", _ones, ("const",))


@dataclass(frozen=True, eq=False)
class LinearEstimator:
    """``x ↦ Σ_k c_k P_k(x)`` for predictors ``P_k``."""

    terms: tuple
    name: str = "f"

    def __post_init__(self):
        terms = tuple((p, float(c)) for p, c in self.terms)
        for _, c in terms:
            if not math.isfinite(c):
                raise ValueError("linear estimator coefficients must be finite")
        object.__setattr__(self, "terms", terms)

    @property
    def predictors(self) -> list:
        return [p for p, _ in self.terms]

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([c for _, c in self.terms])

    def __call__(self, batch):
        out = np.zeros(len(batch))
        for p, c in self.terms:
            if c:
                out += c * p(batch)
        return out

    def evaluate(self, x) -> float:
        return float(self(np.asarray(x)[None])[0])

    def scaled(self, factor: float, name: str = None) -> "LinearEstimator":
        return LinearEstimator(tuple((p, c * factor) for p, c in self.terms), name or self.name)

    def to_dict(self) -> dict:
        return {"name": self.name, "terms": [{"predictor": p.name, "coefficient": c} for p, c in self.terms]}


def expand(q) -> list:
    """``(predictor, coefficient)`` pairs of a quantity."""
    if isinstance(q, Predictor):
        return [(q, 1.0)]
    if isinstance(q, LinearEstimator):
        return list(q.terms)
    raise TypeError(f"not a predictor or linear estimator: {q!r}")


def name_of(q) -> str:
    return q.name


# ---------------------------------------------------------------------------
# Moment providers


@dataclass
class MomentTriple:
    """Moments needed by the accuracy checks, with the covariance of their estimates.

    ``defect = E[(Y-f)X]``, ``x2 = E[X²]``, ``f2 = E[f²]``; ``cov`` is the
    3×3 covariance of the Monte-Carlo estimates of those three (zeros when
    exact).  ``yx`` and ``fx`` are ``E[YX]`` and ``E[fX]``.
    """

    defect: float
    x2: float
    f2: float
    yx: float
    fx: float
    cov: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))


class ExactMoments:
    """Moments from a closed-form Gram function on atomic predictors.

    ``gram(a, b)`` returns ``E[a·b]``; it is extended bilinearly to linear
    estimators.  Results are cached by predictor identity.
    """

    exact = True

    def __init__(self, gram: Callable):
        self._gram_fn = gram
        self._cache = {}

    def gram(self, a: Predictor, b: Predictor) -> float:
        key = (id(a), id(b)) if id(a) <= id(b) else (id(b), id(a))
        if key not in self._cache:
            self._cache[key] = (float(self._gram_fn(a, b)), a, b)
        return self._cache[key][0]

    def mean_product(self, a, b) -> tuple:
        total = 0.0
        for pa, ca in expand(a):
            for pb, cb in expand(b):
                if ca and cb:
                    total += ca * cb * self.gram(pa, pb)
        return total, 0.0

    def triple(self, f, X, Y) -> MomentTriple:
        yx = self.mean_product(Y, X)[0]
        fx = self.mean_product(f, X)[0]
        return MomentTriple(
            defect=yx - fx,
            x2=self.mean_product(X, X)[0],
            f2=self.mean_product(f, f)[0],
            yx=yx,
            fx=fx,
        )

    @classmethod
    def from_table(cls, table: dict) -> "ExactMoments":
        """Provider from ``{(name_a, name_b): E[a·b]}`` (either order suffices)."""
        sym = {}
        for (a, b), v in table.items():
            sym[(a, b)] = v
            sym[(b, a)] = v

        def gram(pa, pb):
            try:
                return sym[(pa.name, pb.name)]
            except KeyError:
                raise KeyError(f"no exact moment for ({pa.name}, {pb.name})") from None

        return cls(gram)


class MonteCarloMoments:
    """Moments estimated from one shared set of i.i.d. draws.

    ``sampler(rng, size)`` returns a stack of ``size`` samples.  Draws are
    made in fixed chunks, chunk ``k`` from the stream seeded by
    ``(seed, k)``, so results do not depend on ``threads``.  All
    quantities are evaluated on the same draws and defects are paired
    means with standard error ``sd / sqrt(N)``.
    """

    exact = False

    def __init__(self, sampler: Callable, samples: int, seed: int = 0, chunk: int = 1 << 16, threads: int = 1):
        if samples < 2:
            raise ValueError("need at least 2 samples")
        self.sampler = sampler
        self.samples = int(samples)
        self.seed = int(seed)
        self.chunk = int(chunk)
        self.threads = max(1, int(threads))
        self._draws = None
        self._values = {}

    def _map(self, fn, items):
        if self.threads == 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(self.threads) as pool:
            return list(pool.map(fn, items))

    @property
    def draws(self) -> list:
        if self._draws is None:
            sizes = [min(self.chunk, self.samples - s) for s in range(0, self.samples, self.chunk)]

            def draw(k):
                rng = np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(k,)))
                return self.sampler(rng, sizes[k])

            self._draws = self._map(draw, range(len(sizes)))
        return self._draws

    def atomic_values(self, p: Predictor) -> np.ndarray:
        if id(p) not in self._values:
            parts = self._map(lambda d: np.asarray(p(d), dtype=float), self.draws)
            self._values[id(p)] = (np.concatenate(parts), p)
        return self._values[id(p)][0]

    def values(self, q) -> np.ndarray:
        out = np.zeros(self.samples)
        for p, c in expand(q):
            if c:
                out += c * self.atomic_values(p)
        return out

    def mean_product(self, a, b) -> tuple:
        w = self.values(a) * self.values(b)
        return float(w.mean()), _se(w)

    def triple(self, f, X, Y) -> MomentTriple:
        x = self.values(X)
        fv = self.values(f)
        y = self.values(Y)
        u = (y - fv) * x
        v = x * x
        w = fv * fv
        stacked = np.vstack([u, v, w])
        cov = np.cov(stacked) / self.samples
        return MomentTriple(
            defect=float(u.mean()),
            x2=float(v.mean()),
            f2=float(w.mean()),
            yx=float((y * x).mean()),
            fx=float((fv * x).mean()),
            cov=cov,
        )


def _se(w: np.ndarray) -> float:
    if w.size < 2:
        return float("inf")
    return float(w.std(ddof=1) / np.sqrt(w.size))


# ---------------------------------------------------------------------------
# Reports and checks


@dataclass
class AccuracyReport:
    predictor: str
    defect: float
    threshold: float
    std_error: float
    verdict: str

    @property
    def ok(self) -> bool:
        return self.verdict == "accurate"

    def to_dict(self) -> dict:
        return {
            "predictor": self.predictor,
            "defect": self.defect,
            "threshold": self.threshold,
            "std_error": self.std_error,
            "verdict": self.verdict,
        }


def verdict(defect: float, threshold: float, std_error: float, sigmas: float = VERDICT_SIGMAS) -> str:
    """``accurate`` if ``|defect| <= threshold + 5 se``, ``violated`` if it exceeds it.

    Non-finite inputs (e.g. a degenerate Monte-Carlo sample) give
    ``inconclusive``.
    """
    if not all(math.isfinite(v) for v in (defect, threshold, std_error)):
        return "inconclusive"
    band = threshold + sigmas * std_error
    return "accurate" if abs(defect) <= band else "violated"


def check_accuracy(f, X, Y, moments) -> AccuracyReport:
    """Is ``f`` an ``X``-accurate estimator of ``Y``?  ``E[(Y - f) X]`` vs 0."""
    t = moments.triple(f, X, Y)
    if moments.exact:
        threshold = EXACT_RTOL * _exact_scale(t)
        se = 0.0
    else:
        threshold = 0.0
        se = float(np.sqrt(max(t.cov[0, 0], 0.0)))
    return AccuracyReport(name_of(X), t.defect, threshold, se, verdict(t.defect, threshold, se))


def _exact_scale(t: MomentTriple) -> float:
    # magnitude of the terms whose difference is the defect
    return max(abs(t.yx), abs(t.fx), math.sqrt(max(t.x2, 0.0) * max(t.f2, 0.0)))


def check_multiaccuracy(f, predictors: Iterable, Y, moments) -> list:
    return [check_accuracy(f, X, Y, moments) for X in predictors]


def check_approx_accuracy(f, X, Y, moments, eps: float) -> AccuracyReport:
    """``(ε, X)``-accuracy: ``E[(Y-f)X]² <= ε² E[X²] E[f²]``.

    The report's threshold is ``ε sqrt(E[X²] E[f²])`` so that the check
    reads ``|defect| <= threshold``.  In Monte-Carlo mode the standard
    error is that of ``|defect| - threshold``, by the delta method.
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    t = moments.triple(f, X, Y)
    threshold = eps * math.sqrt(max(t.x2, 0.0) * max(t.f2, 0.0))
    if moments.exact:
        threshold += EXACT_RTOL * _exact_scale(t)
        se = 0.0
    else:
        grad = np.array([math.copysign(1.0, t.defect) if t.defect else 0.0, 0.0, 0.0])
        if t.x2 > 0 and t.f2 > 0:
            grad[1] = -0.5 * eps * math.sqrt(t.f2 / t.x2)
            grad[2] = -0.5 * eps * math.sqrt(t.x2 / t.f2)
        se = float(np.sqrt(max(grad @ t.cov @ grad, 0.0)))
    return AccuracyReport(name_of(X), t.defect, threshold, se, verdict(t.defect, threshold, se))


def check_approx_multiaccuracy(f, predictors: Iterable, Y, moments, eps: float) -> list:
    return [check_approx_accuracy(f, X, Y, moments, eps) for X in predictors]


def all_accurate(reports: Sequence[AccuracyReport]) -> bool:
    return all(r.ok for r in reports)


# ---------------------------------------------------------------------------
# OLS merge


def ols_coefficients(predictors: Sequence, Y, moments) -> np.ndarray:
    """``(E[Y X_1], ..., E[Y X_m]) M⁺`` with ``M`` the Gram matrix of the predictors."""
    m = len(predictors)
    gram = np.empty((m, m))
    for i in range(m):
        for j in range(i, m):
            gram[i, j] = gram[j, i] = moments.mean_product(predictors[i], predictors[j])[0]
    rhs = np.array([moments.mean_product(Y, X)[0] for X in predictors])
    return np.linalg.pinv(gram, rcond=PINV_RCOND, hermitian=True) @ rhs


def ols_merge(predictors: Sequence, Y, moments, name: str = "ols") -> LinearEstimator:
    """Least-squares linear combination of ``predictors`` for ``Y``.

    With exact moments the result is multiaccurate with respect to every
    predictor and self-accurate.
    """
    coef = ols_coefficients(predictors, Y, moments)
    return LinearEstimator(tuple(zip(predictors, coef)), name)


def mean_squared_error(f, Y, moments) -> float:
    """``E[(Y - f)²]``."""
    yy = moments.mean_product(Y, Y)[0]
    yf = moments.mean_product(Y, f)[0]
    ff = moments.mean_product(f, f)[0]
    return yy - 2 * yf + ff


def standard_gaussian_coordinates(k: int):
    """Predictors ``c_1..c_k`` of i.i.d. ``N(0, 1)`` coordinates and their exact moments.

    Samples are ``(N, k)`` arrays; ``sampler`` draws them for Monte-Carlo use.
    Linear targets such as ``2 c_1 + 3 c_2`` are :class:`LinearEstimator` objects.
    """
    coords = [Predictor(f"c{i + 1}", lambda x, i=i: np.asarray(x)[:, i], ("coordinate", i)) for i in range(k)]

    def gram(a, b):
        ia = -1 if a is CONSTANT else a.meta[1]
        ib = -1 if b is CONSTANT else b.meta[1]
        return 1.0 if ia == ib else 0.0

    def sampler(rng, size):
        return rng.standard_normal((size, k))

    return coords, ExactMoments(gram), sampler
