"""Adaptive approximately-multiaccurate merge of pairing-structure estimators.

Given structures ``T_1..T_m`` over the same index set, the target ``haf(Σ)``
and predictors ``X_{T_i}``, the OLS merge needs the correlation matrix
``C_ij = |S_i ∩ S_j| / sqrt(|S_i||S_j|)``, which is #P-hard to compute
exactly.  It is estimated instead by sampling: for ``i < j`` a uniform
draw from ``S(T_j)`` lands in ``S(T_i)`` with probability
``|S_i ∩ S_j| / |S_j|``.  Sampling continues until

    s >= 80 m² (m² + 3 ln(2/δ)) / (ε² σ̂⁴)

where ``σ̂`` is the smallest singular value of the running estimate, after
which the merged coefficients are ``β = D⁻¹ Ĉ⁻¹ d`` with
``D = diag(sqrt|S_i|)`` and ``d = (sqrt|S_i|)_i``.

Rounds are simulated in fixed-size batches.  Batch ``b``'s probe for the
pair ``(i, j)`` uses its own generator seeded by ``(seed, b, i, j)``, so a
run is reproducible from its seed regardless of where it stops.  The
stopping rule is evaluated every round for the first 10⁴ rounds and then
every ``ceil(s/100)`` rounds.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import pairing as pr
from .accuracy import CONSTANT, LinearEstimator, check_approx_accuracy
from .errors import BudgetExceeded, CapacityError, StructureError
from .gaussian_moments import HafnianMoments, hafnian_predictor, structure_predictor

log = logging.getLogger(__name__)

DENSE_CHECK_ROUNDS = 10_000
DEFAULT_MAX_PROBES = 10**8


@dataclass(frozen=True)
class MergeConfig:
    """Tolerances and guards for :func:`estimator`.

    ``max_samples`` bounds the number of sample-and-test probes (one per
    pair ``i < j`` per round; one per round when ``m = 1``).
    """

    delta: float = 0.1
    eps: float = 0.1
    max_samples: int = DEFAULT_MAX_PROBES
    batch_rounds: int = 1 << 16

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if not 0 < self.eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        if self.max_samples < 1 or self.batch_rounds < 1:
            raise ValueError("max_samples and batch_rounds must be positive")
        if self.eps > 0.4:
            warnings.warn("the runtime guarantee assumes eps <= 2/5", stacklevel=3)


def stopping_floor(m: int, delta: float, eps: float) -> float:
    """``80 m² (m² + 3 ln(2/δ)) / ε²``: the rule's threshold at ``σ̂ = 1``."""
    return 80.0 * m * m * (m * m + 3.0 * math.log(2.0 / delta)) / (eps * eps)


@dataclass
class MergeResult:
    coefficients: np.ndarray
    samples_taken: int
    c_hat: np.ndarray
    sigma_hat_m: float
    estimator: LinearEstimator
    ordering: list
    structures: list
    config: MergeConfig = field(default_factory=MergeConfig)

    @property
    def m(self) -> int:
        return len(self.structures)

    @property
    def predictors(self) -> list:
        return self.estimator.predictors

    def with_coefficients(self, beta) -> "MergeResult":
        """Copy with replaced coefficients (used to probe the verifier)."""
        beta = np.asarray(beta, dtype=float)
        est = LinearEstimator(tuple(zip(self.predictors, beta)), self.estimator.name)
        return MergeResult(beta, self.samples_taken, self.c_hat, self.sigma_hat_m, est,
                           self.ordering, self.structures, self.config)

    def to_dict(self) -> dict:
        return {
            "beta": [float(b) for b in self.coefficients],
            "samples": int(self.samples_taken),
            "sigma_hat_m": float(self.sigma_hat_m),
            "c_hat": [[float(v) for v in row] for row in self.c_hat],
            "ordering": [int(k) for k in self.ordering],
        }


def _sqrt_ratio(a: int, b: int) -> float:
    """``sqrt(a / b)`` for big positive integers without forming the quotient."""
    return math.exp(0.5 * (math.log(a) - math.log(b)))


def _checkpoints(lo: int, hi: int, last: int) -> list:
    """Round counts in ``(lo, hi]`` at which the stopping rule is evaluated.

    ``last`` is the most recent checkpoint at or before ``lo``.
    """
    out = []
    s = last
    while True:
        s = s + 1 if s < DENSE_CHECK_ROUNDS else s + -(-s // 100)
        if s > hi:
            return out
        if s > lo:
            out.append(s)


def _root_seed(rng) -> int:
    if isinstance(rng, np.random.Generator):
        return int(rng.integers(0, 2**63))
    if isinstance(rng, np.random.SeedSequence):
        return int(rng.generate_state(2, np.uint64)[0])
    return int(rng)


def _probe_stream(seed: int, batch: int, i: int, j: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(batch, i, j)))


def _c_hat_stack(counts: np.ndarray, s: np.ndarray, pairs, ratios: np.ndarray, m: int) -> np.ndarray:
    """Stacked Ĉ for cumulative pair counts ``counts[k, q]`` at round counts ``s[k]``."""
    c = np.broadcast_to(np.eye(m), (len(s), m, m)).copy()
    for q, (i, j) in enumerate(pairs):
        v = counts[:, q] / s * ratios[q]
        c[:, i, j] = v
        c[:, j, i] = v
    return c


def estimator(structures: Sequence[pr.PairingStructure], config: MergeConfig = None, rng=0) -> MergeResult:
    """Run the adaptive merge and return the merged estimator of ``haf``.

    ``rng`` is an integer seed, a ``SeedSequence`` or a ``Generator`` (from
    which a seed is drawn).  Raises :class:`BudgetExceeded` if the probe
    budget runs out first, e.g. when two structures coincide.
    """
    config = config or MergeConfig()
    structures = list(structures)
    m = len(structures)
    if m == 0:
        raise ValueError("need at least one structure")
    idx = structures[0].index_set
    if any(T.index_set != idx for T in structures):
        raise StructureError("all structures must share one index set")

    sizes_in = [T.num_pairings for T in structures]
    ordering = sorted(range(m), key=lambda k: -sizes_in[k])
    Ts = [structures[k] for k in ordering]
    sizes = [sizes_in[k] for k in ordering]
    pairs = [(i, j) for i in range(m) for j in range(i + 1, m)]
    ratios = np.array([_sqrt_ratio(sizes[j], sizes[i]) for i, j in pairs])
    seed = _root_seed(rng)
    width = max(T.max_index for T in Ts) + 1
    const = stopping_floor(m, config.delta, config.eps)
    probes_per_round = max(1, len(pairs))
    max_rounds = config.max_samples // probes_per_round
    B = config.batch_rounds

    totals = np.zeros(len(pairs), dtype=np.int64)
    s = 0
    last_check = 0
    batch = 0
    sigma = 0.0
    c_hat = np.eye(m)
    while True:
        if s >= max_rounds:
            raise BudgetExceeded(
                f"no stop after {s} rounds ({s * probes_per_round} probes); smallest singular value {sigma:.3g}",
                {"samples": s, "counts": totals.tolist(), "c_hat": c_hat.tolist(),
                 "sigma_hat_m": sigma, "ordering": ordering},
            )
        size = min(B, max_rounds - s)
        hits = np.empty((size, len(pairs)), dtype=np.int64)
        for q, (i, j) in enumerate(pairs):
            g = _probe_stream(seed, batch, i, j)
            partners = pr.sample_partners(Ts[j], size, g, width)
            hits[:, q] = pr.contains_partners(Ts[i], partners)
        cum = np.cumsum(hits, axis=0) + totals
        checks = _checkpoints(s, s + size, last_check)
        if checks:
            at = np.array(checks, dtype=np.int64)
            stack = _c_hat_stack(cum[at - s - 1], at.astype(float), pairs, ratios, m)
            sig = np.linalg.svd(stack, compute_uv=False)[:, -1]
            with np.errstate(divide="ignore"):
                ok = (sig > 0) & (at * sig ** 4 >= const)
            hit = np.flatnonzero(ok)
            if hit.size:
                k = int(hit[0])
                s = int(at[k])
                sigma = float(sig[k])
                c_hat = stack[k]
                break
            sigma = float(sig[-1])
            c_hat = stack[-1]
            last_check = checks[-1]
        totals = cum[-1].copy()
        s += size
        batch += 1
        log.debug("merge batch %d: s=%d sigma_hat=%.4f", batch, s, sigma)

    r = np.array([_sqrt_ratio(sizes[i], sizes[0]) for i in range(m)])
    try:
        beta = np.linalg.solve(c_hat, r) / r
    except np.linalg.LinAlgError as exc:  # pragma: no cover - sigma > 0 rules this out
        raise RuntimeError("estimated correlation matrix is singular despite sigma_hat > 0") from exc
    preds = [structure_predictor(T, f"X{ordering[k] + 1}") for k, T in enumerate(Ts)]
    est = LinearEstimator(tuple(zip(preds, beta)), "f")
    log.info("merge stopped at s=%d with sigma_hat=%.4f", s, sigma)
    return MergeResult(beta, s, c_hat, sigma, est, ordering, Ts, config)


def verify_merge_exact(result: MergeResult, structures=None, cap: int = pr.DEFAULT_CAP, eps: Optional[float] = None) -> list:
    """Exact ``(ε, X)``-accuracy reports for ``X`` in ``{1, X_{T_1}, ..., X_{T_m}, f}``.

    Uses ``E[X_i X_j] = |S_i ∩ S_j|``, ``E[haf X_i] = |S_i|`` and
    ``E[haf²] = (n-1)!!``; no sampling is involved.
    """
    eps = result.config.eps if eps is None else eps
    if structures is not None:
        given = sorted(pr.serialize_structure(T) for T in structures)
        if given != sorted(pr.serialize_structure(T) for T in result.structures):
            raise ValueError("structures do not match the merge result")
    T0 = result.structures[0]
    n = len(T0.index_set)
    if T0.index_set != tuple(range(1, n + 1)):
        raise StructureError("exact verification needs structures over 1..n")
    for T in result.structures:
        if T.num_pairings > cap:
            raise CapacityError(f"structure has {T.num_pairings} pairings, more than cap={cap}")
    moments = HafnianMoments(n, cap)
    Y = hafnian_predictor(n)
    f = result.estimator
    return [check_approx_accuracy(f, X, Y, moments, eps) for X in [CONSTANT, *result.predictors, f]]
