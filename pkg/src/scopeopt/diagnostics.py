"""Executable checks of the convergence theory.

Rate constants and step-size conditions, exact (exhaustive) evaluation of
the local update direction's mean and second moment, the fixed-point
factor of the idealized exact-local-solve iteration, and a recorder for
the mean squared distance of local iterates to the optimum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .engine import HyperParams, worker_inner_loop, worker_rng
from .model import Quadratic1D, as_model_vector


@dataclass(frozen=True)
class TheoryConstants:
    alpha: float
    beta: float
    rate_last: float
    rate_avg: float
    M_min_last: int | None
    M_min_avg: int | None
    regime_ok: bool   # 0 < alpha < 1, 0 < beta < 1, alpha + beta < 1
    bias_ok: bool    # c > L - mu
    reason: str = ""

    @property
    def valid(self):
        return self.regime_ok and self.bias_ok


def _smallest_int_above(x):
    return math.floor(x) + 1


def theory_constants(L, mu, eta, c, M) -> TheoryConstants:
    """Per-round contraction factors for the last-iterate and averaged rules.

    Invalid regimes are reported through ``regime_ok``/``bias_ok`` and
    ``reason``; the rate fields are then nan rather than misleading numbers.
    """
    if not (L >= mu > 0):
        raise ValueError("need L >= mu > 0")
    alpha = 1.0 - eta * (2.0 * mu + c)
    beta = c * eta + 3.0 * L * L * eta * eta
    reasons = []
    if not 0.0 < alpha < 1.0:
        reasons.append(f"alpha = {alpha:.6g} outside (0, 1)")
    if not 0.0 < beta < 1.0:
        reasons.append(f"beta = {beta:.6g} outside (0, 1)")
    if not alpha + beta < 1.0:
        reasons.append(f"alpha + beta = {alpha + beta:.6g} >= 1")
    regime_ok = not reasons
    bias_ok = c > L - mu
    if not bias_ok:
        reasons.append(f"c = {c:.6g} is not above L - mu = {L - mu:.6g}")
    nan = float("nan")
    if not regime_ok:
        return TheoryConstants(alpha, beta, nan, nan, None, None, False, bias_ok, "; ".join(reasons))
    gap = 1.0 - alpha
    rate_last = alpha ** M + beta / gap
    rate_avg = (1.0 / (M * gap) if M > 0 else math.inf) + beta / gap
    m_last = _smallest_int_above(math.log((1.0 - alpha - beta) / gap) / math.log(alpha))
    m_avg = _smallest_int_above(1.0 / (1.0 - alpha - beta))
    return TheoryConstants(alpha, beta, rate_last, rate_avg, m_last, m_avg, True, bias_ok,
                           "; ".join(reasons))


def check_step_size(eta, L, mu, c) -> bool:
    """True iff eta < min(2 mu / (3 L^2), 1 / (2 mu + c)) and c > L - mu, strictly."""
    return 0 < eta < 2.0 * mu / (3.0 * L * L) and eta < 1.0 / (2.0 * mu + c) and c > L - mu


def _args(partition, kind, lam, *vecs):
    d = partition.d
    vecs = [as_model_vector(v, d) for v in vecs]
    if partition.q == 0:
        raise ValueError("partition is empty")
    return vecs, kind.kernel_args(partition.block)


def expected_local_grad(partition, u, w_t, z, c, kind, lam) -> np.ndarray:
    """Closed-form mean of the local update direction given ``u``:
    grad F_k(u) - grad F_k(w_t) + z + c (u - w_t)."""
    (u, w_t, z), args = _args(partition, kind, lam, u, w_t, z)
    q = partition.q
    gu = K.grad_sum(kind.code, kind.width, float(lam), u, *args) / q
    gw = K.grad_sum(kind.code, kind.width, float(lam), w_t, *args) / q
    return gu - gw + z + c * (u - w_t)


def local_directions(partition, u, w_t, z, c, kind, lam) -> np.ndarray:
    """Every possible update direction, one row per local instance."""
    (u, w_t, z), args = _args(partition, kind, lam, u, w_t, z)
    return K.local_directions(kind.code, kind.width, float(lam), u, w_t, z, float(c), *args)


def exhaustive_local_grad(partition, u, w_t, z, c, kind, lam) -> np.ndarray:
    return local_directions(partition, u, w_t, z, c, kind, lam).mean(axis=0)


def variance_terms(partition, u, w_t, z, c, L, kind, lam, wstar):
    """(E||v||^2 over the shard, 3(L^2+c^2)||u-w_t||^2 + 3L^2||w_t-w*||^2)."""
    if wstar is None:
        raise ValueError("the variance bound needs the optimum w*")
    V = local_directions(partition, u, w_t, z, c, kind, lam)
    second = float(np.mean(np.einsum("ij,ij->i", V, V)))
    du = np.asarray(u) - np.asarray(w_t)
    dw = np.asarray(w_t) - np.asarray(wstar)
    bound = 3.0 * (L * L + c * c) * float(du @ du) + 3.0 * L * L * float(dw @ dw)
    return second, bound


def variance_bound_holds(partition, u, w_t, z, c, L, kind, lam, wstar=None, rtol=1e-12,
                         atol=1e-24) -> bool:
    """Exhaustive check of the second-moment bound; ``z`` must be the exact
    global mean gradient at ``w_t``.  ``atol`` absorbs the squared roundoff
    left in a computed ``z`` when both sides should be zero."""
    second, bound = variance_terms(partition, u, w_t, z, c, L, kind, lam, wstar)
    return second <= bound * (1.0 + rtol) + atol


@dataclass(frozen=True)
class QuadraticProblem:
    curvatures: tuple   # 1-D Hessian of each local function
    wstar: float

    def __post_init__(self):
        if any(not a > 0 for a in self.curvatures):
            raise ValueError("local curvatures must be positive")

    @property
    def A(self):
        return float(np.mean(self.curvatures))


def quadratic_problem(kind: Quadratic1D, partitions, lam=0.0) -> QuadraticProblem:
    curv, num, den = [], 0.0, 0.0
    for part in partitions:
        a, b = kind.coefficients(part.block.ids)
        curv.append(float(np.mean(2.0 * a + lam)))
        num += float(np.sum(2.0 * a * b))
        den += float(np.sum(2.0 * a + lam))
    return QuadraticProblem(tuple(curv), num / den)


def fixed_point_factor(problem: QuadraticProblem, c: float) -> float:
    """1 - mean_k A / (A_k + c): error multiplier per round when every worker
    solves its shifted local problem exactly. |factor| > 1 predicts divergence
    of that idealization; finite-M runs can behave differently."""
    A = problem.A
    return 1.0 - float(np.mean([A / (a + c) for a in problem.curvatures]))


def measure_gamma(partitions, w_t, z, hp: HyperParams, kind, wstar, seed=None):
    """gamma_m = mean_k ||u_{k,m} - w*||^2 for m = 0..M, one inner phase, no transport."""
    w_t = np.asarray(w_t, dtype=np.float64)
    wstar = np.asarray(wstar, dtype=np.float64)
    gam = np.zeros(hp.M + 1)
    for part in partitions:
        trace = np.empty((hp.M, part.d))
        rng = worker_rng(hp.seed if seed is None else seed, part.worker_id)
        worker_inner_loop(part, w_t, z, hp, rng, kind, trace=trace)
        gam[0] += float((w_t - wstar) @ (w_t - wstar))
        diff = trace - wstar
        gam[1:] += np.einsum("ij,ij->i", diff, diff)
    return gam / len(partitions)
