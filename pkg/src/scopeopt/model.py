"""Per-instance losses, the averaged objective and curvature constants.

All losses carry the ridge term ``lam/2 * ||w||^2`` per instance, so the
objective ``P(w) = mean_i f_i(w)`` is regularized exactly once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from . import _kernels as K
from .errors import AssumptionError, DimensionError, NonFiniteError


@dataclass(frozen=True, eq=False)
class LabeledInstance:
    """Sparse feature vector with a +1/-1 label.

    ``index`` is the instance's position in its source dataset; it survives
    partitioning and is what ties a quadratic instance to its coefficients.
    """

    indices: np.ndarray
    values: np.ndarray
    label: int
    index: int = 0

    def __post_init__(self):
        idx = np.ascontiguousarray(self.indices, dtype=np.int64)
        val = np.ascontiguousarray(self.values, dtype=np.float64)
        if idx.shape != val.shape or idx.ndim != 1:
            raise DimensionError("indices and values must be 1-D and equally long")
        if idx.size and (idx[0] < 0 or np.any(np.diff(idx) <= 0)):
            raise DimensionError("feature indices must be non-negative and strictly increasing")
        if not np.all(np.isfinite(val)):
            raise NonFiniteError("feature values must be finite")
        if self.label not in (1, -1):
            raise ValueError(f"label must be +1 or -1, got {self.label!r}")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    @classmethod
    def from_dense(cls, x, label, index=0):
        x = np.asarray(x, dtype=np.float64)
        nz = np.flatnonzero(x)
        return cls(nz, x[nz], label, index)

    def to_dense(self, d):
        x = np.zeros(d)
        x[self.indices] = self.values
        return x

    @property
    def max_index(self):
        return int(self.indices[-1]) if self.indices.size else -1

    def same_as(self, other):
        return (self.label == other.label and self.index == other.index
                and np.array_equal(self.indices, other.indices)
                and self.values.tobytes() == other.values.tobytes())


@dataclass(frozen=True, eq=False)
class InstanceBlock:
    """CSR view over an ordered run of instances, in the kernels' layout."""

    indptr: np.ndarray
    indices: np.ndarray
    values: np.ndarray
    labels: np.ndarray
    ids: np.ndarray

    @classmethod
    def build(cls, instances: Sequence[LabeledInstance]) -> "InstanceBlock":
        counts = np.fromiter((x.indices.size for x in instances), dtype=np.int64,
                             count=len(instances))
        indptr = np.zeros(len(instances) + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        if instances:
            indices = np.concatenate([x.indices for x in instances])
            values = np.concatenate([x.values for x in instances])
        else:
            indices = np.zeros(0, dtype=np.int64)
            values = np.zeros(0)
        labels = np.array([x.label for x in instances], dtype=np.float64)
        ids = np.array([x.index for x in instances], dtype=np.int64)
        return cls(indptr, indices.astype(np.int64), values.astype(np.float64), labels, ids)

    def __len__(self):
        return self.labels.shape[0]

    def sq_norms(self):
        out = np.zeros(len(self))
        np.add.at(out, np.repeat(np.arange(len(self)), np.diff(self.indptr)), self.values ** 2)
        return out

    def dense(self, d):
        X = np.zeros((len(self), d))
        rows = np.repeat(np.arange(len(self)), np.diff(self.indptr))
        X[rows, self.indices] = self.values
        return X


class LossKind:
    code: int
    width: float = 0.5

    def coefficients(self, ids):
        n = len(ids)
        return np.zeros(n), np.zeros(n)

    def check_dimension(self, d):
        pass

    def kernel_args(self, block: InstanceBlock):
        qa, qb = self.coefficients(block.ids)
        return (block.indptr, block.indices, block.values, block.labels, qa, qb)


@dataclass(frozen=True)
class LogisticL2(LossKind):
    code = K.LOGISTIC

    def __repr__(self):
        return "LogisticL2()"


@dataclass(frozen=True)
class SmoothedHingeL2(LossKind):
    """Hinge with a quadratic corner of width ``width`` so the gradient is Lipschitz."""

    width: float = 0.5
    code = K.SMOOTHED_HINGE

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("smoothing width must be positive")


@dataclass(frozen=True)
class Quadratic1D(LossKind):
    """f_i(w) = a_i (w - b_i)^2 on a 1-D model; instance ``index`` selects the pair."""

    coeffs: tuple = field(default_factory=tuple)
    code = K.QUADRATIC

    def __post_init__(self):
        pairs = tuple((float(a), float(b)) for a, b in self.coeffs)
        if not pairs:
            raise ValueError("Quadratic1D needs at least one (a, b) pair")
        if any(not a > 0 for a, _ in pairs):
            raise ValueError("Quadratic1D curvatures must be positive")
        object.__setattr__(self, "coeffs", pairs)

    def coefficients(self, ids):
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= len(self.coeffs)):
            raise DimensionError("instance index has no quadratic coefficient pair")
        table = np.array(self.coeffs, dtype=np.float64)
        return table[ids, 0].copy(), table[ids, 1].copy()

    def check_dimension(self, d):
        if d != 1:
            raise DimensionError(f"Quadratic1D requires d = 1, got d = {d}")


@dataclass(frozen=True)
class SmoothnessConstants:
    L: float
    mu: float

    def __post_init__(self):
        if not (self.L > 0 and self.mu > 0 and self.L >= self.mu):
            raise AssumptionError(f"need L >= mu > 0, got L={self.L}, mu={self.mu}")


def as_model_vector(w, d=None):
    w = np.ascontiguousarray(w, dtype=np.float64)
    if w.ndim != 1:
        raise DimensionError("model vectors are 1-D")
    if d is not None and w.shape[0] != d:
        raise DimensionError(f"model vector has length {w.shape[0]}, expected {d}")
    if not np.all(np.isfinite(w)):
        raise NonFiniteError("model vector has non-finite entries")
    return w


def _single(kind, inst, d):
    kind.check_dimension(d)
    if inst.max_index >= d:
        raise DimensionError(f"instance index {inst.max_index} out of range for d = {d}")
    block = InstanceBlock.build([inst])
    return kind.kernel_args(block)


def loss_value(kind: LossKind, w, inst: LabeledInstance, lam: float) -> float:
    w = as_model_vector(w)
    args = _single(kind, inst, w.shape[0])
    val = K.loss_at(kind.code, kind.width, float(lam), w, *args, 0)
    if not np.isfinite(val):
        raise NonFiniteError("loss value is not finite")
    return float(val)


def loss_grad(kind: LossKind, w, inst: LabeledInstance, lam: float) -> np.ndarray:
    w = as_model_vector(w)
    args = _single(kind, inst, w.shape[0])
    out = np.empty_like(w)
    K.grad_into(kind.code, kind.width, float(lam), w, *args, 0, out)
    return out


def _dataset_args(kind, w, dataset):
    w = as_model_vector(w, dataset.d)
    kind.check_dimension(dataset.d)
    if dataset.n == 0:
        raise ValueError("dataset is empty")
    return w, kind.kernel_args(dataset.block)


def objective(kind: LossKind, w, dataset, lam: float) -> float:
    """Mean loss; the sum runs over instances in ascending order."""
    w, args = _dataset_args(kind, w, dataset)
    val = K.loss_sum(kind.code, kind.width, float(lam), w, *args) / dataset.n
    if not np.isfinite(val):
        raise NonFiniteError("objective is not finite")
    return float(val)


def gradient_sum(kind: LossKind, w, dataset, lam: float) -> np.ndarray:
    w, args = _dataset_args(kind, w, dataset)
    return K.grad_sum(kind.code, kind.width, float(lam), w, *args)


def full_gradient(kind: LossKind, w, dataset, lam: float) -> np.ndarray:
    return gradient_sum(kind, w, dataset, lam) / dataset.n


def smoothness_bound(kind: LossKind, dataset, lam: float) -> SmoothnessConstants:
    """Cheap (L, mu) bounds: L bounds every per-instance gradient's Lipschitz
    constant, mu bounds the strong convexity of every local average."""
    if dataset.n == 0:
        raise ValueError("dataset is empty")
    if isinstance(kind, Quadratic1D):
        qa, _ = kind.coefficients(dataset.block.ids)
        return SmoothnessConstants(2.0 * qa.max() + lam, 2.0 * qa.min() + lam)
    if not lam > 0:
        raise AssumptionError("generalized linear losses need lambda > 0 for strong convexity")
    top = float(dataset.block.sq_norms().max())
    scale = 0.25 if isinstance(kind, LogisticL2) else 1.0 / kind.width
    return SmoothnessConstants(top * scale + lam, float(lam))


def hessian(kind: LossKind, w, dataset, lam: float) -> np.ndarray:
    """Dense Hessian of the objective (desk-scale d only)."""
    w, args = _dataset_args(kind, w, dataset)
    block = dataset.block
    d = dataset.d
    if isinstance(kind, Quadratic1D):
        qa, _ = kind.coefficients(block.ids)
        return np.array([[2.0 * qa.mean() + lam]])
    X = block.dense(d)
    m = block.labels * (X @ w)
    curv = np.array([K.margin_curvature(kind.code, kind.width, float(t)) for t in m])
    return (X.T * curv) @ X / dataset.n + lam * np.eye(d)


def solve_optimum(kind: LossKind, dataset, lam: float, tol=1e-12, max_iter=200, w0=None):
    """Minimizer of the objective by damped Newton iterations.

    Stops once ``||grad P|| <= tol``; raises if that is not reached.
    """
    d = dataset.d
    w = np.zeros(d) if w0 is None else as_model_vector(w0, d).copy()
    best = None
    for _ in range(max_iter):
        g = full_gradient(kind, w, dataset, lam)
        gn = float(np.linalg.norm(g))
        if best is None or gn < best[0]:
            best = (gn, w.copy())
        if gn <= tol:
            return w
        step = np.linalg.solve(hessian(kind, w, dataset, lam), g)
        f0 = objective(kind, w, dataset, lam)
        t = 1.0
        while t > 1e-10:
            cand = w - t * step
            if objective(kind, cand, dataset, lam) <= f0 + 1e-4 * t * float(g @ (-step)) + 1e-15 * abs(f0):
                break
            t *= 0.5
        if np.array_equal(cand, w):
            break
        w = cand
    if best[0] <= tol:
        return best[1]
    raise ArithmeticError(f"optimum solve stalled at ||grad|| = {best[0]:.3e} > {tol:.1e}")
