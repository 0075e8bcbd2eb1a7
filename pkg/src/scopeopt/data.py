"""Datasets, svmlight I/O, normalization and per-worker sharding."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import DataFormatError, DimensionError
from .model import InstanceBlock, LabeledInstance, Quadratic1D


class _Instances:
    instances: tuple
    d: int

    @property
    def n(self):
        return len(self.instances)

    def __len__(self):
        return len(self.instances)

    @cached_property
    def block(self) -> InstanceBlock:
        return InstanceBlock.build(self.instances)


@dataclass(frozen=True, eq=False)
class Dataset(_Instances):
    instances: tuple
    d: int

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))
        if not self.instances:
            raise DataFormatError("dataset has no instances")
        if self.d < 1:
            raise DimensionError("dimension must be at least 1")
        top = max(x.max_index for x in self.instances)
        if top >= self.d:
            raise DimensionError(f"feature index {top} out of range for d = {self.d}")

    def same_as(self, other):
        return (self.d == other.d and self.n == other.n
                and all(a.same_as(b) for a, b in zip(self.instances, other.instances)))


@dataclass(frozen=True, eq=False)
class Partition(_Instances):
    """One worker's exclusive shard; ``worker_id`` is 1-based."""

    worker_id: int
    instances: tuple
    d: int

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))

    @property
    def q(self):
        return len(self.instances)


@dataclass(frozen=True)
class ShuffledUniform:
    seed: int = 0


@dataclass(frozen=True)
class Contiguous:
    pass


@dataclass(frozen=True)
class LabelSorted:
    pass


def parse_svmlight(stream, d=None) -> Dataset:
    """Read svmlight/libsvm text (1-based indices on disk).

    ``stream`` may be bytes, str, or a binary/text file object. Any label
    <= 0 becomes -1. ``d`` overrides the inferred dimension.
    """
    if hasattr(stream, "read"):
        stream = stream.read()
    if isinstance(stream, (bytes, bytearray)):
        try:
            stream = bytes(stream).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DataFormatError(f"not UTF-8 text: {exc}") from None
    instances = []
    for lineno, raw in enumerate(io.StringIO(stream, newline=None), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            label = float(tokens[0])
        except ValueError:
            raise DataFormatError(f"bad label {tokens[0]!r}", lineno) from None
        if not math.isfinite(label):
            raise DataFormatError("label is not finite", lineno)
        idx, val = [], []
        for tok in tokens[1:]:
            key, sep, num = tok.partition(":")
            if not sep:
                raise DataFormatError(f"expected index:value, got {tok!r}", lineno)
            try:
                j, v = int(key), float(num)
            except ValueError:
                raise DataFormatError(f"bad feature {tok!r}", lineno) from None
            if j < 1:
                raise DataFormatError(f"feature index {j} is below 1", lineno)
            if idx and j - 1 <= idx[-1]:
                raise DataFormatError("feature indices must be strictly increasing", lineno)
            if not math.isfinite(v):
                raise DataFormatError(f"feature value {num!r} is not finite", lineno)
            idx.append(j - 1)
            val.append(v)
        instances.append(LabeledInstance(np.array(idx, dtype=np.int64), np.array(val),
                                         1 if label > 0 else -1, len(instances)))
    if not instances:
        raise DataFormatError("no instances in input")
    inferred = max(x.max_index for x in instances) + 1
    if d is None:
        d = max(inferred, 1)
    elif d < inferred:
        raise DataFormatError(f"dimension override {d} is below the largest index {inferred}")
    return Dataset(instances, d)


def dump_svmlight(dataset: Dataset) -> str:
    lines = []
    for x in dataset.instances:
        feats = " ".join(f"{j + 1}:{v!r}" for j, v in zip(x.indices.tolist(), x.values.tolist()))
        lines.append(f"{x.label:+d} {feats}".rstrip())
    return "\n".join(lines) + "\n"


def load_svmlight(path, d=None) -> Dataset:
    with open(path, "rb") as fh:
        return parse_svmlight(fh, d=d)


def normalize(dataset: Dataset) -> Dataset:
    """Scale each instance to unit L2 norm; all-zero rows are left alone."""
    out = []
    for x in dataset.instances:
        norm = float(np.sqrt(np.dot(x.values, x.values)))
        vals = x.values / norm if norm > 0 else x.values
        out.append(LabeledInstance(x.indices, vals, x.label, x.index))
    return Dataset(out, dataset.d)


def partition_sizes(n, p):
    base, extra = divmod(n, p)
    return [base + 1 if k < extra else base for k in range(p)]


def partition(dataset: Dataset, p: int, strategy=Contiguous()) -> list[Partition]:
    n = dataset.n
    if p < 1:
        raise ValueError("need at least one worker")
    if p > n:
        raise ValueError(f"cannot split {n} instances across {p} workers")
    if isinstance(strategy, Contiguous):
        order = np.arange(n)
    elif isinstance(strategy, ShuffledUniform):
        order = np.random.default_rng(strategy.seed).permutation(n)
    elif isinstance(strategy, LabelSorted):
        labels = np.array([x.label for x in dataset.instances])
        order = np.argsort(labels, kind="stable")
    else:
        raise TypeError(f"unknown partition strategy {strategy!r}")
    parts, start = [], 0
    for k, size in enumerate(partition_sizes(n, p), start=1):
        chunk = [dataset.instances[i] for i in order[start:start + size]]
        parts.append(Partition(k, chunk, dataset.d))
        start += size
    return parts


def synthetic_lr(n, d, seed=0) -> Dataset:
    """Unit-norm sparse-ish Gaussian features with labels from a noisy linear rule."""
    rng = np.random.default_rng(seed)
    w_true = rng.standard_normal(d)
    X = rng.standard_normal((n, d)) * (rng.random((n, d)) < 0.7)
    empty = ~X.any(axis=1)
    X[empty, rng.integers(0, d, size=int(empty.sum()))] = 1.0
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    scores = X @ w_true + 0.3 * rng.standard_normal(n)
    labels = np.where(scores > 0, 1, -1)
    return Dataset([LabeledInstance.from_dense(X[i], int(labels[i]), i) for i in range(n)], d)


TOY_COEFFS = ((1.0, 1.0), (100.0, 10.0))


def toy_table1():
    """Two 1-D quadratics, (w-1)^2 and 100(w-10)^2, one per worker.

    Returns (dataset, loss kind, analytic minimizer).
    """
    insts = [LabeledInstance(np.zeros(0, dtype=np.int64), np.zeros(0), 1, i)
             for i in range(len(TOY_COEFFS))]
    kind = Quadratic1D(TOY_COEFFS)
    return Dataset(insts, 1), kind, quadratic_minimizer(kind, 0.0)


def quadratic_minimizer(kind: Quadratic1D, lam: float, ids=None) -> float:
    a = np.array([c[0] for c in kind.coeffs])
    b = np.array([c[1] for c in kind.coeffs])
    if ids is not None:
        a, b = a[ids], b[ids]
    return float(np.sum(2 * a * b) / (np.sum(2 * a) + a.size * lam))
