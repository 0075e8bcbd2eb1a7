"""SCOPE master and worker loops.

Each round the master broadcasts ``w_t``, sums the workers' local gradient
sums into the full gradient ``z``, broadcasts ``z``, then averages the
workers' locally updated parameters. Workers run ``M`` proximal
variance-reduced steps on their own shard only.
"""

from __future__ import annotations

import csv
import enum
import io
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .errors import DimensionError, DivergenceError
from .model import as_model_vector, full_gradient, objective
from .protocol import (FullGrad, LocalGradSum, LocalUpdate, Params, ProtocolError,
                       ProtocolOrderError, Shutdown)

CSV_HEADER = ("t", "objective", "dist_sq", "msgs", "bytes", "wall_ms")


class Combine(str, enum.Enum):
    LAST = "last"
    AVERAGE = "average"


@dataclass(frozen=True)
class HyperParams:
    eta: float
    c: float = 0.0
    M: int = 1
    T: int = 1
    lam: float = 0.0
    combine: Combine = Combine.LAST
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "combine", Combine(self.combine))
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if not self.c >= 0:
            raise ValueError("c must be non-negative")
        if self.M < 0 or self.T < 0:
            raise ValueError("M and T must be non-negative")
        if not self.lam >= 0:
            raise ValueError("lambda must be non-negative")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")


def worker_rng(seed, worker_id):
    return np.random.default_rng(seed ^ worker_id)


@dataclass
class RoundRecord:
    t: int
    objective: float
    dist_sq: float
    msgs: int
    bytes: int
    wall_ms: float


def _fmt(x):
    return format(x, ".17g")


@dataclass
class RunMetrics:
    rounds: list = field(default_factory=list)

    def add(self, rec: RoundRecord):
        if rec.t != len(self.rounds):
            raise ValueError("round records must be contiguous from 0")
        self.rounds.append(rec)

    def __len__(self):
        return len(self.rounds)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rounds])

    def csv_rows(self, with_wall=True):
        cols = CSV_HEADER if with_wall else CSV_HEADER[:-1]
        rows = []
        for r in self.rounds:
            row = [str(r.t), _fmt(r.objective), _fmt(r.dist_sq), str(r.msgs), str(r.bytes)]
            if with_wall:
                row.append(_fmt(r.wall_ms))
            rows.append(row)
        return [list(cols)] + rows

    def to_csv(self, with_wall=True) -> str:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows(self.csv_rows(with_wall))
        return buf.getvalue()


def make_evaluator(kind, dataset, lam, wstar=None):
    """Return ``w -> (objective, squared distance to wstar or nan)``."""
    ws = None if wstar is None else np.asarray(wstar, dtype=np.float64)

    def evaluate(w):
        obj = objective(kind, w, dataset, lam)
        dist = float(np.dot(w - ws, w - ws)) if ws is not None else float("nan")
        return obj, dist

    return evaluate


class Recorder:
    def __init__(self, evaluate, counter):
        self.evaluate = evaluate
        self.counter = counter
        self.metrics = RunMetrics()
        self.start = time.perf_counter()

    def record(self, t, w):
        obj, dist = self.evaluate(w) if self.evaluate else (float("nan"), float("nan"))
        snap = self.counter.snapshot() if self.counter else None
        self.metrics.add(RoundRecord(t, obj, dist, snap.messages if snap else 0,
                                     snap.payload_bytes if snap else 0,
                                     (time.perf_counter() - self.start) * 1e3))


def blown_up(v):
    s = float(np.dot(v, v))
    return not s <= K.DIVERGENCE_NORM_SQ


def ordered_sum(vectors):
    total = vectors[0].copy()
    for v in vectors[1:]:
        total += v
    return total


def local_gradient_sum(partition, w, kind, lam) -> np.ndarray:
    """Unnormalized sum of per-instance gradients over the shard, in shard order."""
    w = as_model_vector(w, partition.d)
    if partition.q == 0:
        raise ValueError("partition is empty")
    return K.grad_sum(kind.code, kind.width, float(lam), w, *kind.kernel_args(partition.block))


def worker_inner_loop(partition, w_t, z, hp: HyperParams, rng, kind, round_index=None,
                      trace=None):
    """M proximal SVRG steps from ``u_0 = w_t`` on one shard.

    Uses the pre-shifted form ``u <- (1 - c*eta) u - eta (g_i(u) - g_i(w_t) + zhat)``
    with ``zhat = z - c * w_t``. Indices are drawn uniformly with replacement.
    Returns ``u_M`` or the mean of ``u_1..u_M`` depending on ``hp.combine``.
    ``trace``, if given, must be an (M, d) array and receives every iterate.
    """
    d = partition.d
    w_t = as_model_vector(w_t, d)
    z = np.ascontiguousarray(z, dtype=np.float64)
    if z.shape != (d,):
        raise DimensionError("full gradient has the wrong length")
    zhat = z - hp.c * w_t
    picks = rng.integers(0, partition.q, size=hp.M)
    if trace is None:
        trace = np.empty((0, d))
    out, bad = K.scope_inner(kind.code, kind.width, float(hp.lam), w_t, zhat, float(hp.eta),
                             float(hp.c), picks, hp.combine is Combine.AVERAGE,
                             *kind.kernel_args(partition.block), trace)
    if bad >= 0:
        err = DivergenceError(round=round_index, step=int(bad), worker_id=partition.worker_id)
        err.iterate = out
        raise err
    return out


def _expect(msg, cls, round_, worker_id=None):
    if not isinstance(msg, cls):
        raise ProtocolError(f"expected {cls.__name__}, got {type(msg).__name__}")
    if msg.round != round_:
        raise ProtocolOrderError(f"{cls.__name__} for round {msg.round}, expected {round_}")
    if worker_id is not None and msg.worker_id != worker_id:
        raise ProtocolError(f"{cls.__name__} from worker {msg.worker_id} on session {worker_id}")
    return msg


def broadcast(sessions, msg):
    for k in sorted(sessions):
        sessions[k].send(msg)


def shutdown_all(sessions):
    for k in sorted(sessions):
        try:
            sessions[k].send(Shutdown())
        except Exception:
            pass


def gather(sessions, cls, round_, counter, field_name, d):
    """Blocking receive of one ``cls`` from every worker, ordered by worker_id."""
    out = []
    for k in sorted(sessions):
        msg = _expect(sessions[k].recv(), cls, round_, k)
        vec = getattr(msg, field_name)
        if vec.shape != (d,):
            raise ProtocolError(f"worker {k} sent a length-{vec.shape[0]} vector, expected {d}")
        out.append(msg)
    if counter is not None:
        counter.barrier()
    return out


def master_run(sessions: dict, hp: HyperParams, n: int, d: int, w0=None, evaluate=None,
               on_round=None):
    """Drive ``hp.T`` SCOPE rounds over connected worker sessions.

    ``sessions`` maps worker_id (1..p) to the master-side session. Returns
    ``(w_T, RunMetrics)``; a diverging worker aborts the run with a
    DivergenceError carrying the partial metrics. Workers are always sent
    Shutdown on exit.
    """
    p = len(sessions)
    if sorted(sessions) != list(range(1, p + 1)):
        raise ValueError("sessions must be keyed 1..p")
    counter = sessions[1].counter
    w = np.zeros(d) if w0 is None else as_model_vector(w0, d).copy()
    rec = Recorder(evaluate, counter)
    rec.record(0, w)
    try:
        for t in range(hp.T):
            broadcast(sessions, Params(t, w))
            sums = gather(sessions, LocalGradSum, t, counter, "z_k", d)
            z = ordered_sum([m.z_k for m in sums]) / n
            broadcast(sessions, FullGrad(t, z))
            updates = gather(sessions, LocalUpdate, t, counter, "u_tilde", d)
            for m in updates:
                if blown_up(m.u_tilde):
                    raise DivergenceError(round=t, worker_id=m.worker_id, metrics=rec.metrics)
            w = ordered_sum([m.u_tilde for m in updates]) / p
            rec.record(t + 1, w)
            if on_round is not None:
                on_round(t + 1, w)
    finally:
        shutdown_all(sessions)
    return w, rec.metrics


def worker_run(partition, hp: HyperParams, session, kind, on_update=None):
    """Serve SCOPE rounds until Shutdown arrives."""
    rng = worker_rng(hp.seed, partition.worker_id)
    k = partition.worker_id
    last_round = -1
    while True:
        msg = session.recv()
        if isinstance(msg, Shutdown):
            return
        if not isinstance(msg, Params):
            raise ProtocolError(f"worker {k} expected Params, got {type(msg).__name__}")
        if msg.round <= last_round:
            raise ProtocolOrderError(f"worker {k}: round {msg.round} after round {last_round}")
        t = last_round = msg.round
        w_t = msg.w
        session.send(LocalGradSum(t, k, local_gradient_sum(partition, w_t, kind, hp.lam)))
        msg = session.recv()
        if isinstance(msg, Shutdown):
            return
        z = _expect(msg, FullGrad, t).z
        try:
            u = worker_inner_loop(partition, w_t, z, hp, rng, kind, round_index=t)
        except DivergenceError as err:
            # the master applies the same blow-up test and aborts the run
            u = err.iterate
        if on_update is not None:
            on_update(t, u)
        session.send(LocalUpdate(t, k, u))
