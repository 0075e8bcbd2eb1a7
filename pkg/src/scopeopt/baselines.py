"""Reference methods: sequential SVRG and mini-batch distributed SVRG (DisSVRG).

DisSVRG runs its stochastic steps on the master and needs one broadcast and
one gather per inner step, which is what makes its message count grow with M.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .engine import (Combine, HyperParams, Recorder, _expect, blown_up, broadcast, gather,
                     local_gradient_sum, ordered_sum, shutdown_all, worker_rng)
from .errors import DivergenceError
from .model import as_model_vector, gradient_sum
from .protocol import (InnerParams, LocalGradSum, MiniBatchStats, Params, ProtocolError,
                       ProtocolOrderError, Shutdown)


@dataclass(frozen=True)
class MiniBatchParams:
    batch_size: int

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")


def svrg_sequential(dataset, hp: HyperParams, rng, kind, w0=None, evaluate=None):
    """Single-machine SVRG; indices are drawn M at a time per epoch."""
    n, d = dataset.n, dataset.d
    args = kind.kernel_args(dataset.block)
    w = np.zeros(d) if w0 is None else as_model_vector(w0, d).copy()
    rec = Recorder(evaluate, None)
    rec.record(0, w)
    for t in range(hp.T):
        z = gradient_sum(kind, w, dataset, hp.lam) / n
        picks = rng.integers(0, n, size=hp.M)
        u, bad = K.svrg_inner(kind.code, kind.width, float(hp.lam), w, z, float(hp.eta), picks,
                              hp.combine is Combine.AVERAGE, *args)
        if bad >= 0:
            raise DivergenceError(round=t, step=int(bad), metrics=rec.metrics)
        w = u
        rec.record(t + 1, w)
    return w, rec.metrics


def dissvrg_run(sessions: dict, hp: HyperParams, n: int, d: int, w0=None, evaluate=None,
                trace=None):
    """Master side of DisSVRG.

    ``trace(t, m, u_m, direction, batch_total)`` is called after every
    aggregated inner step when supplied.
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
            u = w.copy()
            acc = np.zeros(d)
            for m in range(hp.M):
                broadcast(sessions, InnerParams(t, m, u))
                stats = gather(sessions, MiniBatchStats, t, counter, "g_u", d)
                for s in stats:
                    if s.inner_step != m or s.g_w.shape != (d,):
                        raise ProtocolError(f"bad mini-batch stats from worker {s.worker_id}")
                total = sum(s.batch_size for s in stats)
                g_u = ordered_sum([s.g_u for s in stats]) / total
                # batch gradient at the round anchor w_t
                g_0 = ordered_sum([s.g_w for s in stats]) / total
                direction = g_u - g_0 + z
                if trace is not None:
                    trace(t, m, u, direction, total)
                u = u - hp.eta * direction
                if blown_up(u):
                    raise DivergenceError(round=t, step=m, metrics=rec.metrics)
                acc += u
            if hp.combine is Combine.AVERAGE and hp.M > 0:
                w = acc / hp.M
            else:
                w = u
            rec.record(t + 1, w)
    finally:
        shutdown_all(sessions)
    return w, rec.metrics


def dissvrg_worker_run(partition, hp: HyperParams, batch: MiniBatchParams, session, kind,
                       record=None):
    """Worker side of DisSVRG. ``record`` (a list) collects (t, m, sampled local indices)."""
    if batch.batch_size > partition.q:
        raise ValueError(f"batch size {batch.batch_size} exceeds shard size {partition.q}")
    k = partition.worker_id
    rng = worker_rng(hp.seed, k)
    args = kind.kernel_args(partition.block)
    t, w_t, next_step = -1, None, 0
    while True:
        msg = session.recv()
        if isinstance(msg, Shutdown):
            return
        if isinstance(msg, Params):
            if msg.round <= t:
                raise ProtocolOrderError(f"worker {k}: round {msg.round} after round {t}")
            t, w_t, next_step = msg.round, msg.w, 0
            session.send(LocalGradSum(t, k, local_gradient_sum(partition, w_t, kind, hp.lam)))
            continue
        msg = _expect(msg, InnerParams, t)
        if msg.inner_step != next_step:
            raise ProtocolOrderError(f"worker {k}: inner step {msg.inner_step}, expected {next_step}")
        next_step += 1
        picks = np.sort(rng.choice(partition.q, size=batch.batch_size, replace=False))
        if record is not None:
            record.append((t, msg.inner_step, picks))
        g_u = K.grad_sum_subset(kind.code, kind.width, float(hp.lam), msg.u_m, *args, picks)
        g_w = K.grad_sum_subset(kind.code, kind.width, float(hp.lam), w_t, *args, picks)
        session.send(MiniBatchStats(t, msg.inner_step, k, batch.batch_size, g_u, g_w))
