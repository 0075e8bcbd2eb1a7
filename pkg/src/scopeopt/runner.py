"""Wire a configuration into a running master plus p workers."""

from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass

import numpy as np

from .baselines import MiniBatchParams, dissvrg_run, dissvrg_worker_run, svrg_sequential
from .config import ExperimentConfig
from .data import (Contiguous, LabelSorted, ShuffledUniform, load_svmlight, normalize,
                   partition, quadratic_minimizer, synthetic_lr, toy_table1)
from .engine import HyperParams, RunMetrics, make_evaluator, master_run, worker_rng, worker_run
from .errors import ConfigError, DimensionError, DivergenceError
from .model import LogisticL2, SmoothedHingeL2, full_gradient, solve_optimum
from .protocol import CommCounter, TcpListener, inproc_pair, tcp_connect

log = logging.getLogger(__name__)


@dataclass
class Problem:
    dataset: object
    kind: object
    lam: float
    wstar: np.ndarray | None


@dataclass
class RunResult:
    w: np.ndarray
    metrics: RunMetrics
    verdict: str
    error: Exception | None = None

    @property
    def rounds(self):
        return len(self.metrics) - 1

    @property
    def msgs(self):
        return self.metrics.rounds[-1].msgs if self.metrics.rounds else 0

    def summary(self):
        return f"verdict={self.verdict} rounds={self.rounds} msgs={self.msgs}"


def load_wstar(path, d):
    with open(path, encoding="utf-8") as fh:
        vals = np.array([float(t) for t in fh.read().split()])
    if vals.shape != (d,):
        raise DimensionError(f"w* file has {vals.size} entries, expected {d}")
    return vals


def load_problem(cfg: ExperimentConfig) -> Problem:
    if cfg.is_toy:
        dataset, kind, _ = toy_table1()
        return Problem(dataset, kind, cfg.lam, np.array([quadratic_minimizer(kind, cfg.lam)]))
    kind = LogisticL2() if cfg.loss == "logistic" else SmoothedHingeL2(cfg.hinge_width)
    syn = cfg.synthetic_args()
    if syn is not None:
        dataset = synthetic_lr(*syn)
    else:
        dataset = load_svmlight(cfg.data, d=cfg.d)
        if cfg.normalize:
            dataset = normalize(dataset)
    if cfg.wstar:
        wstar = load_wstar(cfg.wstar, dataset.d)
    elif syn is not None and cfg.lam > 0:
        wstar = solve_optimum(kind, dataset, cfg.lam)
    else:
        wstar = None
    return Problem(dataset, kind, cfg.lam, wstar)


def hyperparams(cfg: ExperimentConfig) -> HyperParams:
    return HyperParams(eta=cfg.eta, c=cfg.c, M=cfg.M, T=cfg.T, lam=cfg.lam,
                       combine=cfg.combine, seed=cfg.seed)


def strategy(cfg: ExperimentConfig):
    return {"shuffled": ShuffledUniform(cfg.seed), "contiguous": Contiguous(),
            "label_sorted": LabelSorted()}[cfg.partition]


def verdict(metrics: RunMetrics, problem: Problem, w_final, tol, diverged=False):
    """converged: error shrank by ``tol`` (distance to w* when known, else
    gradient norm); diverged: blow-up, or the error grew; otherwise maxiter."""
    if diverged:
        return "diverged"
    first, last = metrics.rounds[0], metrics.rounds[-1]
    if not math.isnan(first.dist_sq):
        start, end = math.sqrt(first.dist_sq), math.sqrt(last.dist_sq)
    else:
        w0 = np.zeros(problem.dataset.d)
        start = float(np.linalg.norm(full_gradient(problem.kind, w0, problem.dataset, problem.lam)))
        end = float(np.linalg.norm(full_gradient(problem.kind, w_final, problem.dataset,
                                                 problem.lam)))
    if end <= tol * start:
        return "converged"
    if end > start:
        return "diverged"
    return "maxiter"


class _Worker(threading.Thread):
    def __init__(self, fn, *args):
        super().__init__(daemon=True)
        self.fn, self.args, self.error = fn, args, None

    def run(self):
        try:
            self.fn(*self.args)
        except BaseException as exc:  # surfaced after join
            self.error = exc


def _worker_body(cfg, part, hp, kind, connect):
    session = connect()
    try:
        if cfg.algorithm == "dissvrg":
            dissvrg_worker_run(part, hp, MiniBatchParams(cfg.batch), session, kind)
        else:
            worker_run(part, hp, session, kind)
    finally:
        session.close()


def run_distributed(cfg: ExperimentConfig, problem: Problem, listener=None):
    """Run master in this thread and every worker in its own thread."""
    hp = hyperparams(cfg)
    parts = partition(problem.dataset, cfg.p, strategy(cfg))
    counter = CommCounter()
    sessions, threads = {}, []
    own_listener = False
    if cfg.transport == "tcp" and listener is None:
        listener = TcpListener(cfg.bind or "127.0.0.1:0")
        own_listener = True
    for part in parts:
        if cfg.transport == "inproc":
            master_side, worker_side = inproc_pair(counter)
            sessions[part.worker_id] = master_side
            connect = (lambda s: (lambda: s))(worker_side)
        else:
            connect = (lambda k: (lambda: tcp_connect(listener.address, k)))(part.worker_id)
        threads.append(_Worker(_worker_body, cfg, part, hp, problem.kind, connect))
    for th in threads:
        th.start()
    try:
        if cfg.transport == "tcp":
            sessions = listener.accept_workers(cfg.p, counter, timeout=60)
        return _drive_master(cfg, problem, hp, sessions)
    finally:
        for th in threads:
            th.join(timeout=60)
        for s in sessions.values():
            if cfg.transport == "tcp":
                s.close()
        if own_listener:
            listener.close()
        for th in threads:
            if th.error is not None and not isinstance(th.error, DivergenceError):
                log.error("worker failed: %r", th.error)


def _drive_master(cfg, problem, hp, sessions):
    d, n = problem.dataset.d, problem.dataset.n
    evaluate = make_evaluator(problem.kind, problem.dataset, problem.lam, problem.wstar)
    drive = dissvrg_run if cfg.algorithm == "dissvrg" else master_run
    try:
        w, metrics = drive(sessions, hp, n, d, evaluate=evaluate)
    except DivergenceError as err:
        return RunResult(np.full(d, np.nan), err.metrics or RunMetrics(), "diverged", err)
    return RunResult(w, metrics, verdict(metrics, problem, w, cfg.tol))


def run_sequential(cfg: ExperimentConfig, problem: Problem):
    hp = hyperparams(cfg)
    evaluate = make_evaluator(problem.kind, problem.dataset, problem.lam, problem.wstar)
    # same index stream a single SCOPE worker (id 1) would draw
    rng = worker_rng(hp.seed, 1)
    try:
        w, metrics = svrg_sequential(problem.dataset, hp, rng, problem.kind, evaluate=evaluate)
    except DivergenceError as err:
        return RunResult(np.full(problem.dataset.d, np.nan), err.metrics, "diverged", err)
    return RunResult(w, metrics, verdict(metrics, problem, w, cfg.tol))


def run_experiment(cfg: ExperimentConfig, problem: Problem | None = None) -> RunResult:
    problem = problem or load_problem(cfg)
    if cfg.algorithm == "svrg":
        return run_sequential(cfg, problem)
    return run_distributed(cfg, problem)


def serve_master(cfg: ExperimentConfig, problem: Problem | None = None, ready=None):
    """Multi-process master: wait for p workers on ``cfg.bind`` and run."""
    problem = problem or load_problem(cfg)
    hp = hyperparams(cfg)
    listener = TcpListener(cfg.bind)
    try:
        if ready is not None:
            ready(listener.address)
        sessions = listener.accept_workers(cfg.p, CommCounter())
        try:
            return _drive_master(cfg, problem, hp, sessions)
        finally:
            for s in sessions.values():
                s.close()
    finally:
        listener.close()


def serve_worker(cfg: ExperimentConfig, worker_id: int, problem: Problem | None = None):
    if not 1 <= worker_id <= cfg.p:
        raise ConfigError(f"worker_id: must be in 1..{cfg.p}")
    problem = problem or load_problem(cfg)
    parts = partition(problem.dataset, cfg.p, strategy(cfg))
    part = parts[worker_id - 1]
    _worker_body(cfg, part, hyperparams(cfg), problem.kind,
                 lambda: tcp_connect(cfg.bind, worker_id))
