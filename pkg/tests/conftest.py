import threading

import numpy as np
import pytest

from scopeopt.data import synthetic_lr, toy_table1
from scopeopt.engine import master_run, worker_run
from scopeopt.model import LogisticL2, SmoothedHingeL2, solve_optimum
from scopeopt.protocol import CommCounter, inproc_pair


@pytest.fixture(scope="session")
def lr_small():
    """60 unit-norm instances in 5 dimensions."""
    return synthetic_lr(60, 5, seed=3)


@pytest.fixture(scope="session")
def lr_problem():
    ds = synthetic_lr(200, 5, seed=7)
    lam = 0.05
    kind = LogisticL2()
    return ds, kind, lam, solve_optimum(kind, ds, lam)


@pytest.fixture(scope="session")
def toy():
    return toy_table1()


@pytest.fixture(params=["logistic", "hinge"])
def glm_kind(request):
    return LogisticL2() if request.param == "logistic" else SmoothedHingeL2(0.5)


def rel_close(a, b, rtol):
    a, b = np.asarray(a), np.asarray(b)
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-300)
    return np.max(np.abs(a - b)) / scale < rtol


def run_inproc(parts, hp, kind, evaluate=None, driver=None, worker=None, worker_kwargs=None,
               **master_kwargs):
    """Master in this thread, one thread per worker, in-process sessions."""
    driver = driver or master_run
    worker = worker or (lambda part, sess: worker_run(part, hp, sess, kind))
    counter = CommCounter()
    sessions, threads, errors = {}, [], []
    for part in parts:
        m, w = inproc_pair(counter)
        sessions[part.worker_id] = m

        def body(part=part, w=w):
            try:
                worker(part, w)
            except BaseException as exc:
                errors.append(exc)
            finally:
                w.close()

        threads.append(threading.Thread(target=body, daemon=True))
    for th in threads:
        th.start()
    n = sum(p.q for p in parts)
    try:
        return driver(sessions, hp, n, parts[0].d, evaluate=evaluate, **master_kwargs)
    finally:
        for th in threads:
            th.join(30)
        if errors:
            raise errors[0]


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(mod.RESULTS, key=str):
        terminalreporter.write_line(mod.RESULTS[key])
