"""Acceptance gate: one PASS/FAIL line per criterion.

Lines are printed as each criterion finishes and repeated in the pytest
terminal summary. Run alone with ``pytest tests/test_acceptance.py -v``.
"""
import math
import os
import time

import numpy as np
import pytest

from conftest import run_inproc
from scopeopt import config as cfgmod
from scopeopt.baselines import MiniBatchParams, dissvrg_run, dissvrg_worker_run, svrg_sequential
from scopeopt.data import LabelSorted, ShuffledUniform, partition, synthetic_lr, toy_table1
from scopeopt.diagnostics import (expected_local_grad, exhaustive_local_grad, fixed_point_factor,
                                  quadratic_problem, theory_constants, variance_bound_holds)
from scopeopt.engine import HyperParams, make_evaluator, worker_rng
from scopeopt.model import LogisticL2, SmoothedHingeL2, full_gradient, smoothness_bound, solve_optimum
from scopeopt.protocol import MESSAGE_TYPES, FrameError, Params, decode, encode
from scopeopt.runner import run_experiment

RESULTS = {}


def verdict(num, title, ok, detail=""):
    line = f"{'PASS' if ok else 'FAIL'} criterion {num}: {title}" + (f" ({detail})" if detail else "")
    RESULTS[num] = line
    print(line)
    assert ok, line


def skip(num, title, reason):
    RESULTS[num] = f"SKIP criterion {num}: {title} ({reason})"
    print(RESULTS[num])
    pytest.skip(reason)


def _toy_run(c):
    cfg = cfgmod.from_dict({"preset": "toy", "c": c})
    return run_experiment(cfg)


def test_c1_toy_reproduction():
    _toy_run(10.0)   # compile kernels before timing
    t0 = time.perf_counter()
    out = {c: _toy_run(c) for c in (0.0, 1.0, 5.0, 10.0)}
    elapsed = time.perf_counter() - t0
    wstar = 2002 / 202
    ok = True
    for c, res in out.items():
        d0 = math.sqrt(res.metrics.rounds[0].dist_sq)
        assert d0 == pytest.approx(wstar, rel=1e-15)
        dT = math.sqrt(res.metrics.rounds[-1].dist_sq)
        if c < 10:
            ok &= res.verdict == "diverged" or not dT < d0
        else:
            ok &= res.verdict == "converged" and dT < 1e-3 * d0 and res.rounds == 100
    ok &= elapsed < 5.0
    verdicts = " ".join(f"c={c:g}:{r.verdict}" for c, r in out.items())
    verdict(1, "two-function toy: c = 0, 1, 5 fail and c = 10 converges", ok, f"{verdicts}; {elapsed:.2f}s")


def test_c2_svrg_equivalence():
    ds = synthetic_lr(500, 10, seed=0)
    kind, lam = LogisticL2(), 1e-2
    ok = True
    for combine in ("last", "average"):
        hp = HyperParams(eta=0.1, c=0.0, M=500, T=5, lam=lam, combine=combine, seed=11)
        seq, dist = [], []
        w_seq, _ = svrg_sequential(ds, hp, worker_rng(hp.seed, 1), kind,
                                   evaluate=lambda w: (seq.append(w.copy()), (0.0, 0.0))[1])
        w_dist, _ = run_inproc(partition(ds, 1), hp, kind,
                               evaluate=lambda w: (dist.append(w.copy()), (0.0, 0.0))[1])
        ok &= len(seq) == len(dist) == 6
        ok &= all(np.array_equal(a, b) for a, b in zip(seq, dist))
        ok &= np.array_equal(w_seq, w_dist)
    verdict(2, "SVRG reduction is bit-identical", ok, "6 iterates x 2 combine rules")


def _contraction_ratio(combine):
    ds = synthetic_lr(200, 5, seed=0)
    kind, lam = LogisticL2(), 1e-2
    s = smoothness_bound(kind, ds, lam)
    c = 1.01 * (s.L - s.mu) + 1e-6
    eta = 0.9 * min(2 * s.mu / (3 * s.L ** 2), 1 / (2 * s.mu + c))
    base = theory_constants(s.L, s.mu, eta, c, 1)
    M = (base.M_min_last if combine == "last" else base.M_min_avg) + 1
    tc = theory_constants(s.L, s.mu, eta, c, M)
    rate = tc.rate_last if combine == "last" else tc.rate_avg
    wstar = solve_optimum(kind, ds, lam)
    evaluate = make_evaluator(kind, ds, lam, wstar)
    parts = partition(ds, 4, LabelSorted())
    t0 = time.perf_counter()
    ratios = []
    for seed in range(20):
        hp = HyperParams(eta=eta, c=c, M=M, T=6, lam=lam, combine=combine, seed=seed)
        _, metrics = run_inproc(parts, hp, kind, evaluate=evaluate)
        d = np.array(metrics.column("dist_sq"))
        ratios.append(d[2:7] / d[1:6])
    return tc.valid, float(np.mean(ratios)), rate, M, time.perf_counter() - t0


@pytest.mark.parametrize("combine,name", [("last", "last-iterate"), ("average", "averaged")])
def test_c3_contraction(combine, name):
    valid, mean_ratio, rate, M, elapsed = _contraction_ratio(combine)
    ok = valid and rate < 1 and mean_ratio <= 1.05 * rate and elapsed < 60
    num = "3a" if combine == "last" else "3b"
    verdict(num, f"contraction bound, {name}", ok,
            f"M={M} mean ratio {mean_ratio:.4f} <= 1.05 x {rate:.6f}; {elapsed:.1f}s")


def test_c4_direction_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    lr = synthetic_lr(60, 5, seed=3)
    toy, qkind, wq = toy_table1()
    lam = 0.05
    lr_wstar = {k.code: solve_optimum(k, lr, lam) for k in (LogisticL2(), SmoothedHingeL2(0.5))}
    problems = [(lr, LogisticL2(), lam), (lr, SmoothedHingeL2(0.5), lam), (toy, qkind, 0.0)]
    worst, states = 0.0, 0
    for k in range(100):
        ds, kind, lam_ = problems[k % 3]
        parts = partition(ds, 2) if ds is toy else partition(ds, 4, LabelSorted())
        part = parts[rng.integers(len(parts))]
        u, w = rng.normal(0, 3, ds.d), rng.normal(0, 3, ds.d)
        z = full_gradient(kind, w, ds, lam_)
        c = rng.uniform(0, 20)
        a = expected_local_grad(part, u, w, z, c, kind, lam_)
        b = exhaustive_local_grad(part, u, w, z, c, kind, lam_)
        scale = max(np.max(np.abs(a)), np.max(np.abs(b)))
        worst = max(worst, float(np.max(np.abs(a - b)) / scale))
    holds = 0
    for k in range(500):
        ds, kind, lam_ = problems[k % 3]
        wstar = np.array([wq]) if ds is toy else lr_wstar[kind.code]
        parts = partition(ds, 2) if ds is toy else partition(ds, 4, LabelSorted())
        part = parts[rng.integers(len(parts))]
        L = smoothness_bound(kind, ds, lam_).L
        u, w = wstar + rng.normal(0, 2, ds.d), wstar + rng.normal(0, 2, ds.d)
        z = full_gradient(kind, w, ds, lam_)
        holds += variance_bound_holds(part, u, w, z, rng.uniform(0, 20), L, kind, lam_, wstar=wstar)
        states += 1
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-12 and holds == states and elapsed < 30
    verdict(4, "local direction mean and second-moment oracles", ok,
            f"max rel err {worst:.1e}; variance bound {holds}/{states}; {elapsed:.1f}s")


def _scope_msgs(p, T, M):
    ds = synthetic_lr(40, 3, seed=1)
    hp = HyperParams(eta=0.1, c=0.5, M=M, T=T, lam=0.1)
    _, metrics = run_inproc(partition(ds, p), hp, LogisticL2())
    return metrics.rounds[-1].msgs, metrics.rounds[-1].bytes


def test_c5_counters():
    ok, notes = True, []
    for p, T in ((2, 3), (4, 10)):
        msgs, _ = _scope_msgs(p, T, 10)
        ok &= msgs == 4 * p * T
        notes.append(f"scope p={p} T={T}: {msgs}")
    p, T, M = 3, 2, 7
    ds = synthetic_lr(30, 3, seed=1)
    hp = HyperParams(eta=0.1, M=M, T=T, lam=0.1)
    parts = partition(ds, p)
    _, metrics = run_inproc(parts, hp, LogisticL2(), driver=dissvrg_run,
                            worker=lambda part, s: dissvrg_worker_run(part, hp, MiniBatchParams(2),
                                                                      s, LogisticL2()))
    ok &= metrics.rounds[-1].msgs == 2 * p * T * (1 + M)
    notes.append(f"dissvrg: {metrics.rounds[-1].msgs}")
    ok &= _scope_msgs(2, 3, 10) == _scope_msgs(2, 3, 10000)
    verdict(5, "communication counters", ok, "; ".join(notes))


def test_c6_divergence_predictor():
    toy, kind, _ = toy_table1()
    factor = fixed_point_factor(quadratic_problem(kind, partition(toy, 2)), 0.0)
    toy_run = _toy_run(0.0)
    cfg = cfgmod.from_dict({"c": 0, "p": 4, "partition": "shuffled"})
    res = run_experiment(cfg)
    d = res.metrics.column("dist_sq")
    ok = abs(factor + 24.5025) <= 1e-9 and toy_run.verdict == "diverged" and d[-1] < 1e-3 * d[0]
    verdict(6, "c = 0 divergence predictor", ok,
            f"factor {factor:.10g}; toy {toy_run.verdict}; uniform LR ratio {d[-1] / d[0]:.2e}")


def test_c7_transport_equivalence():
    t0 = time.perf_counter()
    base = {"data": "synthetic_lr(400, 8, 5)", "p": 4, "c": 0.1, "M": 200, "T": 8,
            "partition": "label_sorted", "seed": 9}
    outs = {}
    for tr in ("inproc", "tcp"):
        res = run_experiment(cfgmod.from_dict({**base, "transport": tr}))
        outs[tr] = (res.metrics.to_csv(with_wall=False), res.summary())
    elapsed = time.perf_counter() - t0
    ok = outs["inproc"] == outs["tcp"] and elapsed < 30
    verdict(7, "inproc and tcp give identical metrics", ok, f"{elapsed:.1f}s")


def _random_message(rng):
    extremes = np.array([np.finfo(float).max, -np.finfo(float).max, np.finfo(float).tiny,
                         5e-324, -5e-324, 0.0, -0.0, 1.0])
    cls = MESSAGE_TYPES[rng.integers(len(MESSAGE_TYPES))]
    kwargs = {}
    for name, typ in cls.__annotations__.items():
        if typ == "int":
            kwargs[name] = int(rng.integers(0, 2 ** 32))
        else:
            n = int(rng.integers(0, 12))
            v = rng.normal(0, 10.0 ** rng.integers(-300, 300), n)
            mask = rng.random(n) < 0.3
            v[mask] = rng.choice(extremes, mask.sum())
            kwargs[name] = v
    return cls(**kwargs)


def test_c8_protocol_round_trip():
    rng = np.random.default_rng(8)
    same = 0
    for _ in range(1000):
        msg = _random_message(rng)
        raw = encode(msg)
        back = decode(raw)
        same += type(back) is type(msg) and encode(back) == raw and back == msg
    good = encode(Params(round=1, w=np.ones(3)))
    cases = {
        "bad_magic": good[:4] + b"\x00\x00" + good[6:],
        "unknown_tag": good[:6] + b"\xee" + good[7:],
        "truncated": good[:-3],
        "trailing_bytes": good + b"\x00",
        "oversize": (2 ** 31).to_bytes(4, "little") + good[4:],
    }
    codes_ok = 0
    for code, raw in cases.items():
        try:
            decode(raw)
        except FrameError as exc:
            codes_ok += exc.code == code
    ok = same == 1000 and codes_ok == len(cases)
    verdict(8, "protocol round trip and frame errors", ok,
            f"{same}/1000 round trips; {codes_ok}/{len(cases)} error codes")


def test_c9_declared_and_speedup():
    title = "declared out of scope: cluster-scale baselines and multi-machine speedup curves"
    cpus = os.cpu_count() or 1
    if cpus < 8:
        skip(9, title + "; p=8 speedup check", f"needs 8 cores, host has {cpus}")
    times = {}
    for p in (1, 8):
        ds = synthetic_lr(200, 5, seed=0)
        kind, lam = LogisticL2(), 1e-2
        s = smoothness_bound(kind, ds, lam)
        c = 1.01 * (s.L - s.mu) + 1e-6
        eta = 0.9 * min(2 * s.mu / (3 * s.L ** 2), 1 / (2 * s.mu + c))
        M = theory_constants(s.L, s.mu, eta, c, 1).M_min_last + 1
        hp = HyperParams(eta=eta, c=c, M=M, T=6, lam=lam)
        parts = partition(ds, p, ShuffledUniform(0))
        run_inproc(parts, hp, kind)
        t0 = time.perf_counter()
        for seed in range(20):
            run_inproc(parts, HyperParams(eta=eta, c=c, M=M, T=6, lam=lam, seed=seed), kind)
        times[p] = time.perf_counter() - t0
    verdict(9, title + "; p=8 speedup", times[8] < times[1],
            f"p=1 {times[1]:.2f}s, p=8 {times[8]:.2f}s")
