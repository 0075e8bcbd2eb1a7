"""Command line entry point.

    scopeopt run [--config FILE] [--preset NAME] [--key value ...]
    scopeopt compare A.json B.json --out report.csv

Exit codes: 0 completed, 2 diverged, 3 config error, 4 I/O error,
5 protocol error.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys

from . import config as cfgmod
from .config import ConfigError, ExperimentConfig
from .errors import DataFormatError, DimensionError
from .protocol import FrameError, ProtocolError, TransportError
from .runner import RunResult, load_problem, run_experiment, serve_master, serve_worker

EXIT_OK, EXIT_DIVERGED, EXIT_CONFIG, EXIT_IO, EXIT_PROTOCOL = 0, 2, 3, 4, 5

log = logging.getLogger("scopeopt")

# flag name -> config key
FLAGS = {
    "--algorithm": "algorithm", "--data": "data", "--loss": "loss", "--p": "p",
    "--partition": "partition", "--eta": "eta", "--c": "c", "--bigm": "M", "--bigt": "T",
    "--lambda": "lam", "--batch": "batch", "--combine": "combine", "--seed": "seed",
    "--transport": "transport", "--bind": "bind", "--out": "out", "--wstar": "wstar",
    "--tol": "tol", "--dim": "d", "--normalize": "normalize", "--hinge-width": "hinge_width",
}


def _add_run_args(ap):
    ap.add_argument("--config", help="JSON config file; flags override its keys")
    ap.add_argument("--preset", choices=sorted(cfgmod.PRESETS))
    for flag, key in FLAGS.items():
        ap.add_argument(flag, dest="cfg_" + key, default=None, metavar=key.upper())
    ap.add_argument("--role", choices=("master", "worker"),
                    help="multi-process tcp mode; omit to run everything in this process")
    ap.add_argument("--worker-id", type=int)
    ap.add_argument("--dump-config", action="store_true",
                    help="print the resolved config as JSON and exit")


def build_parser():
    ap = argparse.ArgumentParser(prog="scopeopt", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    _add_run_args(sub.add_parser("run", help="run one experiment"))
    cmp_ = sub.add_parser("compare", help="run two configs on the same problem side by side")
    cmp_.add_argument("config_a")
    cmp_.add_argument("config_b")
    cmp_.add_argument("--out", required=True, help="objective-vs-messages CSV; a *_time.csv "
                                                  "with objective-vs-time is written next to it")
    return ap


def resolve_config(args) -> ExperimentConfig:
    base = cfgmod.load(args.config) if args.config else ExperimentConfig()
    raw = {}
    if args.preset:
        raw["preset"] = args.preset
    for key in FLAGS.values():
        val = getattr(args, "cfg_" + key)
        if val is not None:
            raw[key] = val
    if "bind" not in raw and base.bind is None and os.environ.get("SCOPE_BIND_ADDR"):
        raw["bind"] = os.environ["SCOPE_BIND_ADDR"]
    return cfgmod.from_dict(raw, base)


def write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _emit(cfg: ExperimentConfig, result: RunResult, stdout):
    text = result.metrics.to_csv()
    if cfg.out:
        write_text(cfg.out, text)
    else:
        stdout.write(text)
    stdout.write(result.summary() + "\n")
    stdout.flush()
    return EXIT_DIVERGED if result.verdict == "diverged" else EXIT_OK


def cmd_run(args, stdout):
    cfg = resolve_config(args)
    if args.dump_config:
        stdout.write(cfg.dumps() + "\n")
        return EXIT_OK
    if args.role is not None:
        if cfg.algorithm == "svrg":
            raise ConfigError("algorithm: svrg is sequential and has no master/worker roles")
        if cfg.transport != "tcp":
            raise ConfigError("transport: --role requires --transport tcp")
        if args.role == "worker":
            if args.worker_id is None:
                raise ConfigError("worker_id: --role worker requires --worker-id")
            serve_worker(cfg, args.worker_id)
            return EXIT_OK
        result = serve_master(cfg, ready=lambda a: log.info("master listening on %s", a))
        return _emit(cfg, result, stdout)
    return _emit(cfg, run_experiment(cfg), stdout)


def side_by_side(a: RunResult, b: RunResult):
    """Return (objective-vs-messages CSV, objective-vs-time CSV)."""
    fmt = lambda x: format(x, ".17g")
    n = max(len(a.metrics), len(b.metrics))
    msgs, times = io.StringIO(), io.StringIO()
    wm = csv.writer(msgs, lineterminator="\n")
    wt = csv.writer(times, lineterminator="\n")
    wm.writerow(["t", "objective_a", "dist_sq_a", "msgs_a", "bytes_a",
                 "objective_b", "dist_sq_b", "msgs_b", "bytes_b"])
    wt.writerow(["t", "objective_a", "wall_ms_a", "objective_b", "wall_ms_b"])
    for t in range(n):
        row_m, row_t = [str(t)], [str(t)]
        for res in (a, b):
            if t < len(res.metrics):
                r = res.metrics.rounds[t]
                row_m += [fmt(r.objective), fmt(r.dist_sq), str(r.msgs), str(r.bytes)]
                row_t += [fmt(r.objective), fmt(r.wall_ms)]
            else:
                row_m += [""] * 4
                row_t += [""] * 2
        wm.writerow(row_m)
        wt.writerow(row_t)
    return msgs.getvalue(), times.getvalue()


def compare_runs(cfg_a: ExperimentConfig, cfg_b: ExperimentConfig):
    if cfg_a.problem_key() != cfg_b.problem_key():
        raise ConfigError("compare: the two configs describe different problems")
    problem = load_problem(cfg_a)
    res_a = run_experiment(cfg_a, problem)
    res_b = run_experiment(cfg_b, problem)
    return res_a, res_b, side_by_side(res_a, res_b)


def cmd_compare(args, stdout):
    cfg_a, cfg_b = cfgmod.load(args.config_a), cfgmod.load(args.config_b)
    res_a, res_b, (by_msgs, by_time) = compare_runs(cfg_a, cfg_b)
    write_text(args.out, by_msgs)
    stem, ext = os.path.splitext(args.out)
    write_text(stem + "_time" + (ext or ".csv"), by_time)
    ratio = res_b.msgs / res_a.msgs if res_a.msgs else float("nan")
    stdout.write(f"a: {res_a.summary()}\nb: {res_b.summary()}\nmsgs_ratio={ratio:.17g}\n")
    return EXIT_OK


def main(argv=None, stdout=None):
    stdout = stdout or sys.stdout
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "compare":
            return cmd_compare(args, stdout)
        return cmd_run(args, stdout)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataFormatError, DimensionError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ProtocolError, TransportError, FrameError) as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL


if __name__ == "__main__":
    sys.exit(main())
