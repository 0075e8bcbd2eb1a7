"""Experiment configuration: JSON documents, presets and validation."""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, fields, replace

from .errors import ConfigError

ALGORITHMS = ("scope", "svrg", "dissvrg")
LOSSES = ("logistic", "smoothed_hinge", "quadratic")
PARTITIONS = ("shuffled", "contiguous", "label_sorted")
TRANSPORTS = ("inproc", "tcp")
COMBINES = ("last", "average")

SYNTHETIC_RE = re.compile(r"^synthetic_lr\(\s*(\d+)\s*,\s*(\d+)\s*(?:,\s*(\d+)\s*)?\)$")

# documented presets; explicit keys override them
PRESETS = {
    "toy": dict(data="toy_table1", eta=1e-5, M=4000, T=100, lam=0.0, combine="last"),
    "small_lambda_lr": dict(lam=1e-4, c=1e-6),
}

ALIASES = {"lambda": "lam", "bigm": "M", "bigt": "T", "m": "M", "t": "T",
           "batch_size": "batch", "dim": "d"}


@dataclass(frozen=True)
class ExperimentConfig:
    algorithm: str = "scope"
    data: str = "synthetic_lr(1000, 10, 0)"
    loss: str = "logistic"
    p: int = 4
    partition: str = "shuffled"
    eta: float = 0.1
    c: float = 0.0
    M: int = 250
    T: int = 10
    lam: float = 1e-2
    combine: str = "last"
    seed: int = 0
    batch: int | None = None
    transport: str = "inproc"
    bind: str | None = None
    out: str | None = None
    wstar: str | None = None
    normalize: bool = True
    tol: float = 1e-3
    d: int | None = None
    hinge_width: float = 0.5

    @property
    def is_toy(self):
        return self.data == "toy_table1"

    def synthetic_args(self):
        m = SYNTHETIC_RE.match(self.data)
        if not m:
            return None
        n, d, seed = m.groups()
        return int(n), int(d), int(seed or 0)

    def problem_key(self):
        return (self.data, self.loss, self.lam, self.normalize, self.d, self.hinge_width)

    def to_dict(self):
        out = asdict(self)
        out["lambda"] = out.pop("lam")
        return out

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}
_INT = {"p", "M", "T", "seed", "batch", "d"}
_FLOAT = {"eta", "c", "lam", "tol", "hinge_width"}


def canonical_key(key: str) -> str:
    key = key.lstrip("-").replace("-", "_")
    key = ALIASES.get(key, ALIASES.get(key.lower(), key))
    if key not in _FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    return key


def coerce(key, value):
    if value is None:
        return None
    try:
        if key in _INT:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            if isinstance(value, bool):
                raise ValueError
            return int(value)
        if key in _FLOAT:
            if isinstance(value, bool):
                raise ValueError
            return float(value)
        if key == "normalize":
            if isinstance(value, str):
                low = value.lower()
                if low not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError
                return low in ("true", "1", "yes")
            return bool(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot interpret {value!r}") from None


def from_dict(raw: dict, base: ExperimentConfig | None = None) -> ExperimentConfig:
    values = {}
    preset = raw.get("preset")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"preset: unknown preset {preset!r} (known: {', '.join(PRESETS)})")
        values.update(PRESETS[preset])
    for key, value in raw.items():
        if key == "preset":
            continue
        k = canonical_key(key)
        values[k] = coerce(k, value)
    base = base or ExperimentConfig()
    # the toy problem is unregularized unless a lambda is given explicitly
    if values.get("data") == "toy_table1" and "lam" not in values and not base.is_toy:
        values["lam"] = 0.0
    cfg = replace(base, **values)
    return validate(cfg)


def loads(text: str, base=None) -> ExperimentConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config document must be a JSON object")
    return from_dict(raw, base)


def load(path, base=None) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return loads(text, base)


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    need(cfg.algorithm in ALGORITHMS, f"algorithm: must be one of {ALGORITHMS}")
    need(cfg.loss in LOSSES, f"loss: must be one of {LOSSES}")
    need(cfg.partition in PARTITIONS, f"partition: must be one of {PARTITIONS}")
    need(cfg.transport in TRANSPORTS, f"transport: must be one of {TRANSPORTS}")
    need(cfg.combine in COMBINES, f"combine: must be one of {COMBINES}")
    need(cfg.eta > 0, "eta: must be positive")
    need(cfg.c >= 0, "c: must be non-negative")
    need(cfg.M >= 0, "M: must be non-negative")
    need(cfg.T >= 0, "T: must be non-negative")
    need(cfg.lam >= 0, "lambda: must be non-negative")
    need(cfg.p >= 1, "p: must be at least 1")
    need(cfg.tol > 0, "tol: must be positive")
    need(0 <= cfg.seed < 2 ** 64, "seed: must be an unsigned 64-bit integer")
    need(cfg.hinge_width > 0, "hinge_width: must be positive")
    if cfg.is_toy:
        # the toy problem fixes its own shape: two quadratics, one per worker
        cfg = replace(cfg, p=2, loss="quadratic", partition="contiguous", d=None)
    else:
        need(cfg.loss != "quadratic", "loss: quadratic is only available with data=toy_table1")
    if cfg.algorithm == "dissvrg":
        need(cfg.batch is not None, "batch: dissvrg requires a per-worker batch size")
        need(cfg.batch >= 1, "batch: must be at least 1")
    if cfg.data.startswith("synthetic_lr"):
        need(cfg.synthetic_args() is not None, "data: expected synthetic_lr(n, d[, seed])")
    return cfg
