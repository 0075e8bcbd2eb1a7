"""Master/worker message types.

Equality is bit-exact: two messages are equal iff they encode to the same
frame (so NaN payloads compare by bit pattern, not by IEEE rules).
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np


class Message:
    tag: int = -1
    counted = True  # whether comm counters include this type

    def __eq__(self, other):
        if not isinstance(other, Message):
            return NotImplemented
        from .wire import encode
        return encode(self) == encode(other)

    __hash__ = None

    def _vec(self, name):
        v = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
        if v.ndim != 1:
            raise ValueError(f"{type(self).__name__}.{name} must be 1-D")
        object.__setattr__(self, name, v)

    def __post_init__(self):
        for f in fields(self):
            if f.type == "np.ndarray":
                self._vec(f.name)
            elif getattr(self, f.name) < 0:
                raise ValueError(f"{type(self).__name__}.{f.name} must be non-negative")


@dataclass(frozen=True, eq=False)
class Hello(Message):
    worker_id: int
    tag = 0x00
    counted = False


@dataclass(frozen=True, eq=False)
class Params(Message):
    round: int
    w: np.ndarray
    tag = 0x01


@dataclass(frozen=True, eq=False)
class LocalGradSum(Message):
    round: int
    worker_id: int
    z_k: np.ndarray
    tag = 0x02


@dataclass(frozen=True, eq=False)
class FullGrad(Message):
    round: int
    z: np.ndarray
    tag = 0x03


@dataclass(frozen=True, eq=False)
class LocalUpdate(Message):
    round: int
    worker_id: int
    u_tilde: np.ndarray
    tag = 0x04


@dataclass(frozen=True, eq=False)
class MiniBatchStats(Message):
    round: int
    inner_step: int
    worker_id: int
    batch_size: int
    g_u: np.ndarray
    g_w: np.ndarray
    tag = 0x05


@dataclass(frozen=True, eq=False)
class InnerParams(Message):
    round: int
    inner_step: int
    u_m: np.ndarray
    tag = 0x06


@dataclass(frozen=True, eq=False)
class Shutdown(Message):
    tag = 0x07
    counted = False


MESSAGE_TYPES = {cls.tag: cls for cls in
                 (Hello, Params, LocalGradSum, FullGrad, LocalUpdate,
                  MiniBatchStats, InnerParams, Shutdown)}
