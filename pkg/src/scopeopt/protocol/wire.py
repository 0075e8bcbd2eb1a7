"""Byte-exact frame codec.

Frame layout (all integers little-endian)::

    u32 length of everything that follows
    0x5C 0x0E            magic
    u8  type tag
    u32 ...              header ints, in field order
    per vector: u32 element count, then float64 elements

Shutdown and Hello carry no vector; Shutdown has no header either.
"""

from __future__ import annotations

import struct
from dataclasses import fields

import numpy as np

from ..errors import ScopeError
from .messages import MESSAGE_TYPES, Message

MAGIC = b"\x5c\x0e"
U32_MAX = 0xFFFFFFFF
MAX_FRAME = 1 << 30   # receivers refuse to buffer anything larger
_U32 = struct.Struct("<I")


class FrameError(ScopeError, ValueError):
    code = "frame"


class BadMagic(FrameError):
    code = "bad_magic"


class UnknownTag(FrameError):
    code = "unknown_tag"


class Truncated(FrameError):
    code = "truncated"


class TrailingBytes(FrameError):
    code = "trailing_bytes"


class Oversize(FrameError):
    code = "oversize"


def _layout(cls):
    ints, vecs = [], []
    for f in fields(cls):
        (vecs if f.type == "np.ndarray" else ints).append(f.name)
    return ints, vecs


_LAYOUTS = {tag: _layout(cls) for tag, cls in MESSAGE_TYPES.items()}


def encode(msg: Message) -> bytes:
    ints, vecs = _LAYOUTS[msg.tag]
    parts = [MAGIC, bytes([msg.tag])]
    for name in ints:
        v = int(getattr(msg, name))
        if not 0 <= v <= U32_MAX:
            raise Oversize(f"{name} = {v} does not fit in u32")
        parts.append(_U32.pack(v))
    for name in vecs:
        arr = getattr(msg, name)
        if arr.shape[0] > U32_MAX:
            raise Oversize("vector length exceeds u32")
        parts.append(_U32.pack(arr.shape[0]))
        parts.append(arr.astype("<f8", copy=False).tobytes())
    body = b"".join(parts)
    if len(body) > MAX_FRAME:
        raise Oversize(f"frame of {len(body)} bytes exceeds {MAX_FRAME}")
    return _U32.pack(len(body)) + body


def frame_length(prefix: bytes) -> int:
    n = _U32.unpack(prefix)[0]
    if n > MAX_FRAME:
        raise Oversize(f"frame declares {n} bytes, limit is {MAX_FRAME}")
    return n


def decode(frame: bytes) -> Message:
    buf = memoryview(bytes(frame))
    if len(buf) < 4:
        raise Truncated("missing length prefix")
    declared = frame_length(buf[:4])
    if len(buf) - 4 < declared:
        raise Truncated(f"frame declares {declared} bytes, {len(buf) - 4} present")
    if len(buf) - 4 > declared:
        raise TrailingBytes(f"{len(buf) - 4 - declared} bytes after frame")
    body = buf[4:]
    if len(body) < 3:
        raise Truncated("frame shorter than magic + tag")
    if bytes(body[:2]) != MAGIC:
        raise BadMagic(f"bad magic {bytes(body[:2]).hex()}")
    tag = body[2]
    if tag not in MESSAGE_TYPES:
        raise UnknownTag(f"unknown tag 0x{tag:02x}")
    ints, vecs = _LAYOUTS[tag]
    pos = 3
    values = {}

    def take(nbytes):
        nonlocal pos
        if pos + nbytes > len(body):
            raise Truncated(f"need {nbytes} bytes at offset {pos}, frame has {len(body)}")
        chunk = body[pos:pos + nbytes]
        pos += nbytes
        return chunk

    for name in ints:
        values[name] = _U32.unpack(take(4))[0]
    for name in vecs:
        count = _U32.unpack(take(4))[0]
        values[name] = np.frombuffer(take(8 * count), dtype="<f8").astype(np.float64)
    if pos != len(body):
        raise TrailingBytes(f"{len(body) - pos} unread bytes inside frame")
    return MESSAGE_TYPES[tag](**values)
