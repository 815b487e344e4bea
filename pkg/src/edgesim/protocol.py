"""Wire protocol for the device control channel.

Messages are UTF-8, newline-delimited JSON objects, one message per line,
with a ``type`` tag selecting the variant. Field names are part of the
contract; unknown extra fields are ignored on decode. The codec is total:
any constructible message survives ``decode(encode(m)) == m``, and any
byte line that does not parse raises :class:`ProtocolError` instead of
crashing the endpoint.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

ERROR_CODES = frozenset(
    {"NOT_CALIBRATED", "BUSY", "OUT_OF_RANGE", "BAD_COMMAND", "PROTOCOL"}
)
CONDITIONS = ("EL", "EH", "SL", "SH", "NC")
AXES = ("surface", "edge")
PROTOCOL_VERSION = 1


class ProtocolError(ValueError):
    """Malformed or unintelligible wire data."""


def _check(cond: bool, detail: str) -> None:
    if not cond:
        raise ProtocolError(detail)


def _is_number(v: object) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


@dataclass(frozen=True)
class Hello:
    version: int = PROTOCOL_VERSION

    def __post_init__(self) -> None:
        _check(isinstance(self.version, int) and not isinstance(self.version, bool)
               and self.version >= 1, "hello: version must be a positive integer")

    def to_dict(self) -> dict:
        return {"type": "hello", "version": self.version}


@dataclass(frozen=True)
class Calibrate:
    target: str  # "surface" | "edge"

    def __post_init__(self) -> None:
        _check(self.target in AXES, f"calibrate: target must be one of {AXES}")

    def to_dict(self) -> dict:
        return {"type": "calibrate", "target": self.target}


@dataclass(frozen=True)
class Move:
    surface_mm: float | None = None
    edge_mm: float | None = None

    def __post_init__(self) -> None:
        _check(self.surface_mm is not None or self.edge_mm is not None,
               "move: needs surface_mm and/or edge_mm")
        for name, v in (("surface_mm", self.surface_mm), ("edge_mm", self.edge_mm)):
            if v is not None:
                _check(_is_number(v), f"move: {name} must be a finite number")
                object.__setattr__(self, name, float(v))

    def to_dict(self) -> dict:
        d: dict = {"type": "move"}
        if self.surface_mm is not None:
            d["surface_mm"] = self.surface_mm
        if self.edge_mm is not None:
            d["edge_mm"] = self.edge_mm
        return d


@dataclass(frozen=True)
class Preset:
    condition: str  # EL | EH | SL | SH | NC

    def __post_init__(self) -> None:
        _check(self.condition in CONDITIONS,
               f"preset: condition must be one of {CONDITIONS}")

    def to_dict(self) -> dict:
        return {"type": "preset", "condition": self.condition}


@dataclass(frozen=True)
class Status:
    def to_dict(self) -> dict:
        return {"type": "status"}


@dataclass(frozen=True)
class State:
    surface_mm: float
    edge_mm: float
    moving: bool
    calibrated_surface: bool
    calibrated_edge: bool

    def __post_init__(self) -> None:
        _check(_is_number(self.surface_mm), "state: surface_mm must be finite")
        _check(_is_number(self.edge_mm), "state: edge_mm must be finite")
        object.__setattr__(self, "surface_mm", float(self.surface_mm))
        object.__setattr__(self, "edge_mm", float(self.edge_mm))
        for name in ("moving", "calibrated_surface", "calibrated_edge"):
            _check(isinstance(getattr(self, name), bool), f"state: {name} must be bool")

    def to_dict(self) -> dict:
        return {
            "type": "state",
            "surface_mm": self.surface_mm,
            "edge_mm": self.edge_mm,
            "moving": self.moving,
            "calibrated_surface": self.calibrated_surface,
            "calibrated_edge": self.calibrated_edge,
        }


@dataclass(frozen=True)
class Stream:
    enable: bool
    rate_hz: float = 10.0

    def __post_init__(self) -> None:
        _check(isinstance(self.enable, bool), "stream: enable must be bool")
        _check(_is_number(self.rate_hz) and self.rate_hz > 0,
               "stream: rate_hz must be a positive number")
        object.__setattr__(self, "rate_hz", float(self.rate_hz))

    def to_dict(self) -> dict:
        return {"type": "stream", "enable": self.enable, "rate_hz": self.rate_hz}


@dataclass(frozen=True)
class Frame:
    t_ms: int
    cells: tuple[float, ...]  # 36 values, row-major 6x6

    def __post_init__(self) -> None:
        _check(isinstance(self.t_ms, int) and not isinstance(self.t_ms, bool)
               and self.t_ms >= 0, "frame: t_ms must be a non-negative integer")
        cells = tuple(self.cells)
        _check(len(cells) == 36, f"frame: expected 36 cells, got {len(cells)}")
        for v in cells:
            _check(_is_number(v) and v >= 0, "frame: cells must be finite and >= 0")
        object.__setattr__(self, "cells", tuple(float(v) for v in cells))

    def to_dict(self) -> dict:
        return {"type": "frame", "t_ms": self.t_ms, "cells": list(self.cells)}


@dataclass(frozen=True)
class ErrorMsg:
    code: str
    detail: str = ""

    def __post_init__(self) -> None:
        _check(self.code in ERROR_CODES, f"error: code must be one of {sorted(ERROR_CODES)}")
        _check(isinstance(self.detail, str), "error: detail must be a string")

    def to_dict(self) -> dict:
        return {"type": "error", "code": self.code, "detail": self.detail}


Message = Hello | Calibrate | Move | Preset | Status | State | Stream | Frame | ErrorMsg

_MESSAGE_TYPES = {
    "hello": Hello,
    "calibrate": Calibrate,
    "move": Move,
    "preset": Preset,
    "status": Status,
    "state": State,
    "stream": Stream,
    "frame": Frame,
    "error": ErrorMsg,
}

# decode-side field plans: (field, wire_key, required)
_FIELD_PLANS: dict[str, tuple[tuple[str, bool], ...]] = {
    "hello": (("version", True),),
    "calibrate": (("target", True),),
    "move": (("surface_mm", False), ("edge_mm", False)),
    "preset": (("condition", True),),
    "status": (),
    "state": (
        ("surface_mm", True), ("edge_mm", True), ("moving", True),
        ("calibrated_surface", True), ("calibrated_edge", True),
    ),
    "stream": (("enable", True), ("rate_hz", False)),
    "frame": (("t_ms", True), ("cells", True)),
    "error": (("code", True), ("detail", False)),
}


def dumps_line(obj: dict) -> bytes:
    """One compact JSON object as a newline-terminated UTF-8 line."""
    return json.dumps(obj, separators=(",", ":"), allow_nan=False).encode("utf-8") + b"\n"


def encode(msg: Message) -> bytes:
    """Encode a message as one newline-terminated line."""
    return dumps_line(msg.to_dict())


def decode(line: bytes | str) -> Message:
    """Parse one line into a message; raises ProtocolError on anything else."""
    if isinstance(line, bytes):
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ProtocolError(f"not valid UTF-8: {exc}") from None
    text = line.strip()
    _check(bool(text), "empty line")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"not valid JSON: {exc.msg}") from None
    _check(isinstance(obj, dict), "message must be a JSON object")
    tag = obj.get("type")
    _check(isinstance(tag, str), "missing required field: type")
    cls = _MESSAGE_TYPES.get(tag)
    _check(cls is not None, f"unknown message type {tag!r}")
    kwargs = {}
    for field_name, required in _FIELD_PLANS[tag]:
        if field_name in obj:
            value = obj[field_name]
            if field_name == "cells":
                _check(isinstance(value, list), "frame: cells must be a list")
                value = tuple(value)
            kwargs[field_name] = value
        elif required:
            raise ProtocolError(f"{tag}: missing required field: {field_name}")
    try:
        return cls(**kwargs)  # field validation happens in __post_init__
    except ProtocolError:
        raise
    except (TypeError, ValueError) as exc:
        raise ProtocolError(f"{tag}: {exc}") from None
