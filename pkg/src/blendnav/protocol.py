"""Wire protocol between operator console and session server.

Messages travel as newline-delimited canonical text: a JSON object whose
top-level keys are always ordered (type, seq, sent_at, body), whose body
keys are sorted, and whose floats are printed with exactly six decimals.
Float fields are quantized to that precision at construction, so
decode(encode(m)) == m and encode(decode(line)) == line both hold exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .errors import ProtocolError

PROTOCOL_VERSION = 1

_FLOAT = "float"
_INT = "int"
_STR = "str"
_VEC2 = "vec2"          # [x, y]
_VEC3 = "vec3"          # [x, y, theta]
_VEC2_LIST = "vec2s"    # [[x, y], ...]
_VEC2_OPT = "vec2?"     # [] or [x, y]

SCHEMAS = {
    "hello": {"version": _INT, "role": _STR},
    "config": {"dt": _FLOAT, "horizon": _INT, "v_max": _FLOAT},
    "command": {"vx": _FLOAT, "vy": _FLOAT},
    "world_state": {
        "tick": _INT, "time": _FLOAT, "robot": _VEC3, "agents": _VEC2_LIST,
        "goal": _VEC2_OPT, "operator_weight": _FLOAT, "robot_weight": _FLOAT,
        "planned_path": _VEC2_LIST, "staleness_s": _FLOAT,
    },
    "blend_diag": {
        "tick": _INT, "total": _FLOAT, "attraction": _FLOAT,
        "cooperation": _FLOAT, "operator": _FLOAT, "robot": _FLOAT,
        "agents": _FLOAT, "fallback": _INT,
    },
    "error": {"message": _STR},
    "bye": {},
}


def _q6(x: float) -> float:
    """Quantize to the wire's six-decimal float grid; -0.0 normalizes to 0.0."""
    if not math.isfinite(x):
        raise ProtocolError(f"non-finite float {x!r} cannot be encoded")
    q = float(f"{float(x):.6f}")
    return 0.0 if q == 0.0 else q


def _check_field(msg_type: str, key: str, kind: str, value):
    def fail(why):
        raise ProtocolError(f"{msg_type}.{key}: {why}")
    if kind == _INT:
        if not isinstance(value, int) or isinstance(value, bool):
            fail(f"expected integer, got {value!r}")
        return value
    if kind == _FLOAT:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            fail(f"expected number, got {value!r}")
        return _q6(float(value))
    if kind == _STR:
        if not isinstance(value, str):
            fail(f"expected string, got {value!r}")
        return value
    if kind in (_VEC2, _VEC3):
        n = 2 if kind == _VEC2 else 3
        if not isinstance(value, (list, tuple)) or len(value) != n:
            fail(f"expected {n}-vector, got {value!r}")
        return [_q6(float(v)) for v in value]
    if kind == _VEC2_OPT:
        if not isinstance(value, (list, tuple)) or len(value) not in (0, 2):
            fail(f"expected empty or 2-vector, got {value!r}")
        return [_q6(float(v)) for v in value]
    if kind == _VEC2_LIST:
        if not isinstance(value, (list, tuple)):
            fail(f"expected list of 2-vectors, got {value!r}")
        out = []
        for item in value:
            if not isinstance(item, (list, tuple)) or len(item) != 2:
                fail(f"expected 2-vector element, got {item!r}")
            out.append([_q6(float(v)) for v in item])
        return out
    raise AssertionError(f"unknown field kind {kind}")


@dataclass(frozen=True)
class WireMessage:
    """One protocol message; float payloads are quantized on construction."""

    type: str
    seq: int
    sent_at: float
    body: dict

    def __post_init__(self):
        schema = SCHEMAS.get(self.type)
        if schema is None:
            raise ProtocolError(f"unknown message type {self.type!r}")
        if not isinstance(self.seq, int) or isinstance(self.seq, bool) or self.seq < 0:
            raise ProtocolError(f"seq must be a nonnegative integer, got {self.seq!r}")
        if isinstance(self.sent_at, bool) or not isinstance(self.sent_at, (int, float)):
            raise ProtocolError(f"sent_at must be a number, got {self.sent_at!r}")
        object.__setattr__(self, "sent_at", _q6(float(self.sent_at)))
        body = dict(self.body)
        unknown = set(body) - set(schema)
        if unknown:
            raise ProtocolError(f"{self.type}: unknown body field(s) {sorted(unknown)}")
        missing = set(schema) - set(body)
        if missing:
            raise ProtocolError(f"{self.type}: missing body field(s) {sorted(missing)}")
        canon = {k: _check_field(self.type, k, schema[k], body[k]) for k in sorted(schema)}
        object.__setattr__(self, "body", canon)

    def __eq__(self, other):
        if not isinstance(other, WireMessage):
            return NotImplemented
        return (self.type, self.seq, self.sent_at, self.body) == \
               (other.type, other.seq, other.sent_at, other.body)

    def __hash__(self):
        return hash((self.type, self.seq, self.sent_at))


def _canon_value(kind: str, value) -> str:
    if kind == _INT:
        return str(value)
    if kind == _FLOAT:
        return f"{value:.6f}"
    if kind == _STR:
        return json.dumps(value, ensure_ascii=True)
    if kind in (_VEC2, _VEC3, _VEC2_OPT):
        return "[" + ",".join(f"{v:.6f}" for v in value) + "]"
    if kind == _VEC2_LIST:
        return "[" + ",".join("[" + ",".join(f"{v:.6f}" for v in item) + "]"
                              for item in value) + "]"
    raise AssertionError(kind)


def encode(message: WireMessage) -> bytes:
    """Canonical newline-terminated encoding of a message."""
    schema = SCHEMAS[message.type]
    body = ",".join(f"{json.dumps(k)}:{_canon_value(schema[k], message.body[k])}"
                    for k in sorted(schema))
    line = (f'{{"type":{json.dumps(message.type)},"seq":{message.seq},'
            f'"sent_at":{message.sent_at:.6f},"body":{{{body}}}}}')
    return line.encode("ascii") + b"\n"


def decode(data: bytes | str) -> WireMessage:
    """Parse one encoded line back into a message.

    Raises ProtocolError with the byte offset of the fault for malformed
    input; schema violations report offset 0.
    """
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ProtocolError(f"undecodable bytes: {exc}", offset=exc.start) from exc
    else:
        text = data
    text = text.strip("\n")
    if "\n" in text:
        raise ProtocolError("multiple lines passed to decode", offset=text.index("\n"))
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"malformed message: {exc.msg}", offset=exc.pos) from exc
    if not isinstance(raw, dict):
        raise ProtocolError(f"message must be an object, got {type(raw).__name__}")
    extra = set(raw) - {"type", "seq", "sent_at", "body"}
    if extra:
        raise ProtocolError(f"unknown top-level field(s) {sorted(extra)}")
    for required in ("type", "seq", "sent_at", "body"):
        if required not in raw:
            raise ProtocolError(f"missing top-level field {required!r}")
    if not isinstance(raw["body"], dict):
        raise ProtocolError("body must be an object")
    try:
        return WireMessage(type=raw["type"], seq=raw["seq"],
                           sent_at=raw["sent_at"], body=raw["body"])
    except ProtocolError:
        raise
    except (TypeError, ValueError) as exc:
        raise ProtocolError(f"invalid message: {exc}") from exc
