"""Wire protocol: canonical encoding, schema validation, golden vectors."""

import os

import pytest

from blendnav.errors import ProtocolError
from blendnav.protocol import PROTOCOL_VERSION, WireMessage, decode, encode

GOLDEN_PATH = os.path.join(os.path.dirname(__file__), "..", "protocol",
                           "golden_vectors.txt")


def golden_messages():
    """The ten frozen conformance messages, reconstructed field by field."""
    return [
        WireMessage(type="hello", seq=0, sent_at=0.0,
                    body={"version": 1, "role": "console"}),
        WireMessage(type="hello", seq=0, sent_at=0.0,
                    body={"version": 1, "role": "server"}),
        WireMessage(type="config", seq=1, sent_at=0.0,
                    body={"dt": 0.05, "horizon": 20, "v_max": 1.0}),
        WireMessage(type="command", seq=1, sent_at=0.0,
                    body={"vx": 1.0, "vy": 0.0}),
        WireMessage(type="command", seq=2, sent_at=12.345678,
                    body={"vx": -0.707107, "vy": 0.5}),
        WireMessage(type="world_state", seq=3, sent_at=0.35,
                    body={"tick": 7, "time": 0.35, "robot": [1.25, -2.5, 0.785398],
                          "agents": [[0.1, 0.2], [3.0, -1.0]], "goal": [5.0, 0.0],
                          "operator_weight": 0.25, "robot_weight": 0.75,
                          "planned_path": [[1.25, -2.5], [1.3, -2.45]],
                          "staleness_s": 0.1}),
        WireMessage(type="world_state", seq=4, sent_at=0.4,
                    body={"tick": 8, "time": 0.4, "robot": [0.0, 0.0, 0.0],
                          "agents": [], "goal": [], "operator_weight": 0.0,
                          "robot_weight": 1.0, "planned_path": [],
                          "staleness_s": 1.05}),
        WireMessage(type="blend_diag", seq=5, sent_at=0.4,
                    body={"tick": 8, "total": -12.25, "attraction": -3.5,
                          "cooperation": -0.125, "operator": 4.5, "robot": -8.0,
                          "agents": -5.125, "fallback": 0}),
        WireMessage(type="error", seq=6, sent_at=1.0,
                    body={"message": "protocol version mismatch; server speaks 1"}),
        WireMessage(type="bye", seq=7, sent_at=99.999999, body={}),
    ]


class TestRoundTrip:
    def test_command_round_trips(self):
        m = WireMessage(type="command", seq=1, sent_at=0.0,
                        body={"vx": 1.0, "vy": 0.0})
        assert decode(encode(m)) == m

    def test_all_types_round_trip(self):
        for m in golden_messages():
            assert decode(encode(m)) == m

    def test_line_level_idempotence(self):
        for m in golden_messages():
            line = encode(m)
            assert encode(decode(line)) == line

    def test_floats_quantized_at_construction(self):
        m = WireMessage(type="command", seq=0, sent_at=1.23456789,
                        body={"vx": 0.1234567891, "vy": 0.0})
        assert m.sent_at == 1.234568
        assert m.body["vx"] == 0.123457
        assert decode(encode(m)) == m


class TestValidation:
    def test_truncated_line_reports_offset(self):
        line = encode(golden_messages()[3])
        with pytest.raises(ProtocolError) as exc:
            decode(line[:40])
        assert exc.value.offset > 0

    def test_unknown_type_rejected(self):
        with pytest.raises(ProtocolError):
            WireMessage(type="teleport", seq=0, sent_at=0.0, body={})

    def test_unknown_body_field_rejected(self):
        with pytest.raises(ProtocolError):
            WireMessage(type="command", seq=0, sent_at=0.0,
                        body={"vx": 1.0, "vy": 0.0, "vz": 0.0})

    def test_missing_body_field_rejected(self):
        with pytest.raises(ProtocolError):
            WireMessage(type="command", seq=0, sent_at=0.0, body={"vx": 1.0})

    def test_bad_json_rejected(self):
        with pytest.raises(ProtocolError):
            decode(b"not json at all\n")

    def test_non_finite_float_rejected(self):
        with pytest.raises(ProtocolError):
            WireMessage(type="command", seq=0, sent_at=0.0,
                        body={"vx": float("nan"), "vy": 0.0})

    def test_unknown_top_level_field_rejected(self):
        with pytest.raises(ProtocolError):
            decode(b'{"type":"bye","seq":0,"sent_at":0.000000,"body":{},"x":1}\n')

    def test_negative_seq_rejected(self):
        with pytest.raises(ProtocolError):
            WireMessage(type="bye", seq=-1, sent_at=0.0, body={})

    def test_version_constant(self):
        assert PROTOCOL_VERSION == 1


class TestGoldenVectors:
    def test_encodings_are_byte_exact(self):
        with open(GOLDEN_PATH, "rb") as f:
            frozen = f.read().splitlines(keepends=True)
        built = [encode(m) for m in golden_messages()]
        assert len(frozen) == 10
        assert built == frozen

    def test_golden_lines_decode_and_reencode(self):
        with open(GOLDEN_PATH, "rb") as f:
            for line in f.read().splitlines(keepends=True):
                assert encode(decode(line)) == line
