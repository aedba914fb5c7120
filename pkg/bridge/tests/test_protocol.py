import numpy as np
import pytest

from topicmark_bridge.protocol import (
    Handshake,
    ProtocolViolation,
    decode_frame,
    decode_logits,
    encode_frame,
    encode_logits,
    hello_frame,
    logits_request,
    logits_response,
)


class TestFrames:
    def test_roundtrip(self):
        frame = logits_request(3, [1, 2, 3])
        assert decode_frame(encode_frame(frame)) == frame

    def test_one_line_per_frame(self):
        data = encode_frame(hello_frame())
        assert data.endswith(b"\n")
        assert data.count(b"\n") == 1

    def test_decode_rejects_non_object(self):
        with pytest.raises(ProtocolViolation):
            decode_frame(b"[1, 2, 3]\n")

    def test_handshake_roundtrip(self):
        hs = Handshake(1, 100, "stub", "ff00", ["keywords"])
        assert Handshake.from_frame(hs.to_frame()) == hs

    def test_handshake_missing_field(self):
        with pytest.raises(ProtocolViolation):
            Handshake.from_frame({"type": "handshake", "vocab_size": 5})


class TestLogitsPayload:
    def test_bit_identical_roundtrip(self):
        rng = np.random.default_rng(0)
        logits = rng.standard_normal(257).astype(np.float32)
        decoded = decode_logits(encode_logits(logits), expected_len=257)
        assert decoded.dtype == np.float32
        assert np.array_equal(
            logits.view(np.uint32), decoded.view(np.uint32)
        ), "float32 payload must survive bit-for-bit"

    def test_special_values_roundtrip(self):
        logits = np.array([0.0, -0.0, 1.5e-45, 3.4e38, -3.4e38], dtype=np.float32)
        decoded = decode_logits(encode_logits(logits))
        assert np.array_equal(logits.view(np.uint32), decoded.view(np.uint32))

    def test_length_check(self):
        payload = encode_logits(np.zeros(4, dtype=np.float32))
        with pytest.raises(ProtocolViolation, match="expected 5"):
            decode_logits(payload, expected_len=5)

    def test_response_frame_shape(self):
        frame = logits_response(7, np.zeros(3, dtype=np.float32))
        assert frame["type"] == "logits"
        assert frame["dtype"] == "f32"
        assert frame["id"] == 7

    def test_float64_input_narrowed_to_f32(self):
        logits = np.array([1 / 3], dtype=np.float64)
        decoded = decode_logits(encode_logits(logits))
        assert decoded[0] == np.float32(1 / 3)


class TestDocumentedExamples:
    """The byte-level examples in PROTOCOL.md must stay true."""

    def test_hello_bytes(self):
        data = encode_frame(hello_frame(1536))
        assert data == b'{"expected_vocab_size": 1536, "protocol_version": 1, "type": "hello"}\n'
        assert len(data) == 70

    def test_onehot_payload(self):
        payload = encode_logits(np.array([0.0, 1.0, 0.0, 0.0], dtype=np.float32))
        assert payload == "AAAAAAAAgD8AAAAAAAAAAA=="
