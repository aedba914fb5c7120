"""Wire protocol: newline-delimited JSON frames, logits as base64 float32.

Every frame is one JSON object on one line. A session starts with the
client's ``hello`` and the server's ``handshake`` (or ``refused``), then
proceeds with request/response pairs answered strictly in order.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field

import numpy as np

PROTOCOL_VERSION = 1

CAP_KEYWORDS = "keywords"


class ProtocolViolation(Exception):
    """Raised when the peer sends a frame the protocol does not allow."""


def encode_frame(obj: dict) -> bytes:
    return (json.dumps(obj, sort_keys=True) + "\n").encode("utf-8")


def decode_frame(line: bytes) -> dict:
    obj = json.loads(line.decode("utf-8"))
    if not isinstance(obj, dict) or "type" not in obj:
        raise ProtocolViolation("frame must be a JSON object with a 'type' field")
    return obj


def encode_logits(logits: np.ndarray) -> str:
    """Little-endian float32 array as base64."""
    arr = np.asarray(logits, dtype="<f4")
    return base64.b64encode(arr.tobytes()).decode("ascii")


def decode_logits(data: str, expected_len: int | None = None) -> np.ndarray:
    raw = base64.b64decode(data.encode("ascii"))
    arr = np.frombuffer(raw, dtype="<f4")
    if expected_len is not None and len(arr) != expected_len:
        raise ProtocolViolation(f"logits payload has {len(arr)} entries, expected {expected_len}")
    return arr


@dataclass
class Handshake:
    protocol_version: int
    vocab_size: int
    model_name: str
    tokenizer_fingerprint: str
    capabilities: list[str] = field(default_factory=list)

    def to_frame(self) -> dict:
        return {
            "type": "handshake",
            "protocol_version": self.protocol_version,
            "vocab_size": self.vocab_size,
            "model_name": self.model_name,
            "tokenizer_fingerprint": self.tokenizer_fingerprint,
            "capabilities": self.capabilities,
        }

    @classmethod
    def from_frame(cls, frame: dict) -> "Handshake":
        try:
            return cls(
                protocol_version=int(frame["protocol_version"]),
                vocab_size=int(frame["vocab_size"]),
                model_name=str(frame["model_name"]),
                tokenizer_fingerprint=str(frame["tokenizer_fingerprint"]),
                capabilities=list(frame.get("capabilities", [])),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolViolation(f"bad handshake frame: {exc}") from exc


def hello_frame(expected_vocab_size: int | None = None) -> dict:
    frame = {"type": "hello", "protocol_version": PROTOCOL_VERSION}
    if expected_vocab_size is not None:
        frame["expected_vocab_size"] = int(expected_vocab_size)
    return frame


def logits_request(request_id: int, context) -> dict:
    return {"type": "logits", "id": int(request_id), "context": [int(t) for t in context]}


def logits_response(request_id: int, logits: np.ndarray) -> dict:
    return {"type": "logits", "id": int(request_id), "dtype": "f32", "data": encode_logits(logits)}


def keywords_request(request_id: int, text: str) -> dict:
    return {"type": "keywords", "id": int(request_id), "text": text}


def keywords_response(request_id: int, keywords) -> dict:
    return {
        "type": "keywords",
        "id": int(request_id),
        "keywords": [[term, float(rel)] for term, rel in keywords],
    }


def error_response(request_id, message: str) -> dict:
    return {"type": "error", "id": request_id, "message": message}


def refused_frame(reason: str) -> dict:
    return {"type": "refused", "reason": reason}
