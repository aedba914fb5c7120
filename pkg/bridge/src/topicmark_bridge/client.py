"""Client side: a remote model as a topicmark LogitProvider.

The provider speaks the bridge protocol over a TCP connection or a
spawned stdio subprocess, upcasting the wire's float32 logits to the
float64 the generator computes with.
"""

from __future__ import annotations

import json
import socket
import subprocess

import numpy as np

from .protocol import (
    CAP_KEYWORDS,
    Handshake,
    ProtocolViolation,
    decode_logits,
    encode_frame,
    hello_frame,
    keywords_request,
    logits_request,
)


class BridgeRefused(Exception):
    """The server declined the session at handshake."""


class RemoteError(Exception):
    """The server answered a request with an error frame."""


class BridgeConnection:
    """Framed request/response channel; responses arrive in request order."""

    def __init__(self, reader, writer, closer=None):
        self._reader = reader
        self._writer = writer
        self._closer = closer
        self._next_id = 0
        self.handshake: Handshake | None = None

    def _send(self, frame: dict) -> None:
        self._writer.write(encode_frame(frame))
        self._writer.flush()

    def _recv(self) -> dict:
        line = self._reader.readline()
        if not line:
            raise ConnectionError("bridge closed the connection")
        frame = json.loads(line.decode("utf-8"))
        if not isinstance(frame, dict):
            raise ProtocolViolation("response frame is not an object")
        return frame

    def establish(self, expected_vocab_size: int | None = None) -> Handshake:
        self._send(hello_frame(expected_vocab_size))
        frame = self._recv()
        if frame.get("type") == "refused":
            raise BridgeRefused(frame.get("reason", "refused"))
        if frame.get("type") != "handshake":
            raise ProtocolViolation(f"expected handshake, got {frame.get('type')!r}")
        self.handshake = Handshake.from_frame(frame)
        if (
            expected_vocab_size is not None
            and self.handshake.vocab_size != expected_vocab_size
        ):
            self.close()
            raise BridgeRefused(
                f"vocab_size mismatch: server has {self.handshake.vocab_size}, "
                f"expected {expected_vocab_size}"
            )
        return self.handshake

    def request(self, frame: dict) -> dict:
        self._send(frame)
        response = self._recv()
        if response.get("type") == "error":
            raise RemoteError(response.get("message", "remote error"))
        if response.get("id") != frame["id"]:
            raise ProtocolViolation(
                f"response id {response.get('id')} does not match request id {frame['id']}"
            )
        return response

    def take_id(self) -> int:
        rid = self._next_id
        self._next_id += 1
        return rid

    def close(self) -> None:
        if self._closer is not None:
            self._closer()
            self._closer = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def connect_tcp(host: str, port: int, expected_vocab_size: int | None = None) -> BridgeConnection:
    sock = socket.create_connection((host, port))
    reader = sock.makefile("rb")
    writer = sock.makefile("wb")

    def closer():
        reader.close()
        writer.close()
        sock.close()

    conn = BridgeConnection(reader, writer, closer)
    conn.establish(expected_vocab_size)
    return conn


def connect_stdio(command: list[str], expected_vocab_size: int | None = None) -> BridgeConnection:
    """Spawn a bridge subprocess and talk over its stdin/stdout."""
    proc = subprocess.Popen(command, stdin=subprocess.PIPE, stdout=subprocess.PIPE)

    def closer():
        if proc.stdin:
            proc.stdin.close()
        if proc.stdout:
            proc.stdout.close()
        proc.wait(timeout=10)

    conn = BridgeConnection(proc.stdout, proc.stdin, closer)
    conn.establish(expected_vocab_size)
    return conn


class RemoteLogitProvider:
    """topicmark LogitProvider backed by a bridge connection."""

    def __init__(self, connection: BridgeConnection):
        if connection.handshake is None:
            raise ValueError("connection must be established first")
        self._conn = connection
        self.vocab_size = connection.handshake.vocab_size

    def next_logits(self, context) -> np.ndarray:
        response = self._conn.request(logits_request(self._conn.take_id(), context))
        logits = decode_logits(response["data"], expected_len=self.vocab_size)
        return logits.astype(np.float64)

    def next_logits_f32(self, context) -> np.ndarray:
        """The raw 32-bit logits exactly as transmitted (for bit-exactness checks)."""
        response = self._conn.request(logits_request(self._conn.take_id(), context))
        return decode_logits(response["data"], expected_len=self.vocab_size)


class RemoteKeywordExtractor:
    """Optional keyword capability; callers fall back when it is absent."""

    def __init__(self, connection: BridgeConnection):
        if connection.handshake is None:
            raise ValueError("connection must be established first")
        self._conn = connection

    @property
    def available(self) -> bool:
        return CAP_KEYWORDS in self._conn.handshake.capabilities

    def extract(self, text: str) -> list[tuple[str, float]]:
        if not self.available:
            raise RemoteError("keywords capability not advertised by the server")
        response = self._conn.request(keywords_request(self._conn.take_id(), text))
        return [(term, float(rel)) for term, rel in response["keywords"]]
