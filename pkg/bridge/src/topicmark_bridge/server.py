"""Bridge server: answers handshakes and logits requests over stdio or TCP.

One session serves one connection strictly serially; responses go out in
request order. A malformed frame gets an error response and the session
continues; a vocabulary mismatch at handshake refuses the session.
"""

from __future__ import annotations

import json
import socketserver
import sys

from .keywords import extract_keywords
from .models import BridgeModel
from .protocol import (
    CAP_KEYWORDS,
    PROTOCOL_VERSION,
    Handshake,
    encode_frame,
    error_response,
    keywords_response,
    logits_response,
    refused_frame,
)


class Session:
    """Frame loop for one established connection."""

    def __init__(self, model: BridgeModel, reader, writer, enable_keywords: bool = False):
        self.model = model
        self.reader = reader
        self.writer = writer
        self.enable_keywords = enable_keywords
        self.handshaken = False

    def _send(self, frame: dict) -> None:
        self.writer.write(encode_frame(frame))
        self.writer.flush()

    def _handshake(self) -> Handshake:
        caps = [CAP_KEYWORDS] if self.enable_keywords else []
        return Handshake(
            protocol_version=PROTOCOL_VERSION,
            vocab_size=self.model.vocab_size,
            model_name=self.model.model_name,
            tokenizer_fingerprint=self.model.tokenizer_fingerprint,
            capabilities=caps,
        )

    def run(self) -> None:
        for raw in self.reader:
            if not raw.strip():
                continue
            try:
                frame = json.loads(raw.decode("utf-8"))
                if not isinstance(frame, dict):
                    raise ValueError("frame is not an object")
            except (ValueError, UnicodeDecodeError) as exc:
                self._send(error_response(None, f"malformed frame: {exc}"))
                continue
            if not self._dispatch(frame):
                return

    def _dispatch(self, frame: dict) -> bool:
        """Handle one frame; False ends the session."""
        ftype = frame.get("type")
        if ftype == "hello":
            expected = frame.get("expected_vocab_size")
            if expected is not None and int(expected) != self.model.vocab_size:
                self._send(
                    refused_frame(
                        f"vocab_size mismatch: model has {self.model.vocab_size}, "
                        f"client expects {expected}"
                    )
                )
                return False
            if int(frame.get("protocol_version", -1)) != PROTOCOL_VERSION:
                self._send(refused_frame(f"unsupported protocol version {frame.get('protocol_version')}"))
                return False
            self._send(self._handshake().to_frame())
            self.handshaken = True
            return True

        request_id = frame.get("id")
        if not self.handshaken:
            self._send(error_response(request_id, "handshake required before requests"))
            return True

        if ftype == "logits":
            context = frame.get("context")
            if not isinstance(context, list) or not context:
                self._send(error_response(request_id, "context must be a non-empty token list"))
                return True
            try:
                logits = self.model.next_logits([int(t) for t in context])
            except (ValueError, TypeError) as exc:
                self._send(error_response(request_id, str(exc)))
                return True
            self._send(logits_response(request_id, logits))
            return True

        if ftype == "keywords":
            if not self.enable_keywords:
                self._send(error_response(request_id, "keywords capability not enabled"))
                return True
            text = frame.get("text")
            if not isinstance(text, str) or not text.strip():
                self._send(error_response(request_id, "text must be a non-empty string"))
                return True
            self._send(keywords_response(request_id, extract_keywords(text)))
            return True

        self._send(error_response(request_id, f"unknown frame type {ftype!r}"))
        return True


def serve_stdio(model: BridgeModel, enable_keywords: bool = False) -> None:
    """Serve a single session over this process's stdin/stdout."""
    Session(model, sys.stdin.buffer, sys.stdout.buffer, enable_keywords).run()


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        Session(
            self.server.bridge_model,
            self.rfile,
            self.wfile,
            self.server.enable_keywords,
        ).run()


class BridgeTCPServer(socketserver.ThreadingTCPServer):
    """One serial session per connection; concurrency via multiple connections."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address, model: BridgeModel, enable_keywords: bool = False):
        super().__init__(address, _Handler)
        self.bridge_model = model
        self.enable_keywords = enable_keywords

    @property
    def port(self) -> int:
        return self.server_address[1]


def serve_tcp(model: BridgeModel, host: str, port: int, enable_keywords: bool = False) -> None:
    with BridgeTCPServer((host, port), model, enable_keywords) as server:
        server.serve_forever()
