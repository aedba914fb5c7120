"""The same conformance suite over both transports, plus protocol edge cases."""

import json
import sys
import threading

import numpy as np
import pytest

from topicmark_bridge import (
    BridgeRefused,
    BridgeTCPServer,
    RemoteError,
    RemoteKeywordExtractor,
    RemoteLogitProvider,
    connect_stdio,
    connect_tcp,
)
from topicmark_bridge.conformance import run_provider_conformance
from topicmark_bridge.models import HashStubModel, OneHotStubModel
from topicmark_bridge.protocol import encode_frame

VOCAB = 48


@pytest.fixture
def tcp_server():
    servers = []

    def start(model, **kwargs):
        server = BridgeTCPServer(("127.0.0.1", 0), model, **kwargs)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        servers.append(server)
        return server.port

    yield start
    for server in servers:
        server.shutdown()
        server.server_close()


def stdio_command(model_spec: str, keywords: bool = False) -> list[str]:
    cmd = [sys.executable, "-m", "topicmark_bridge.cli", "--model", model_spec, "--transport", "stdio"]
    if keywords:
        cmd.append("--keywords")
    return cmd


class TestTcpTransport:
    def test_conformance_over_tcp(self, tcp_server):
        port = tcp_server(HashStubModel(VOCAB, seed=5))
        with connect_tcp("127.0.0.1", port) as conn:
            run_provider_conformance(RemoteLogitProvider(conn))

    def test_handshake_metadata(self, tcp_server):
        model = OneHotStubModel(VOCAB)
        port = tcp_server(model)
        with connect_tcp("127.0.0.1", port) as conn:
            assert conn.handshake.vocab_size == VOCAB
            assert conn.handshake.model_name == model.model_name
            assert conn.handshake.tokenizer_fingerprint == model.tokenizer_fingerprint

    def test_vocab_mismatch_refused(self, tcp_server):
        port = tcp_server(OneHotStubModel(VOCAB))
        with pytest.raises(BridgeRefused, match="mismatch"):
            connect_tcp("127.0.0.1", port, expected_vocab_size=VOCAB + 1)

    def test_matching_vocab_accepted(self, tcp_server):
        port = tcp_server(OneHotStubModel(VOCAB))
        with connect_tcp("127.0.0.1", port, expected_vocab_size=VOCAB) as conn:
            assert conn.handshake is not None

    def test_empty_context_is_error_response(self, tcp_server):
        port = tcp_server(OneHotStubModel(VOCAB))
        with connect_tcp("127.0.0.1", port) as conn:
            provider = RemoteLogitProvider(conn)
            with pytest.raises(RemoteError, match="non-empty"):
                provider.next_logits([])
            # session continues after the error
            logits = provider.next_logits([3])
            assert logits[3] == 1.0

    def test_malformed_frame_keeps_session_alive(self, tcp_server):
        port = tcp_server(OneHotStubModel(VOCAB))
        with connect_tcp("127.0.0.1", port) as conn:
            conn._writer.write(b"this is not json\n")
            conn._writer.flush()
            frame = conn._recv()
            assert frame["type"] == "error"
            assert "malformed" in frame["message"]
            provider = RemoteLogitProvider(conn)
            assert provider.next_logits([1])[1] == 1.0

    def test_in_order_response_ids(self, tcp_server):
        port = tcp_server(HashStubModel(VOCAB))
        with connect_tcp("127.0.0.1", port) as conn:
            # pipeline three requests before reading any response
            for rid in (0, 1, 2):
                conn._writer.write(
                    encode_frame({"type": "logits", "id": rid, "context": [rid]})
                )
            conn._writer.flush()
            got = [conn._recv()["id"] for _ in range(3)]
            assert got == [0, 1, 2]

    def test_bit_exact_float32_over_wire(self, tcp_server):
        model = HashStubModel(VOCAB, seed=9)
        port = tcp_server(model)
        with connect_tcp("127.0.0.1", port) as conn:
            provider = RemoteLogitProvider(conn)
            for ctx in ([0], [1, 2, 3], [VOCAB - 1] * 5):
                local = model.next_logits(ctx)
                remote = provider.next_logits_f32(ctx)
                assert np.array_equal(local.view(np.uint32), remote.view(np.uint32))

    def test_requests_before_handshake_rejected(self, tcp_server):
        import socket

        port = tcp_server(OneHotStubModel(VOCAB))
        sock = socket.create_connection(("127.0.0.1", port))
        try:
            sock.sendall(encode_frame({"type": "logits", "id": 0, "context": [1]}))
            response = json.loads(sock.makefile("rb").readline())
            assert response["type"] == "error"
            assert "handshake" in response["message"]
        finally:
            sock.close()

    def test_keywords_capability(self, tcp_server):
        port = tcp_server(OneHotStubModel(VOCAB), enable_keywords=True)
        with connect_tcp("127.0.0.1", port) as conn:
            extractor = RemoteKeywordExtractor(conn)
            assert extractor.available
            keywords = extractor.extract("the clinic treated the patient")
            assert keywords
            assert keywords == extractor.extract("the clinic treated the patient")

    def test_keywords_capability_absent(self, tcp_server):
        port = tcp_server(OneHotStubModel(VOCAB))
        with connect_tcp("127.0.0.1", port) as conn:
            extractor = RemoteKeywordExtractor(conn)
            assert not extractor.available
            with pytest.raises(RemoteError):
                extractor.extract("some text")


class TestStdioTransport:
    def test_conformance_over_stdio(self):
        with connect_stdio(stdio_command(f"stub:hash:{VOCAB}:5")) as conn:
            run_provider_conformance(RemoteLogitProvider(conn))

    def test_vocab_mismatch_refused(self):
        with pytest.raises(BridgeRefused, match="mismatch"):
            connect_stdio(stdio_command(f"stub:onehot:{VOCAB}"), expected_vocab_size=7)

    def test_onehot_over_stdio(self):
        with connect_stdio(stdio_command(f"stub:onehot:{VOCAB}")) as conn:
            provider = RemoteLogitProvider(conn)
            logits = provider.next_logits([5, 9])
            assert logits[9] == 1.0
            assert logits.sum() == 1.0

    def test_keywords_over_stdio(self):
        with connect_stdio(stdio_command(f"stub:onehot:{VOCAB}", keywords=True)) as conn:
            extractor = RemoteKeywordExtractor(conn)
            assert extractor.available
            assert extractor.extract("doctors examined the patient")
