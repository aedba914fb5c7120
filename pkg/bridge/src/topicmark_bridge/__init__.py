"""Serve language models as remote logit providers for topicmark."""

from .client import (
    BridgeConnection,
    BridgeRefused,
    RemoteError,
    RemoteKeywordExtractor,
    RemoteLogitProvider,
    connect_stdio,
    connect_tcp,
)
from .conformance import run_provider_conformance
from .models import HashStubModel, NGramBackedModel, OneHotStubModel, load_model
from .protocol import PROTOCOL_VERSION, Handshake, ProtocolViolation
from .server import BridgeTCPServer, serve_stdio, serve_tcp

__version__ = "0.1.0"
