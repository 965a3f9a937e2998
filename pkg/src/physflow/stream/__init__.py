"""Streaming: wire protocol, the tick engine, and the WebSocket service."""

from .session import Engine, EngineSettings, TickResult, run_scripted
from .server import Session, run_stream, serve_forever, session_control

__all__ = [
    "Engine", "EngineSettings", "TickResult", "run_scripted",
    "Session", "run_stream", "serve_forever", "session_control",
]
