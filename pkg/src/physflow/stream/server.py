"""Live streaming service: a producer-paced tick loop broadcasting frames over
WebSocket, with an inbox that applies client actions on the tick after arrival.

The simulation never skips frames: if a tick overruns its 1/fps budget the
next one starts immediately and the accumulated wall-clock drift is reported
as telemetry instead of being hidden.
"""

from __future__ import annotations

import asyncio
import json
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional

from .. import errors
from ..errors import NumericalBlowup
from . import protocol as proto
from .session import Engine

log = logging.getLogger("physflow.server")


@dataclass
class Session:
    """A live engine plus its inbox, clients, and lifecycle flags."""

    engine: Engine
    target_fps: float = 30.0
    inbox: list = field(default_factory=list)
    clients: set = field(default_factory=set)
    paused: bool = False
    frozen: bool = False
    tick_no: int = 0
    drift_s: float = 0.0
    snapshot_store: Optional[bytes] = None
    stop: asyncio.Event = field(default_factory=asyncio.Event)

    def control(self, cmd: str) -> list[proto.EventMsg]:
        """Apply a session control command; returns events to broadcast."""
        if cmd == "reset":
            self.engine.reset()
            self.frozen = False
            self.tick_no = 0
            self.drift_s = 0.0
            return [proto.EventMsg(proto.EVENT_RESET_DONE, "scene restored")]
        if cmd == "pause":
            self.paused = True
            return [proto.EventMsg(proto.EVENT_INFO, "paused")]
        if cmd == "resume":
            self.paused = False
            return [proto.EventMsg(proto.EVENT_INFO, "resumed")]
        if cmd == "snapshot":
            self.snapshot_store = self.engine.snapshot()
            return [proto.EventMsg(proto.EVENT_INFO,
                                   f"snapshot stored ({len(self.snapshot_store)} bytes)")]
        if cmd == "load_snapshot":
            if self.snapshot_store is None:
                return [proto.EventMsg(proto.EVENT_ERROR, "no snapshot stored")]
            try:
                self.engine.restore(self.snapshot_store)
            except errors.IncompatibleSnapshot as exc:
                return [proto.EventMsg(proto.EVENT_ERROR, str(exc))]
            self.frozen = False
            return [proto.EventMsg(proto.EVENT_INFO, "snapshot restored")]
        return [proto.EventMsg(proto.EVENT_ERROR, f"unknown control command {cmd!r}")]


_CMD_NAMES = {
    proto.CMD_RESET: "reset",
    proto.CMD_PAUSE: "pause",
    proto.CMD_RESUME: "resume",
    proto.CMD_SNAPSHOT: "snapshot",
    proto.CMD_LOAD_SNAPSHOT: "load_snapshot",
}


def session_control(session: Session, cmd: str) -> list[proto.EventMsg]:
    """Spec-surface wrapper for programmatic control."""
    return session.control(cmd)


async def _broadcast(session: Session, payloads: list[bytes]) -> None:
    if not session.clients or not payloads:
        return
    dead = []
    for ws in list(session.clients):
        try:
            for payload in payloads:
                await ws.send(payload)
        except Exception:  # noqa: BLE001 - any transport failure drops the client
            dead.append(ws)
    for ws in dead:
        session.clients.discard(ws)


def _tick_payloads(session: Session, result) -> list[bytes]:
    cond = result.cond
    msgs = proto.conditioning_messages(cond)
    h, w = result.generated.shape[:2]
    msgs.append(proto.FrameGeneratedMsg(cond.frame_index, cond.sim_time, w, h,
                                        result.generated.ravel()))
    msgs.extend(proto.EventMsg(code, detail) for code, detail in result.events)
    return [proto.encode_message(m) for m in msgs]


async def tick_loop(session: Session) -> None:
    interval = 1.0 / session.target_fps
    loop = asyncio.get_running_loop()
    next_t = loop.time()
    last_telemetry = time.monotonic()
    while not session.stop.is_set():
        if not session.paused and not session.frozen:
            actions, session.inbox = session.inbox, []
            try:
                result = session.engine.tick(actions)
            except NumericalBlowup as exc:
                session.frozen = True
                await _broadcast(session, [proto.encode_message(
                    proto.EventMsg(proto.EVENT_FROZEN,
                                   f"simulation frozen: {exc} (send reset to recover)"))])
            else:
                session.tick_no += 1
                await _broadcast(session, _tick_payloads(session, result))
        now_t = loop.time()
        next_t += interval
        if next_t < now_t:
            session.drift_s += now_t - next_t  # overrun: start next tick immediately
            next_t = now_t
        else:
            await asyncio.sleep(next_t - now_t)
        if time.monotonic() - last_telemetry >= 2.0:
            last_telemetry = time.monotonic()
            info = {"tick": session.tick_no, "sim_time": session.engine.state.sim_time,
                    "wall_drift_s": round(session.drift_s, 4),
                    "clients": len(session.clients)}
            await _broadcast(session, [proto.encode_message(
                proto.EventMsg(proto.EVENT_TELEMETRY, json.dumps(info)))])


async def _handle_message(session: Session, ws, raw: bytes) -> None:
    offset = 0
    while offset < len(raw):
        try:
            msg, used = proto.decode_message(raw, offset)
        except errors.UnknownMessage as exc:
            offset += exc.consumed
            continue
        except errors.Incomplete:
            return  # ws framing should deliver whole messages; drop the tail
        except errors.ProtocolError as exc:
            await ws.send(proto.encode_message(proto.EventMsg(proto.EVENT_ERROR, str(exc))))
            return
        offset += used
        if isinstance(msg, (proto.ActionPointForceMsg, proto.ActionForceFieldMsg,
                            proto.ActionGripperMsg)):
            session.inbox.append(proto.action_from_message(msg))
        elif isinstance(msg, proto.ActionCameraMsg):
            session.inbox.append(proto.camera_action_from_message(
                msg, session.engine.state.camera))
        elif isinstance(msg, proto.ControlMsg):
            name = _CMD_NAMES.get(msg.cmd)
            events = session.control(name) if name else [
                proto.EventMsg(proto.EVENT_ERROR, f"unknown control code {msg.cmd}")]
            await _broadcast(session, [proto.encode_message(e) for e in events])
        elif isinstance(msg, proto.PixelPickMsg):
            point = session.engine.pick_world_point(msg.u, msg.v)
            if point is None:
                reply = proto.PickResultMsg((math.nan, math.nan, math.nan))
            else:
                reply = proto.PickResultMsg(tuple(float(x) for x in point))
            await ws.send(proto.encode_message(reply))


async def _client_handler(session: Session, ws) -> None:
    session.clients.add(ws)
    cam = session.engine.state.camera
    hello = {"protocol_version": proto.VERSION, "width": cam.width, "height": cam.height,
             "fps": session.target_fps, "frame": session.engine.frame_counter,
             "camera": {"fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy,
                        "rotation": cam.rotation.ravel().tolist(),
                        "translation": cam.translation.tolist()}}
    try:
        await ws.send(proto.encode_message(proto.EventMsg(proto.EVENT_INFO, json.dumps(hello))))
        async for raw in ws:
            if isinstance(raw, str):
                continue  # binary protocol only
            await _handle_message(session, ws, raw)
    except Exception:  # noqa: BLE001
        pass
    finally:
        session.clients.discard(ws)


async def run_stream(session: Session, host: str = "127.0.0.1", port: int = 8765) -> None:
    """Serve the session until ``session.stop`` is set."""
    from websockets.asyncio.server import serve

    async with serve(lambda ws: _client_handler(session, ws), host, port,
                     max_size=64 * 1024 * 1024):
        log.info("streaming on ws://%s:%d at %.0f fps", host, port, session.target_fps)
        await tick_loop(session)


def serve_forever(engine: Engine, host: str, port: int, fps: float = 30.0) -> None:
    session = Session(engine, target_fps=fps)
    try:
        asyncio.run(run_stream(session, host, port))
    except KeyboardInterrupt:
        pass
