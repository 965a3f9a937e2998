"""Binary wire protocol, little-endian throughout.

Message = magic u32 | version u16 | type u16 | payload_len u32 | payload.
Unknown types raise UnknownMessage carrying the consumed length so streams can
skip them; truncated buffers raise Incomplete so callers read more bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Union

import numpy as np

from .. import errors
from ..scene import (
    Action, Camera, CameraPose, ConditioningFrame, ForceField, GripperCommand, PointForce,
)

MAGIC = 0x52574E44
VERSION = 1
HEADER = struct.Struct("<IHHI")

TYPE_ACTION_POINT_FORCE = 0x0001
TYPE_ACTION_FORCE_FIELD = 0x0002
TYPE_ACTION_GRIPPER = 0x0003
TYPE_ACTION_CAMERA = 0x0004
TYPE_FRAME_PREVIEW = 0x0010
TYPE_FRAME_FLOW = 0x0011
TYPE_FRAME_DEPTH = 0x0012
TYPE_FRAME_NOISE = 0x0013
TYPE_FRAME_GENERATED = 0x0014  # generated frame broadcast (extension type)
TYPE_CONTROL = 0x0020
TYPE_EVENT = 0x0021
TYPE_PIXEL_PICK = 0x0030
TYPE_PICK_RESULT = 0x0031

# Control commands
CMD_RESET = 0
CMD_PAUSE = 1
CMD_RESUME = 2
CMD_SNAPSHOT = 3
CMD_LOAD_SNAPSHOT = 4

# Event codes
EVENT_INFO = 0
EVENT_FROZEN = 1
EVENT_RESET_DONE = 2
EVENT_ERROR = 3
EVENT_WARNING = 4
EVENT_TELEMETRY = 5


@dataclass
class ActionPointForceMsg:
    position: tuple[float, float, float]
    force: tuple[float, float, float]
    radius: float
    duration: float


@dataclass
class ActionForceFieldMsg:
    acceleration: tuple[float, float, float]
    has_region: bool
    box: tuple[float, float, float, float, float, float]  # min xyz, max xyz


@dataclass
class ActionGripperMsg:
    position: tuple[float, float, float]
    quaternion: tuple[float, float, float, float]  # wxyz
    opening: float


@dataclass
class ActionCameraMsg:
    rotation: tuple  # 9 floats, row-major
    translation: tuple[float, float, float]


@dataclass
class _FrameHeader:
    frame_index: int
    sim_time: float
    width: int
    height: int


@dataclass
class FramePreviewMsg(_FrameHeader):
    rgb: np.ndarray  # (h*w*3,) u8


@dataclass
class FrameFlowMsg(_FrameHeader):
    flow: np.ndarray  # (h*w*2,) f16


@dataclass
class FrameDepthMsg(_FrameHeader):
    depth: np.ndarray  # (h*w,) f16


@dataclass
class FrameGeneratedMsg(_FrameHeader):
    rgb: np.ndarray


@dataclass
class FrameNoiseMsg:
    h: int
    w: int
    c: int
    data: np.ndarray  # (h*w*c,) f16


@dataclass
class ControlMsg:
    cmd: int


@dataclass
class EventMsg:
    code: int
    detail: str = ""


@dataclass
class PixelPickMsg:
    u: int
    v: int


@dataclass
class PickResultMsg:
    point: tuple[float, float, float]


Message = Union[
    ActionPointForceMsg, ActionForceFieldMsg, ActionGripperMsg, ActionCameraMsg,
    FramePreviewMsg, FrameFlowMsg, FrameDepthMsg, FrameNoiseMsg, FrameGeneratedMsg,
    ControlMsg, EventMsg, PixelPickMsg, PickResultMsg,
]

_FRAME_HDR = struct.Struct("<Id HH")


def _pack(msg_type: int, payload: bytes) -> bytes:
    return HEADER.pack(MAGIC, VERSION, msg_type, len(payload)) + payload


def encode_message(msg: Message) -> bytes:
    if isinstance(msg, ActionPointForceMsg):
        return _pack(TYPE_ACTION_POINT_FORCE,
                     struct.pack("<8f", *msg.position, *msg.force, msg.radius, msg.duration))
    if isinstance(msg, ActionForceFieldMsg):
        return _pack(TYPE_ACTION_FORCE_FIELD,
                     struct.pack("<3fB6f", *msg.acceleration, msg.has_region, *msg.box))
    if isinstance(msg, ActionGripperMsg):
        return _pack(TYPE_ACTION_GRIPPER,
                     struct.pack("<8f", *msg.position, *msg.quaternion, msg.opening))
    if isinstance(msg, ActionCameraMsg):
        return _pack(TYPE_ACTION_CAMERA, struct.pack("<12f", *msg.rotation, *msg.translation))
    if isinstance(msg, FramePreviewMsg):
        return _pack(TYPE_FRAME_PREVIEW, _frame_payload(msg, np.asarray(msg.rgb, np.uint8)))
    if isinstance(msg, FrameGeneratedMsg):
        return _pack(TYPE_FRAME_GENERATED, _frame_payload(msg, np.asarray(msg.rgb, np.uint8)))
    if isinstance(msg, FrameFlowMsg):
        return _pack(TYPE_FRAME_FLOW, _frame_payload(msg, np.asarray(msg.flow, np.float16)))
    if isinstance(msg, FrameDepthMsg):
        return _pack(TYPE_FRAME_DEPTH, _frame_payload(msg, np.asarray(msg.depth, np.float16)))
    if isinstance(msg, FrameNoiseMsg):
        head = struct.pack("<HHH", msg.h, msg.w, msg.c)
        return _pack(TYPE_FRAME_NOISE, head + np.asarray(msg.data, np.float16).tobytes())
    if isinstance(msg, ControlMsg):
        return _pack(TYPE_CONTROL, struct.pack("<B", msg.cmd))
    if isinstance(msg, EventMsg):
        return _pack(TYPE_EVENT, struct.pack("<B", msg.code) + msg.detail.encode("utf-8"))
    if isinstance(msg, PixelPickMsg):
        return _pack(TYPE_PIXEL_PICK, struct.pack("<HH", msg.u, msg.v))
    if isinstance(msg, PickResultMsg):
        return _pack(TYPE_PICK_RESULT, struct.pack("<3f", *msg.point))
    raise TypeError(f"cannot encode {type(msg).__name__}")


def _frame_payload(msg: _FrameHeader, data: np.ndarray) -> bytes:
    return _FRAME_HDR.pack(msg.frame_index, msg.sim_time, msg.width, msg.height) + data.tobytes()


def _need(payload: bytes, n: int, what: str) -> None:
    if len(payload) != n:
        raise errors.ProtocolError(f"{what}: payload is {len(payload)} bytes, expected {n}")


def decode_message(buf: bytes, offset: int = 0) -> tuple[Message, int]:
    """Decode one message starting at ``offset``; returns (message, consumed)."""
    if len(buf) - offset < HEADER.size:
        raise errors.Incomplete(f"need {HEADER.size} header bytes, have {len(buf) - offset}")
    magic, version, msg_type, plen = HEADER.unpack_from(buf, offset)
    if magic != MAGIC:
        raise errors.ProtocolError(f"bad magic 0x{magic:08X}")
    if version != VERSION:
        raise errors.ProtocolError(f"unsupported protocol version {version}")
    total = HEADER.size + plen
    if len(buf) - offset < total:
        raise errors.Incomplete(f"need {total} bytes, have {len(buf) - offset}")
    payload = bytes(buf[offset + HEADER.size:offset + total])

    if msg_type == TYPE_ACTION_POINT_FORCE:
        _need(payload, 32, "point force")
        v = struct.unpack("<8f", payload)
        return ActionPointForceMsg(v[0:3], v[3:6], v[6], v[7]), total
    if msg_type == TYPE_ACTION_FORCE_FIELD:
        _need(payload, 37, "force field")
        v = struct.unpack("<3fB6f", payload)
        return ActionForceFieldMsg(v[0:3], bool(v[3]), v[4:10]), total
    if msg_type == TYPE_ACTION_GRIPPER:
        _need(payload, 32, "gripper")
        v = struct.unpack("<8f", payload)
        return ActionGripperMsg(v[0:3], v[3:7], v[7]), total
    if msg_type == TYPE_ACTION_CAMERA:
        _need(payload, 48, "camera")
        v = struct.unpack("<12f", payload)
        return ActionCameraMsg(v[0:9], v[9:12]), total
    if msg_type in (TYPE_FRAME_PREVIEW, TYPE_FRAME_GENERATED):
        hdr, data = _decode_frame(payload, 3, np.uint8, "preview")
        cls = FramePreviewMsg if msg_type == TYPE_FRAME_PREVIEW else FrameGeneratedMsg
        return cls(*hdr, data), total
    if msg_type == TYPE_FRAME_FLOW:
        hdr, data = _decode_frame(payload, 2, np.float16, "flow")
        return FrameFlowMsg(*hdr, data), total
    if msg_type == TYPE_FRAME_DEPTH:
        hdr, data = _decode_frame(payload, 1, np.float16, "depth")
        return FrameDepthMsg(*hdr, data), total
    if msg_type == TYPE_FRAME_NOISE:
        if len(payload) < 6:
            raise errors.ProtocolError("noise frame: payload too short")
        h, w, c = struct.unpack_from("<HHH", payload)
        body = payload[6:]
        if len(body) != h * w * c * 2:
            raise errors.ProtocolError(f"noise frame: {len(body)} data bytes for {h}x{w}x{c}")
        return FrameNoiseMsg(h, w, c, np.frombuffer(body, np.float16)), total
    if msg_type == TYPE_CONTROL:
        _need(payload, 1, "control")
        return ControlMsg(payload[0]), total
    if msg_type == TYPE_EVENT:
        if len(payload) < 1:
            raise errors.ProtocolError("event: payload too short")
        try:
            detail = payload[1:].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise errors.ProtocolError(f"event: bad utf-8 detail ({exc})") from None
        return EventMsg(payload[0], detail), total
    if msg_type == TYPE_PIXEL_PICK:
        _need(payload, 4, "pixel pick")
        u, v = struct.unpack("<HH", payload)
        return PixelPickMsg(u, v), total
    if msg_type == TYPE_PICK_RESULT:
        _need(payload, 12, "pick result")
        return PickResultMsg(struct.unpack("<3f", payload)), total
    raise errors.UnknownMessage(f"unknown message type 0x{msg_type:04X}", total, msg_type)


def _decode_frame(payload: bytes, comps: int, dtype, what: str):
    if len(payload) < _FRAME_HDR.size:
        raise errors.ProtocolError(f"{what} frame: payload too short")
    frame_index, sim_time, w, h = _FRAME_HDR.unpack_from(payload)
    body = payload[_FRAME_HDR.size:]
    expected = w * h * comps * np.dtype(dtype).itemsize
    if len(body) != expected:
        raise errors.ProtocolError(f"{what} frame: {len(body)} data bytes for {w}x{h}")
    return (frame_index, sim_time, w, h), np.frombuffer(body, dtype)


# ---------------------------------------------------------------------------
# Conversions between wire messages and domain objects

def action_from_message(msg: Message) -> Action:
    if isinstance(msg, ActionPointForceMsg):
        return PointForce(np.array(msg.position), np.array(msg.force),
                          float(msg.radius), float(msg.duration))
    if isinstance(msg, ActionForceFieldMsg):
        region = None
        if msg.has_region:
            region = np.array(msg.box, np.float64).reshape(2, 3)
        return ForceField(np.array(msg.acceleration), region)
    if isinstance(msg, ActionGripperMsg):
        q = np.array(msg.quaternion, np.float64)
        q /= np.linalg.norm(q)  # f32 transport wobbles the norm past validation
        return GripperCommand(np.array(msg.position), q, float(np.clip(msg.opening, 0.0, 1.0)))
    raise TypeError(f"{type(msg).__name__} is not an action message")


def camera_action_from_message(msg: ActionCameraMsg, template: Camera) -> CameraPose:
    rot = np.array(msg.rotation, np.float64).reshape(3, 3)
    # re-orthonormalize after the f32 round trip
    u, _, vt = np.linalg.svd(rot)
    rot = u @ np.diag([1.0, 1.0, float(np.linalg.det(u @ vt))]) @ vt
    cam = Camera(template.fx, template.fy, template.cx, template.cy,
                 template.width, template.height, rot, np.array(msg.translation))
    return CameraPose(cam)


def conditioning_messages(cond: ConditioningFrame) -> list[Message]:
    h, w = cond.preview.shape[:2]
    msgs: list[Message] = [
        FramePreviewMsg(cond.frame_index, cond.sim_time, w, h, cond.preview.ravel()),
        FrameFlowMsg(cond.frame_index, cond.sim_time, w, h, cond.flow.astype(np.float16).ravel()),
        FrameDepthMsg(cond.frame_index, cond.sim_time, w, h,
                      cond.depth_buffer.astype(np.float16).ravel()),
    ]
    if cond.warped_noise is not None:
        nh, nw, nc = cond.warped_noise.shape
        msgs.append(FrameNoiseMsg(nh, nw, nc, cond.warped_noise.astype(np.float16).ravel()))
    return msgs
