/**
 * Binary wire protocol, little-endian. Mirrors the server:
 * magic u32 | version u16 | type u16 | payload_len u32 | payload.
 */

export const MAGIC = 0x52574e44;
export const VERSION = 1;
export const HEADER_SIZE = 12;

export const TYPE_ACTION_POINT_FORCE = 0x0001;
export const TYPE_ACTION_FORCE_FIELD = 0x0002;
export const TYPE_ACTION_GRIPPER = 0x0003;
export const TYPE_ACTION_CAMERA = 0x0004;
export const TYPE_FRAME_PREVIEW = 0x0010;
export const TYPE_FRAME_FLOW = 0x0011;
export const TYPE_FRAME_DEPTH = 0x0012;
export const TYPE_FRAME_NOISE = 0x0013;
export const TYPE_FRAME_GENERATED = 0x0014;
export const TYPE_CONTROL = 0x0020;
export const TYPE_EVENT = 0x0021;
export const TYPE_PIXEL_PICK = 0x0030;
export const TYPE_PICK_RESULT = 0x0031;

export const CMD_RESET = 0;
export const CMD_PAUSE = 1;
export const CMD_RESUME = 2;
export const CMD_SNAPSHOT = 3;
export const CMD_LOAD_SNAPSHOT = 4;

export const EVENT_INFO = 0;
export const EVENT_FROZEN = 1;
export const EVENT_RESET_DONE = 2;
export const EVENT_ERROR = 3;
export const EVENT_WARNING = 4;
export const EVENT_TELEMETRY = 5;

export type Vec3 = [number, number, number];

export interface PointForceMsg {
  kind: "point_force";
  position: Vec3;
  force: Vec3;
  radius: number;
  duration: number;
}

export interface ForceFieldMsg {
  kind: "force_field";
  acceleration: Vec3;
  hasRegion: boolean;
  box: [number, number, number, number, number, number];
}

export interface GripperMsg {
  kind: "gripper";
  position: Vec3;
  quaternion: [number, number, number, number]; // wxyz
  opening: number;
}

export interface CameraMsg {
  kind: "camera";
  rotation: number[]; // 9, row-major world->camera
  translation: Vec3;
}

export interface FrameMsg {
  kind: "preview" | "generated" | "flow" | "depth";
  frameIndex: number;
  simTime: number;
  width: number;
  height: number;
  /** raw payload body after the frame header (RGB8 or packed f16) */
  data: Uint8Array;
}

export interface NoiseMsg {
  kind: "noise";
  h: number;
  w: number;
  c: number;
  data: Uint8Array;
}

export interface ControlMsg {
  kind: "control";
  cmd: number;
}

export interface EventMsg {
  kind: "event";
  code: number;
  detail: string;
}

export interface PixelPickMsg {
  kind: "pixel_pick";
  u: number;
  v: number;
}

export interface PickResultMsg {
  kind: "pick_result";
  point: Vec3;
}

export type Message =
  | PointForceMsg | ForceFieldMsg | GripperMsg | CameraMsg
  | FrameMsg | NoiseMsg | ControlMsg | EventMsg | PixelPickMsg | PickResultMsg;

export class ProtocolError extends Error {}
export class Incomplete extends Error {}
export class UnknownMessage extends Error {
  constructor(public msgType: number, public consumed: number) {
    super(`unknown message type 0x${msgType.toString(16)}`);
  }
}

function header(type: number, payloadLen: number): DataView {
  const buf = new ArrayBuffer(HEADER_SIZE + payloadLen);
  const dv = new DataView(buf);
  dv.setUint32(0, MAGIC, true);
  dv.setUint16(4, VERSION, true);
  dv.setUint16(6, type, true);
  dv.setUint32(8, payloadLen, true);
  return dv;
}

export function encodePointForce(m: Omit<PointForceMsg, "kind">): ArrayBuffer {
  const dv = header(TYPE_ACTION_POINT_FORCE, 32);
  const vals = [...m.position, ...m.force, m.radius, m.duration];
  vals.forEach((v, i) => dv.setFloat32(HEADER_SIZE + 4 * i, v, true));
  return dv.buffer as ArrayBuffer;
}

export function encodeForceField(accel: Vec3, region?: [Vec3, Vec3]): ArrayBuffer {
  const dv = header(TYPE_ACTION_FORCE_FIELD, 37);
  accel.forEach((v, i) => dv.setFloat32(HEADER_SIZE + 4 * i, v, true));
  dv.setUint8(HEADER_SIZE + 12, region ? 1 : 0);
  const box = region ? [...region[0], ...region[1]] : [0, 0, 0, 0, 0, 0];
  box.forEach((v, i) => dv.setFloat32(HEADER_SIZE + 13 + 4 * i, v, true));
  return dv.buffer as ArrayBuffer;
}

export function encodeGripper(m: Omit<GripperMsg, "kind">): ArrayBuffer {
  const dv = header(TYPE_ACTION_GRIPPER, 32);
  const vals = [...m.position, ...m.quaternion, m.opening];
  vals.forEach((v, i) => dv.setFloat32(HEADER_SIZE + 4 * i, v, true));
  return dv.buffer as ArrayBuffer;
}

export function encodeCamera(rotation: number[], translation: Vec3): ArrayBuffer {
  if (rotation.length !== 9) throw new ProtocolError("rotation must have 9 entries");
  const dv = header(TYPE_ACTION_CAMERA, 48);
  rotation.forEach((v, i) => dv.setFloat32(HEADER_SIZE + 4 * i, v, true));
  translation.forEach((v, i) => dv.setFloat32(HEADER_SIZE + 36 + 4 * i, v, true));
  return dv.buffer as ArrayBuffer;
}

export function encodeControl(cmd: number): ArrayBuffer {
  const dv = header(TYPE_CONTROL, 1);
  dv.setUint8(HEADER_SIZE, cmd);
  return dv.buffer as ArrayBuffer;
}

export function encodePixelPick(u: number, v: number): ArrayBuffer {
  const dv = header(TYPE_PIXEL_PICK, 4);
  dv.setUint16(HEADER_SIZE, u, true);
  dv.setUint16(HEADER_SIZE + 2, v, true);
  return dv.buffer as ArrayBuffer;
}

function f32s(dv: DataView, offset: number, n: number): number[] {
  const out = new Array<number>(n);
  for (let i = 0; i < n; i++) out[i] = dv.getFloat32(offset + 4 * i, true);
  return out;
}

/** Decode one message; returns [message, bytesConsumed]. */
export function decodeMessage(buf: ArrayBuffer | Uint8Array, offset = 0): [Message, number] {
  const bytes = buf instanceof Uint8Array ? buf : new Uint8Array(buf);
  if (bytes.length - offset < HEADER_SIZE) throw new Incomplete("short header");
  const dv = new DataView(bytes.buffer, bytes.byteOffset + offset);
  const magic = dv.getUint32(0, true);
  if (magic !== MAGIC) throw new ProtocolError(`bad magic 0x${magic.toString(16)}`);
  const version = dv.getUint16(4, true);
  if (version !== VERSION) throw new ProtocolError(`unsupported version ${version}`);
  const type = dv.getUint16(6, true);
  const plen = dv.getUint32(8, true);
  const total = HEADER_SIZE + plen;
  if (bytes.length - offset < total) throw new Incomplete("short payload");
  const body = new DataView(bytes.buffer, bytes.byteOffset + offset + HEADER_SIZE, plen);
  const raw = bytes.subarray(offset + HEADER_SIZE, offset + total);

  const need = (n: number, what: string) => {
    if (plen !== n) throw new ProtocolError(`${what}: payload ${plen} != ${n}`);
  };

  switch (type) {
    case TYPE_ACTION_POINT_FORCE: {
      need(32, "point force");
      const v = f32s(body, 0, 8);
      return [{ kind: "point_force", position: [v[0], v[1], v[2]],
                force: [v[3], v[4], v[5]], radius: v[6], duration: v[7] }, total];
    }
    case TYPE_ACTION_FORCE_FIELD: {
      need(37, "force field");
      const a = f32s(body, 0, 3);
      const has = body.getUint8(12) !== 0;
      const box = f32s(body, 13, 6);
      return [{ kind: "force_field", acceleration: [a[0], a[1], a[2]], hasRegion: has,
                box: box as ForceFieldMsg["box"] }, total];
    }
    case TYPE_ACTION_GRIPPER: {
      need(32, "gripper");
      const v = f32s(body, 0, 8);
      return [{ kind: "gripper", position: [v[0], v[1], v[2]],
                quaternion: [v[3], v[4], v[5], v[6]], opening: v[7] }, total];
    }
    case TYPE_ACTION_CAMERA: {
      need(48, "camera");
      const v = f32s(body, 0, 12);
      return [{ kind: "camera", rotation: v.slice(0, 9),
                translation: [v[9], v[10], v[11]] }, total];
    }
    case TYPE_FRAME_PREVIEW:
    case TYPE_FRAME_GENERATED:
    case TYPE_FRAME_FLOW:
    case TYPE_FRAME_DEPTH: {
      if (plen < 16) throw new ProtocolError("frame: payload too short");
      const frameIndex = body.getUint32(0, true);
      const simTime = body.getFloat64(4, true);
      const width = body.getUint16(12, true);
      const height = body.getUint16(14, true);
      const data = raw.subarray(16);
      const comps = type === TYPE_FRAME_FLOW ? 2 : type === TYPE_FRAME_DEPTH ? 1 : 3;
      const unit = type === TYPE_FRAME_PREVIEW || type === TYPE_FRAME_GENERATED ? 1 : 2;
      if (data.length !== width * height * comps * unit)
        throw new ProtocolError(`frame: ${data.length} data bytes for ${width}x${height}`);
      const kind = type === TYPE_FRAME_PREVIEW ? "preview"
        : type === TYPE_FRAME_GENERATED ? "generated"
        : type === TYPE_FRAME_FLOW ? "flow" : "depth";
      return [{ kind, frameIndex, simTime, width, height, data }, total];
    }
    case TYPE_FRAME_NOISE: {
      if (plen < 6) throw new ProtocolError("noise: payload too short");
      const h = body.getUint16(0, true);
      const w = body.getUint16(2, true);
      const c = body.getUint16(4, true);
      const data = raw.subarray(6);
      if (data.length !== h * w * c * 2)
        throw new ProtocolError(`noise: ${data.length} bytes for ${h}x${w}x${c}`);
      return [{ kind: "noise", h, w, c, data }, total];
    }
    case TYPE_CONTROL: {
      need(1, "control");
      return [{ kind: "control", cmd: body.getUint8(0) }, total];
    }
    case TYPE_EVENT: {
      if (plen < 1) throw new ProtocolError("event: payload too short");
      const detail = new TextDecoder("utf-8", { fatal: true }).decode(raw.subarray(1));
      return [{ kind: "event", code: body.getUint8(0), detail }, total];
    }
    case TYPE_PIXEL_PICK: {
      need(4, "pixel pick");
      return [{ kind: "pixel_pick", u: body.getUint16(0, true), v: body.getUint16(2, true) }, total];
    }
    case TYPE_PICK_RESULT: {
      need(12, "pick result");
      const v = f32s(body, 0, 3);
      return [{ kind: "pick_result", point: [v[0], v[1], v[2]] }, total];
    }
    default:
      throw new UnknownMessage(type, total);
  }
}

/** IEEE half precision to float (flow/depth/noise payloads). */
export function halfToFloat(bits: number): number {
  const sign = (bits & 0x8000) !== 0 ? -1 : 1;
  const exp = (bits >> 10) & 0x1f;
  const frac = bits & 0x3ff;
  if (exp === 0) return sign * frac * 2 ** -24;
  if (exp === 31) return frac ? NaN : sign * Infinity;
  return sign * (1 + frac / 1024) * 2 ** (exp - 15);
}

/** Sample one f16 pair (e.g. a flow vector) from a packed payload. */
export function flowAt(msg: FrameMsg, x: number, y: number): [number, number] {
  const idx = (y * msg.width + x) * 2;
  const dv = new DataView(msg.data.buffer, msg.data.byteOffset);
  return [halfToFloat(dv.getUint16(idx * 2, true)),
          halfToFloat(dv.getUint16(idx * 2 + 2, true))];
}
