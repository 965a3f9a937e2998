/**
 * 2D pointer gestures lifted into 3D actions. A press picks the world point
 * under the cursor (server PixelPick round trip); the drag direction maps to
 * the camera's image plane at that depth, or along the view ray when the
 * modifier is held.
 */

import type { Vec3 } from "./protocol.js";

export interface ForceGestureInput {
  /** picked world point (from PickResult); null means no target under cursor */
  pick: Vec3 | null;
  dragPx: [number, number]; // pixel-space drag vector (du, dv)
  strength: number; // newtons
  radius: number; // meters
  duration: number; // seconds
  /** camera axes in world coordinates (unit) */
  camX: Vec3;
  camY: Vec3;
  camZ: Vec3;
  alongRay?: boolean;
}

export interface ForceAction {
  position: Vec3;
  force: Vec3;
  radius: number;
  duration: number;
}

/** null when the gesture has no target or no direction. */
export function liftForceGesture(input: ForceGestureInput): ForceAction | null {
  if (!input.pick) return null;
  const [du, dv] = input.dragPx;
  const mag = Math.hypot(du, dv);
  let dir: Vec3;
  if (input.alongRay) {
    dir = [...input.camZ] as Vec3;
  } else {
    if (mag < 1e-9) return null; // zero-length drag
    // image +u is camera +x, image +v is camera +y (y points down in both)
    dir = [
      (du * input.camX[0] + dv * input.camY[0]) / mag,
      (du * input.camX[1] + dv * input.camY[1]) / mag,
      (du * input.camX[2] + dv * input.camY[2]) / mag,
    ];
  }
  return {
    position: input.pick,
    force: [dir[0] * input.strength, dir[1] * input.strength, dir[2] * input.strength],
    radius: input.radius,
    duration: input.duration,
  };
}

export interface GripperState {
  position: Vec3;
  quaternion: [number, number, number, number];
  opening: number;
}

const TELEOP_SPEED = 0.25; // m/s client-side integration

/** Integrate held teleop keys into a new gripper pose. */
export function stepTeleop(state: GripperState, keys: Set<string>, dt: number,
                           camX: Vec3, camY: Vec3, camZ: Vec3): GripperState {
  const move: Vec3 = [0, 0, 0];
  const add = (axis: Vec3, s: number) => {
    move[0] += axis[0] * s;
    move[1] += axis[1] * s;
    move[2] += axis[2] * s;
  };
  if (keys.has("w")) add(camZ, 1);
  if (keys.has("s")) add(camZ, -1);
  if (keys.has("a")) add(camX, -1);
  if (keys.has("d")) add(camX, 1);
  if (keys.has("q")) add(camY, 1); // camera +y is down
  if (keys.has("e")) add(camY, -1);
  const n = Math.hypot(move[0], move[1], move[2]);
  if (n < 1e-12) return state;
  const s = (TELEOP_SPEED * dt) / n;
  return {
    ...state,
    position: [state.position[0] + move[0] * s,
               state.position[1] + move[1] * s,
               state.position[2] + move[2] * s],
  };
}
