/**
 * Orbit camera: drag rotates the view around the scene pivot. Orientation is
 * kept as a unit quaternion and composed incrementally, so the emitted
 * rotation matrices stay orthonormal over arbitrarily long sessions.
 */

export type Quat = [number, number, number, number]; // wxyz
export type Vec3 = [number, number, number];

export function quatMul(a: Quat, b: Quat): Quat {
  const [aw, ax, ay, az] = a;
  const [bw, bx, by, bz] = b;
  return [
    aw * bw - ax * bx - ay * by - az * bz,
    aw * bx + ax * bw + ay * bz - az * by,
    aw * by - ax * bz + ay * bw + az * bx,
    aw * bz + ax * by - ay * bx + az * bw,
  ];
}

export function quatNormalize(q: Quat): Quat {
  const n = Math.hypot(q[0], q[1], q[2], q[3]);
  return [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
}

export function axisAngle(axis: Vec3, angle: number): Quat {
  const n = Math.hypot(axis[0], axis[1], axis[2]) || 1;
  const s = Math.sin(angle / 2);
  return [Math.cos(angle / 2), (axis[0] / n) * s, (axis[1] / n) * s, (axis[2] / n) * s];
}

/** Row-major 3x3 rotating camera-frame vectors into world frame. */
export function quatToMatrix(q: Quat): number[] {
  const [w, x, y, z] = q;
  return [
    1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
    2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
    2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y),
  ];
}

export function matrixToQuat(m: number[]): Quat {
  const tr = m[0] + m[4] + m[8];
  let q: Quat;
  if (tr > 0) {
    const s = Math.sqrt(tr + 1) * 2;
    q = [s / 4, (m[7] - m[5]) / s, (m[2] - m[6]) / s, (m[3] - m[1]) / s];
  } else if (m[0] > m[4] && m[0] > m[8]) {
    const s = Math.sqrt(1 + m[0] - m[4] - m[8]) * 2;
    q = [(m[7] - m[5]) / s, s / 4, (m[1] + m[3]) / s, (m[2] + m[6]) / s];
  } else if (m[4] > m[8]) {
    const s = Math.sqrt(1 + m[4] - m[0] - m[8]) * 2;
    q = [(m[2] - m[6]) / s, (m[1] + m[3]) / s, s / 4, (m[5] + m[7]) / s];
  } else {
    const s = Math.sqrt(1 + m[8] - m[0] - m[4]) * 2;
    q = [(m[3] - m[1]) / s, (m[2] + m[6]) / s, (m[5] + m[7]) / s, s / 4];
  }
  return quatNormalize(q);
}

export interface CameraPose {
  rotation: number[]; // row-major world->camera
  translation: Vec3; // t = -R eye
}

export class OrbitController {
  /** camera-to-world orientation */
  private q: Quat;
  radius: number;
  pivot: Vec3;
  up: Vec3;

  constructor(initial: CameraPose, pivot: Vec3, up: Vec3 = [0, 0, 1]) {
    // world->camera rows are the camera axes; transpose = camera->world
    const r = initial.rotation;
    const rt = [r[0], r[3], r[6], r[1], r[4], r[7], r[2], r[5], r[8]];
    this.q = matrixToQuat(rt);
    this.pivot = [...pivot] as Vec3;
    this.up = [...up] as Vec3;
    const eye = this.eyeFrom(initial);
    this.radius = Math.hypot(eye[0] - pivot[0], eye[1] - pivot[1], eye[2] - pivot[2]) || 1;
  }

  private eyeFrom(pose: CameraPose): Vec3 {
    // eye = -R^T t
    const r = pose.rotation;
    const t = pose.translation;
    return [
      -(r[0] * t[0] + r[3] * t[1] + r[6] * t[2]),
      -(r[1] * t[0] + r[4] * t[1] + r[7] * t[2]),
      -(r[2] * t[0] + r[5] * t[1] + r[8] * t[2]),
    ];
  }

  /** camera axes in world coordinates (columns of camera->world). */
  axes(): { x: Vec3; y: Vec3; z: Vec3 } {
    const m = quatToMatrix(this.q);
    return {
      x: [m[0], m[3], m[6]],
      y: [m[1], m[4], m[7]],
      z: [m[2], m[5], m[8]],
    };
  }

  /** Apply a pointer drag (pixels); returns the new pose to send. */
  drag(dx: number, dy: number, pixelsPerRadian = 250): CameraPose {
    const dAzim = -dx / pixelsPerRadian;
    const dElev = -dy / pixelsPerRadian;
    const { x } = this.axes();
    this.q = quatNormalize(quatMul(axisAngle(this.up, dAzim),
                                   quatMul(axisAngle(x, dElev), this.q)));
    return this.pose();
  }

  zoom(factor: number): CameraPose {
    this.radius = Math.max(0.05, this.radius * factor);
    return this.pose();
  }

  pose(): CameraPose {
    const m = quatToMatrix(this.q); // camera->world
    // world->camera = transpose
    const rot = [m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]];
    const { z } = this.axes();
    const eye: Vec3 = [
      this.pivot[0] - z[0] * this.radius,
      this.pivot[1] - z[1] * this.radius,
      this.pivot[2] - z[2] * this.radius,
    ];
    const t: Vec3 = [
      -(rot[0] * eye[0] + rot[1] * eye[1] + rot[2] * eye[2]),
      -(rot[3] * eye[0] + rot[4] * eye[1] + rot[5] * eye[2]),
      -(rot[6] * eye[0] + rot[7] * eye[1] + rot[8] * eye[2]),
    ];
    return { rotation: rot, translation: t };
  }
}

/** max |R^T R - I| entry, for drift checks. */
export function orthonormalityError(rot: number[]): number {
  let worst = 0;
  for (let i = 0; i < 3; i++) {
    for (let j = 0; j < 3; j++) {
      let dot = 0;
      for (let k = 0; k < 3; k++) dot += rot[k * 3 + i] * rot[k * 3 + j];
      worst = Math.max(worst, Math.abs(dot - (i === j ? 1 : 0)));
    }
  }
  return worst;
}
