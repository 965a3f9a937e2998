import { describe, expect, it } from "vitest";

import { OrbitController, orthonormalityError, type CameraPose } from "../src/orbit.js";

function lookDownPose(): CameraPose {
  // camera at (0, -1.2, 0.7) looking at the origin region, z-up world
  return {
    rotation: [1, 0, 0, 0, 0.5, -Math.sqrt(0.75), 0, Math.sqrt(0.75), 0.5],
    translation: [0, -0.2431, -1.389],
  };
}

describe("orbit controller", () => {
  it("no drag leaves the pose unchanged", () => {
    const orbit = new OrbitController(lookDownPose(), [0, 0, 0]);
    const a = orbit.pose();
    const b = orbit.pose();
    expect(a.rotation).toEqual(b.rotation);
    expect(a.translation).toEqual(b.translation);
  });

  it("360 degree azimuth drag returns to the start within 1e-4", () => {
    const orbit = new OrbitController(lookDownPose(), [0, 0, 0]);
    const start = orbit.pose();
    const steps = 120;
    const pixels = (2 * Math.PI * 250) / steps; // pixelsPerRadian = 250
    for (let i = 0; i < steps; i++) orbit.drag(-pixels, 0);
    const end = orbit.pose();
    for (let i = 0; i < 9; i++) {
      expect(Math.abs(end.rotation[i] - start.rotation[i])).toBeLessThan(1e-4);
    }
    for (let i = 0; i < 3; i++) {
      expect(Math.abs(end.translation[i] - start.translation[i])).toBeLessThan(1e-4);
    }
  });

  it("orthonormality drift stays under 1e-5 over 1000 drags", () => {
    const orbit = new OrbitController(lookDownPose(), [0, 0, 0]);
    let seed = 7;
    const rand = () => {
      seed = (seed * 1664525 + 1013904223) >>> 0;
      return seed / 2 ** 32 - 0.5;
    };
    let worst = 0;
    for (let i = 0; i < 1000; i++) {
      const pose = orbit.drag(rand() * 40, rand() * 40);
      worst = Math.max(worst, orthonormalityError(pose.rotation));
    }
    expect(worst).toBeLessThan(1e-5);
  });

  it("orbit keeps the pivot centered", () => {
    const orbit = new OrbitController(lookDownPose(), [0.2, 0.1, 0.0]);
    for (let i = 0; i < 50; i++) orbit.drag(13, -7);
    const pose = orbit.pose();
    // pivot in camera frame: R p + t must sit on the optical axis at +radius
    const p = orbit.pivot;
    const r = pose.rotation;
    const cx = r[0] * p[0] + r[1] * p[1] + r[2] * p[2] + pose.translation[0];
    const cy = r[3] * p[0] + r[4] * p[1] + r[5] * p[2] + pose.translation[1];
    const cz = r[6] * p[0] + r[7] * p[1] + r[8] * p[2] + pose.translation[2];
    expect(Math.abs(cx)).toBeLessThan(1e-9);
    expect(Math.abs(cy)).toBeLessThan(1e-9);
    expect(cz).toBeCloseTo(orbit.radius, 9);
  });

  it("zoom changes radius only", () => {
    const orbit = new OrbitController(lookDownPose(), [0, 0, 0]);
    const r0 = orbit.radius;
    const before = orbit.pose().rotation;
    orbit.zoom(1.5);
    expect(orbit.radius).toBeCloseTo(r0 * 1.5, 12);
    expect(orbit.pose().rotation).toEqual(before);
  });
});
