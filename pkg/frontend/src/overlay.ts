/** Flow-vector glyph layer: subsampled arrows over the preview. */

import { flowAt, type FrameMsg } from "./protocol.js";

export interface Arrow {
  x1: number;
  y1: number;
  x2: number;
  y2: number;
  magnitude: number;
}

/**
 * One arrow per stride cell where |flow| exceeds minMagnitude; arrow length
 * equals the flow magnitude in pixels (scaled by gain).
 */
export function flowArrows(flow: FrameMsg, stride = 16, minMagnitude = 0.1,
                           gain = 1.0): Arrow[] {
  const arrows: Arrow[] = [];
  const half = Math.floor(stride / 2);
  for (let y = half; y < flow.height; y += stride) {
    for (let x = half; x < flow.width; x += stride) {
      const [fx, fy] = flowAt(flow, x, y);
      const mag = Math.hypot(fx, fy);
      if (!Number.isFinite(mag) || mag < minMagnitude) continue;
      arrows.push({ x1: x, y1: y, x2: x + fx * gain, y2: y + fy * gain, magnitude: mag });
    }
  }
  return arrows;
}
