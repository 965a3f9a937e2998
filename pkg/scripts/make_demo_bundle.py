#!/usr/bin/env python3
"""Generate a small synthetic scene bundle (the file format an external
reconstruction pipeline would produce): a ground plane receding from the
camera with a sand mound and a rigid card resting on it.

Bundles are camera-frame with identity extrinsics, so "down" is +y; the
bundle overrides gravity accordingly.

Usage: python3 scripts/make_demo_bundle.py out_dir [--size WxH]
"""

import argparse

import numpy as np

from physflow.ingest import MaskEntry, SceneBundle, save_scene_bundle
from physflow.scene import make_material

CAM_HEIGHT = 0.5  # meters above the floor plane
WALL_DEPTH = 5.0


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out")
    ap.add_argument("--size", default="160x96", help="WxH in pixels")
    args = ap.parse_args()
    w, h = (int(v) for v in args.size.split("x"))
    fx = fy = 0.9 * w
    cx, cy = w / 2.0, h / 2.0
    rng = np.random.default_rng(0)

    vv, uu = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")

    # floor plane y = CAM_HEIGHT: depth along the pixel ray, capped by a wall
    denom = (vv - cy) / fy
    t = np.where(denom > 1e-6, CAM_HEIGHT / np.maximum(denom, 1e-6), np.inf)
    depth = np.minimum(t, WALL_DEPTH).astype(np.float32)
    floor = t < WALL_DEPTH

    image = np.zeros((h, w, 3), np.uint8)
    image[~floor] = (130, 140, 155)
    checker = (((uu // 8) + (vv // 8)) % 2).astype(bool)
    image[floor & checker] = (150, 130, 105)
    image[floor & ~checker] = (125, 108, 88)
    background = image.copy()
    bg_depth = depth.copy()

    def standing_card(cu, half_u, v_base, height_px, dome=False):
        """Mask + base depth for an object standing on the floor at v_base."""
        if dome:
            mask = (((uu - cu) / half_u) ** 2
                    + ((vv - v_base) / height_px) ** 2 <= 1.0) & (vv <= v_base)
        else:
            mask = (np.abs(uu - cu) <= half_u) & (vv <= v_base) & (vv > v_base - height_px)
        d0 = CAM_HEIGHT / ((v_base - cy) / fy)
        return mask, np.float32(d0)

    sand_mask, sand_d = standing_card(0.38 * w, 0.11 * w, int(0.88 * h), int(0.28 * h),
                                      dome=True)
    crate_mask, crate_d = standing_card(0.66 * w, 0.055 * w, int(0.80 * h), int(0.16 * h))
    crate_mask &= ~sand_mask

    image[sand_mask] = (213, 178, 110)
    image[crate_mask] = (165, 70, 55)
    depth[sand_mask] = sand_d + 0.02 * rng.random(int(sand_mask.sum()))
    depth[crate_mask] = crate_d + 0.02 * rng.random(int(crate_mask.sum()))

    masks = [
        MaskEntry(sand_mask, make_material("granular"), name="sand"),
        MaskEntry(crate_mask, make_material("rigid", density=400.0), name="crate"),
    ]
    bundle = SceneBundle(image, depth, {"fx": fx, "fy": fy, "cx": cx, "cy": cy},
                         background, bg_depth, masks, gravity=(0.0, 9.8, 0.0))
    save_scene_bundle(bundle, args.out)
    print(f"wrote {args.out}: {w}x{h}, {len(masks)} objects, "
          f"{int(sand_mask.sum())} sand px, {int(crate_mask.sum())} crate px")


if __name__ == "__main__":
    main()
