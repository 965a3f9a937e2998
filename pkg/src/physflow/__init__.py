"""physflow: real-time engine turning streamed 3D actions on a reconstructed
scene into per-frame conditioning signals (optical flow, coarse previews,
flow-warped noise, SDEdit-mixed latents) over a binary streaming protocol."""

__version__ = "0.1.0"
