"""Report rendering for the CLI: delimited per-frame records plus matplotlib
figures written alongside them in the output directory."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_STAGES = ("physics_ms", "render_ms", "noise_ms", "generate_ms", "tick_ms")


def write_timings_csv(path: Path, records: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "sim_time", *_STAGES, "kinetic_energy", "momentum_x",
                         "momentum_y", "momentum_z"])
        for rec in records:
            writer.writerow([
                rec["frame"], f"{rec['sim_time']:.6f}",
                *(f"{rec['timings'].get(k, 0.0):.4f}" for k in _STAGES),
                f"{rec['kinetic_energy']:.9g}",
                *(f"{v:.9g}" for v in rec["momentum"]),
            ])


def figure_timings(path: Path, records: list[dict]) -> None:
    frames = [r["frame"] for r in records]
    fig, ax = plt.subplots(figsize=(8, 4))
    for stage in ("physics_ms", "render_ms", "noise_ms"):
        ax.plot(frames, [r["timings"].get(stage, 0.0) for r in records], label=stage, lw=1)
    ax.plot(frames, [r["timings"].get("tick_ms", 0.0) for r in records],
            label="tick_ms", lw=1.5, color="k")
    ax.set_xlabel("frame")
    ax.set_ylabel("latency (ms)")
    ax.legend(loc="upper right", fontsize=8)
    ax.set_title("per-stage latency")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def figure_energy(path: Path, records: list[dict]) -> None:
    frames = [r["frame"] for r in records]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.plot(frames, [r["kinetic_energy"] for r in records], color="tab:red", lw=1.2)
    ax1.set_xlabel("frame")
    ax1.set_ylabel("kinetic energy (J)")
    ax1.set_title("kinetic energy")
    mom = np.array([r["momentum"] for r in records])
    if len(mom):
        for k, lbl in enumerate("xyz"):
            ax2.plot(frames, mom[:, k], label=f"p_{lbl}", lw=1)
    ax2.set_xlabel("frame")
    ax2.set_ylabel("momentum (kg m/s)")
    ax2.legend(fontsize=8)
    ax2.set_title("total momentum")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def figure_frames(path: Path, preview: np.ndarray, flow: np.ndarray) -> None:
    mag = np.linalg.norm(flow.astype(np.float64), axis=2)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 3.5))
    ax1.imshow(preview)
    ax1.set_title("final preview")
    ax1.axis("off")
    im = ax2.imshow(mag, cmap="magma")
    ax2.set_title("final |flow| (px)")
    ax2.axis("off")
    fig.colorbar(im, ax=ax2, fraction=0.035)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def write_bench_report(outdir: Path, results: dict) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    rows = []
    for name, res in results.items():
        if "stages" in res:
            for stage, st in res["stages"].items():
                rows.append((name, stage, st["p50_ms"], st["p95_ms"]))
        elif "p50_ms" in res:
            rows.append((name, "physics_step", res["p50_ms"], res["p95_ms"]))
    with open(outdir / "bench.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bench", "stage", "p50_ms", "p95_ms"])
        writer.writerows(rows)
    if rows:
        fig, ax = plt.subplots(figsize=(8, 0.6 * len(rows) + 1.5))
        labels = [f"{b}:{s}" for b, s, _, _ in rows]
        y = np.arange(len(rows))
        ax.barh(y - 0.18, [r[2] for r in rows], height=0.34, label="p50")
        ax.barh(y + 0.18, [r[3] for r in rows], height=0.34, label="p95")
        ax.set_yticks(y, labels, fontsize=8)
        ax.set_xlabel("latency (ms)")
        ax.legend()
        ax.set_title("benchmark latencies")
        fig.tight_layout()
        fig.savefig(outdir / "bench.png", dpi=110)
        plt.close(fig)
