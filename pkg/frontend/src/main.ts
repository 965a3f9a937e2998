/** DOM wiring for the cockpit: canvases, tools, sliders, and the send loop.
 * All logic that deserves tests lives in protocol/orbit/gestures/overlay. */

import { CockpitClient, type ServerHello } from "./client.js";
import { liftForceGesture, stepTeleop, type GripperState } from "./gestures.js";
import { OrbitController } from "./orbit.js";
import { flowArrows } from "./overlay.js";
import {
  CMD_LOAD_SNAPSHOT, CMD_PAUSE, CMD_RESET, CMD_RESUME, CMD_SNAPSHOT,
  encodeCamera, encodeControl, encodeForceField, encodeGripper, encodePointForce,
  EVENT_FROZEN, EVENT_TELEMETRY, type FrameMsg, type Vec3,
} from "./protocol.js";

const $ = <T extends HTMLElement>(id: string) => document.getElementById(id) as T;

const params = new URLSearchParams(location.search);
const wsUrl = params.get("ws")
  ?? `ws://${location.hostname || "127.0.0.1"}:${Number(location.port || 8766) - 1}`;

const canvas = $<HTMLCanvasElement>("view");
const overlayCanvas = $<HTMLCanvasElement>("overlay");
const ctx = canvas.getContext("2d")!;
const octx = overlayCanvas.getContext("2d")!;
const statusEl = $<HTMLSpanElement>("status");
const telemetryEl = $<HTMLSpanElement>("telemetry");
const logEl = $<HTMLDivElement>("log");

let latest: { preview?: FrameMsg; generated?: FrameMsg; flow?: FrameMsg; depth?: FrameMsg } = {};
let orbit: OrbitController | null = null;
let gripper: GripperState = { position: [0, 0, 0.3], quaternion: [1, 0, 0, 0], opening: 1 };
const keys = new Set<string>();
let frameTimes: number[] = [];

function log(text: string): void {
  const line = document.createElement("div");
  line.textContent = text;
  logEl.prepend(line);
  while (logEl.childElementCount > 30) logEl.lastElementChild?.remove();
}

function drawFrame(frame: FrameMsg): void {
  if (canvas.width !== frame.width) {
    canvas.width = overlayCanvas.width = frame.width;
    canvas.height = overlayCanvas.height = frame.height;
  }
  const img = ctx.createImageData(frame.width, frame.height);
  const n = frame.width * frame.height;
  for (let i = 0; i < n; i++) {
    img.data[4 * i] = frame.data[3 * i];
    img.data[4 * i + 1] = frame.data[3 * i + 1];
    img.data[4 * i + 2] = frame.data[3 * i + 2];
    img.data[4 * i + 3] = 255;
  }
  ctx.putImageData(img, 0, 0);
  frameTimes.push(performance.now());
  if (frameTimes.length > 60) frameTimes = frameTimes.slice(-60);
}

function drawOverlay(): void {
  octx.clearRect(0, 0, overlayCanvas.width, overlayCanvas.height);
  if (!$<HTMLInputElement>("show-flow").checked || !latest.flow) return;
  octx.strokeStyle = "rgba(80, 220, 255, 0.9)";
  octx.lineWidth = 1;
  for (const a of flowArrows(latest.flow, 16, 0.15, 2.0)) {
    octx.beginPath();
    octx.moveTo(a.x1, a.y1);
    octx.lineTo(a.x2, a.y2);
    octx.stroke();
    octx.fillStyle = "rgba(80, 220, 255, 0.9)";
    octx.fillRect(a.x2 - 1, a.y2 - 1, 2.5, 2.5);
  }
}

const client = new CockpitClient(wsUrl, {
  onHello: (hello: ServerHello) => {
    statusEl.textContent = `connected ${hello.width}x${hello.height} @ ${hello.fps} fps`;
    if (hello.camera) {
      const eye: Vec3 = [0, 0, 0];
      orbit = new OrbitController(
        { rotation: hello.camera.rotation, translation: hello.camera.translation as Vec3 },
        eye);
      // pivot: a point in front of the camera; refined by the first pick
      const z = orbit.axes().z;
      const e = orbit.pose();
      const eyeW: Vec3 = [
        -(e.rotation[0] * e.translation[0] + e.rotation[3] * e.translation[1] + e.rotation[6] * e.translation[2]),
        -(e.rotation[1] * e.translation[0] + e.rotation[4] * e.translation[1] + e.rotation[7] * e.translation[2]),
        -(e.rotation[2] * e.translation[0] + e.rotation[5] * e.translation[1] + e.rotation[8] * e.translation[2]),
      ];
      orbit.pivot = [eyeW[0] + z[0] * 1.5, eyeW[1] + z[1] * 1.5, eyeW[2] + z[2] * 1.5];
      orbit.radius = 1.5;
    }
  },
  onPreview: (f) => {
    latest.preview = f;
    if (viewMode() === "preview") {
      drawFrame(f);
      drawOverlay();
    }
    updateHud(f.simTime);
  },
  onGenerated: (f) => {
    latest.generated = f;
    if (viewMode() === "generated") {
      drawFrame(f);
      drawOverlay();
    }
  },
  onFlow: (f) => {
    latest.flow = f;
  },
  onDepth: (f) => {
    latest.depth = f;
  },
  onEvent: (ev) => {
    if (ev.code === EVENT_TELEMETRY) {
      telemetryEl.textContent = ev.detail;
    } else if (ev.code === EVENT_FROZEN) {
      log(`FROZEN: ${ev.detail}`);
      statusEl.textContent = "simulation frozen - press Reset";
    } else {
      log(`[${ev.code}] ${ev.detail}`);
    }
  },
  onStatus: (s) => {
    statusEl.textContent = s;
  },
  onVersionMismatch: (v) => {
    statusEl.textContent = `protocol version mismatch (server ${v}) - disconnected`;
    log("version mismatch; refusing to speak");
  },
}, (url) => new WebSocket(url) as unknown as import("./client.js").WebSocketLike);

function viewMode(): string {
  return $<HTMLSelectElement>("view-mode").value;
}

function updateHud(simTime: number): void {
  const fps = frameTimes.length > 1
    ? 1000 * (frameTimes.length - 1) / (frameTimes[frameTimes.length - 1] - frameTimes[0])
    : 0;
  $<HTMLSpanElement>("hud").textContent =
    `sim ${simTime.toFixed(2)} s | client ${fps.toFixed(1)} fps`;
}

// -- pointer tools ----------------------------------------------------------

let press: { u: number; v: number; pick: Vec3 | null } | null = null;
let dragging = false;

function canvasPixel(ev: PointerEvent): [number, number] {
  const r = canvas.getBoundingClientRect();
  return [
    Math.round(((ev.clientX - r.left) / r.width) * canvas.width),
    Math.round(((ev.clientY - r.top) / r.height) * canvas.height),
  ];
}

canvas.addEventListener("pointerdown", async (ev) => {
  const tool = $<HTMLSelectElement>("tool").value;
  const [u, v] = canvasPixel(ev);
  dragging = true;
  if (tool === "force") {
    const pick = await client.pick(u, v);
    press = { u, v, pick };
    if (!pick) log("no target under cursor");
  } else {
    press = { u, v, pick: null };
  }
});

let lastCameraSend = 0;
canvas.addEventListener("pointermove", (ev) => {
  if (!dragging || !press) return;
  const tool = $<HTMLSelectElement>("tool").value;
  if (tool === "camera" && orbit) {
    const pose = orbit.drag(ev.movementX, ev.movementY);
    const now = performance.now();
    if (now - lastCameraSend >= 1000 / 30) {
      lastCameraSend = now;
      client.send(encodeCamera(pose.rotation, pose.translation));
    }
  }
});

canvas.addEventListener("pointerup", (ev) => {
  if (!dragging || !press) return;
  dragging = false;
  const tool = $<HTMLSelectElement>("tool").value;
  const [u, v] = canvasPixel(ev);
  if (tool === "force" && orbit) {
    const axes = orbit.axes();
    const action = liftForceGesture({
      pick: press.pick,
      dragPx: [u - press.u, v - press.v],
      strength: Number($<HTMLInputElement>("strength").value),
      radius: Number($<HTMLInputElement>("radius").value),
      duration: 0.15,
      camX: axes.x, camY: axes.y, camZ: axes.z,
      alongRay: ev.shiftKey,
    });
    if (action) {
      client.send(encodePointForce(action));
      log(`force ${action.force.map((x) => x.toFixed(2)).join(", ")} N`);
    }
  }
  press = null;
});

canvas.addEventListener("wheel", (ev) => {
  if ($<HTMLSelectElement>("tool").value === "camera" && orbit) {
    ev.preventDefault();
    const pose = orbit.zoom(ev.deltaY > 0 ? 1.08 : 1 / 1.08);
    client.send(encodeCamera(pose.rotation, pose.translation));
  }
});

// -- keyboard gripper teleop --------------------------------------------------

window.addEventListener("keydown", (ev) => {
  if ($<HTMLSelectElement>("tool").value !== "gripper") return;
  if (ev.key === " ") {
    gripper = { ...gripper, opening: gripper.opening > 0.5 ? 0 : 1 };
    ev.preventDefault();
    return;
  }
  keys.add(ev.key.toLowerCase());
});
window.addEventListener("keyup", (ev) => keys.delete(ev.key.toLowerCase()));

// -- 30 Hz send loop: wind + gripper ------------------------------------------

let lastTick = performance.now();
setInterval(() => {
  const now = performance.now();
  const dt = (now - lastTick) / 1000;
  lastTick = now;
  const wind = Number($<HTMLInputElement>("wind").value);
  if (Math.abs(wind) > 1e-6 && orbit) {
    const x = orbit.axes().x;
    client.send(encodeForceField([x[0] * wind, x[1] * wind, x[2] * wind]));
  }
  if ($<HTMLSelectElement>("tool").value === "gripper" && orbit) {
    const axes = orbit.axes();
    const next = stepTeleop(gripper, keys, dt, axes.x, axes.y, axes.z);
    if (next !== gripper || next.opening !== gripper.opening) {
      gripper = next;
      client.send(encodeGripper(gripper));
    }
  }
}, 1000 / 30);

// -- control buttons -----------------------------------------------------------

const controls: Array<[string, number]> = [
  ["btn-reset", CMD_RESET], ["btn-pause", CMD_PAUSE], ["btn-resume", CMD_RESUME],
  ["btn-snapshot", CMD_SNAPSHOT], ["btn-restore", CMD_LOAD_SNAPSHOT],
];
for (const [id, cmd] of controls) {
  $<HTMLButtonElement>(id).addEventListener("click", () => client.send(encodeControl(cmd)));
}

$<HTMLInputElement>("prompt").addEventListener("change", () => {
  log("prompt noted (forwarded only when a generator plugin is attached)");
});

client.connect();
