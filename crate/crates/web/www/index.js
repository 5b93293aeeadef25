import init, { generate, corrupt, smooth, chamfer, Model } from "./pkg/gradfield_web.js";

const $ = (id) => document.getElementById(id);
const canvas = $("view");
const ctx = canvas.getContext("2d");

let clean = null;
let current = null;
let model = null;
let yaw = 0.6;
let pitch = 0.4;

function status(msg) {
  $("status").textContent = msg;
}

function report(label, t0) {
  const ms = (performance.now() - t0).toFixed(0);
  let msg = `${label}: ${current.length / 3} points in ${ms} ms`;
  if (clean && clean.length === current.length) {
    msg += `\nchamfer to clean: ${chamfer(current, clean).toExponential(3)}`;
  }
  status(msg);
}

function draw() {
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (!current) return;
  const n = current.length / 3;
  let cx = 0, cy = 0, cz = 0;
  for (let i = 0; i < n; i++) {
    cx += current[3 * i]; cy += current[3 * i + 1]; cz += current[3 * i + 2];
  }
  cx /= n; cy /= n; cz /= n;
  let radius = 1e-12;
  for (let i = 0; i < n; i++) {
    const dx = current[3 * i] - cx, dy = current[3 * i + 1] - cy, dz = current[3 * i + 2] - cz;
    radius = Math.max(radius, Math.hypot(dx, dy, dz));
  }
  const cyw = Math.cos(yaw), syw = Math.sin(yaw), cp = Math.cos(pitch), sp = Math.sin(pitch);
  const pts = [];
  for (let i = 0; i < n; i++) {
    const x = (current[3 * i] - cx) / radius;
    const y = (current[3 * i + 1] - cy) / radius;
    const z = (current[3 * i + 2] - cz) / radius;
    const x1 = cyw * x + syw * z;
    const z1 = -syw * x + cyw * z;
    const y1 = cp * y - sp * z1;
    const z2 = sp * y + cp * z1;
    pts.push([x1, y1, z2]);
  }
  pts.sort((a, b) => a[2] - b[2]);
  const s = canvas.width * 0.42;
  for (const [x, y, z] of pts) {
    const shade = Math.round(40 + 150 * (1 - (z + 1) / 2));
    ctx.fillStyle = `rgb(${shade}, ${shade + 30}, 220)`;
    ctx.fillRect(canvas.width / 2 + x * s - 1.5, canvas.height / 2 - y * s - 1.5, 3, 3);
  }
}

function guard(label, f) {
  return () => {
    try {
      const t0 = performance.now();
      f();
      report(label, t0);
      draw();
    } catch (e) {
      status(`error: ${e.message ?? e}`);
    }
  };
}

function needCloud() {
  if (!current) throw new Error("generate a shape first");
}

let dragging = null;
canvas.addEventListener("pointerdown", (e) => {
  dragging = [e.clientX, e.clientY];
  canvas.setPointerCapture(e.pointerId);
});
canvas.addEventListener("pointerup", () => (dragging = null));
canvas.addEventListener("pointermove", (e) => {
  if (!dragging) return;
  yaw += (e.clientX - dragging[0]) * 0.01;
  pitch = Math.max(-1.5, Math.min(1.5, pitch + (e.clientY - dragging[1]) * 0.01));
  dragging = [e.clientX, e.clientY];
  draw();
});

await init();

$("gen").onclick = guard("generate", () => {
  clean = generate($("shape").value, Number($("points").value), Number($("seed").value));
  current = clean.slice();
});
$("corrupt").onclick = guard("noise", () => {
  needCloud();
  current = corrupt(current, $("noise").value, Number($("level").value), Number($("seed").value));
});
$("smooth").onclick = guard("smooth", () => {
  needCloud();
  current = smooth(current, Number($("k").value), Number($("lambda").value));
});
$("denoise").onclick = guard("denoise", () => {
  needCloud();
  current = model.denoise(current, Number($("steps").value), $("reg").value, Number($("lambda").value));
});
$("reset").onclick = guard("clean", () => {
  needCloud();
  current = clean.slice();
});
$("ckpt").onchange = async (e) => {
  const file = e.target.files[0];
  if (!file) return;
  try {
    if (model) model.free();
    model = new Model(await file.text());
    $("denoise").disabled = false;
    status(`loaded model with ${model.parameters} parameters`);
  } catch (err) {
    model = null;
    $("denoise").disabled = true;
    status(`error: ${err.message ?? err}`);
  }
};

$("gen").onclick();
