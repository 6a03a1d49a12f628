import init, { Session, inverse_depth_samples } from "./pkg/mvdepth_demo.js";

const W = 160;
const H = 128;
const $ = (id) => document.getElementById(id);
let session = null;

function paint(canvas, rgba, w, h) {
  canvas.width = w;
  canvas.height = h;
  canvas.getContext("2d").putImageData(new ImageData(new Uint8ClampedArray(rgba), w, h), 0, 0);
}

function run() {
  $("status").textContent = "working…";
  // Yield so the status text renders before the synchronous sweep.
  setTimeout(() => {
    try {
      const t0 = performance.now();
      session?.free();
      session = new Session(
        $("scene").value, W, H,
        Number($("baseline").value), Number($("measurements").value),
        Number($("nd").value), BigInt($("seed").value),
      );
      paint($("reference"), session.reference_rgba(), W, H);
      paint($("estimate"), session.estimate_rgba(), W, H);
      paint($("truth"), session.truth_rgba(), W, H);
      const ms = (performance.now() - t0).toFixed(0);
      $("status").textContent = `L1-inv ${session.l1_inv().toFixed(4)} m⁻¹ in ${ms} ms`;
      showCurve(W >> 1, H >> 1);
    } catch (e) {
      $("status").textContent = `error: ${e.message ?? e}`;
    }
  }, 0);
}

function line(ctx, pts, color) {
  ctx.strokeStyle = color;
  ctx.lineWidth = 2;
  ctx.beginPath();
  let pen = false;
  for (const [x, y] of pts) {
    if (Number.isNaN(y)) { pen = false; continue; }
    pen ? ctx.lineTo(x, y) : ctx.moveTo(x, y);
    pen = true;
  }
  ctx.stroke();
}

function vertical(ctx, x, color) {
  if (Number.isNaN(x)) return;
  ctx.strokeStyle = color;
  ctx.beginPath();
  ctx.moveTo(x, 0);
  ctx.lineTo(x, ctx.canvas.height);
  ctx.stroke();
}

function showCurve(px, py) {
  if (!session) return;
  const inv = session.inverse_depths();
  const single = session.single_curve(px, py);
  const multi = session.multi_curve(px, py);
  const all = [...single, ...multi].filter((c) => !Number.isNaN(c));
  const top = Math.max(1e-6, ...all);
  const canvas = $("curve");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const lo = inv[0];
  const hi = inv[inv.length - 1];
  const sx = (v) => ((v - lo) / (hi - lo)) * (canvas.width - 20) + 10;
  const sy = (c) => canvas.height - 10 - (c / top) * (canvas.height - 20);
  line(ctx, single.map((c, i) => [sx(inv[i]), sy(c)]), "#999");
  line(ctx, multi.map((c, i) => [sx(inv[i]), sy(c)]), "#1f5fbf");
  vertical(ctx, sx(session.truth_inverse(px, py)), "#c0392b");
  vertical(ctx, sx(session.estimate_inverse(px, py)), "#27ae60");
  const t = session.truth_inverse(px, py);
  const e = session.estimate_inverse(px, py);
  $("pixel").textContent =
    `Pixel (${px}, ${py}): true ${(1 / t).toFixed(3)} m, estimated ${(1 / e).toFixed(3)} m.`;
}

function onPick(ev) {
  const r = ev.target.getBoundingClientRect();
  const x = Math.floor(((ev.clientX - r.left) / r.width) * W);
  const y = Math.floor(((ev.clientY - r.top) / r.height) * H);
  showCurve(Math.min(W - 1, x), Math.min(H - 1, y));
}

function sample() {
  const canvas = $("samples");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  try {
    const dmin = Number($("dmin").value);
    const dmax = Number($("dmax").value);
    const inv = inverse_depth_samples(dmin, dmax, Number($("count").value));
    // Ticks on a linear depth axis show how inverse-uniform spacing crowds the near range.
    const sx = (d) => ((d - dmin) / (dmax - dmin)) * (canvas.width - 20) + 10;
    ctx.strokeStyle = "#1f5fbf";
    for (const v of inv) vertical(ctx, sx(1 / v), "#1f5fbf");
    $("samples-text").textContent =
      "Depths (m): " + Array.from(inv, (v) => (1 / v).toFixed(3)).reverse().join(", ");
  } catch (e) {
    $("samples-text").textContent = `error: ${e.message ?? e}`;
  }
}

await init();
for (const id of ["reference", "estimate", "truth"]) $(id).addEventListener("click", onPick);
$("run").addEventListener("click", run);
$("sample").addEventListener("click", sample);
sample();
run();
