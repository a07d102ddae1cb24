import init, { mask_map, masked_image, roc, surrogate_curve } from "./pkg/oled_demo_web.js";

const N = 32;
const $ = (id) => document.getElementById(id);

// A crude "8" drawn on the padded canvas, values in [-1, 1].
function digit() {
  const img = new Float32Array(N * N).fill(-1);
  for (let y = 0; y < N; y++) {
    for (let x = 0; x < N; x++) {
      for (const cy of [11, 21]) {
        const d = Math.hypot(y - cy, x - 16);
        if (Math.abs(d - 5) < 1.6) img[y * N + x] = 1 - Math.abs(d - 5) / 1.6;
      }
    }
  }
  return img;
}

function blob() {
  const a = new Float32Array(N * N);
  for (let i = 0; i < N * N; i++) {
    const y = Math.floor(i / N), x = i % N;
    a[i] = Math.exp(-((y - 16) ** 2 + (x - 16) ** 2) / 40);
  }
  return a;
}

function paintGrid(ctx, values, color) {
  const s = ctx.canvas.width / N;
  for (let i = 0; i < N * N; i++) {
    ctx.fillStyle = color(values[i], i);
    ctx.fillRect((i % N) * s, Math.floor(i / N) * s, s, s);
  }
}

const gray = (v) => {
  const g = Math.round(((v + 1) / 2) * 255);
  return `rgb(${g},${g},${g})`;
};

function setupMask() {
  const image = digit();
  let act = blob();
  const actCtx = $("act").getContext("2d");
  const outCtx = $("masked").getContext("2d");

  const render = () => {
    const t = parseFloat($("t").value);
    $("t-out").textContent = t.toFixed(3);
    const mask = mask_map(act, N, N, t);
    const xm = masked_image(image, act, N, N, t);
    const max = Math.max(...act, 1e-6);
    paintGrid(actCtx, act, (v, i) => {
      const h = Math.round((v / max) * 255);
      return mask[i] ? `rgb(${h},${h >> 1},0)` : `rgb(${h},${h},255)`;
    });
    paintGrid(outCtx, xm, gray);
    $("count").textContent = mask.filter((m) => m === 0).length;
  };

  const brush = (ev) => {
    if (!(ev.buttons & 1)) return;
    const r = $("act").getBoundingClientRect();
    const cx = ((ev.clientX - r.left) / r.width) * N;
    const cy = ((ev.clientY - r.top) / r.height) * N;
    for (let i = 0; i < N * N; i++) {
      const d2 = ((i % N) + 0.5 - cx) ** 2 + (Math.floor(i / N) + 0.5 - cy) ** 2;
      const w = Math.exp(-d2 / 3) * 0.3;
      act[i] = Math.max(0, act[i] + (ev.shiftKey ? -w : w));
    }
    render();
  };
  $("act").addEventListener("pointerdown", brush);
  $("act").addEventListener("pointermove", brush);
  $("t").addEventListener("input", render);
  $("reset").addEventListener("click", () => {
    act = blob();
    render();
  });
  render();
}

function gaussian() {
  const u = 1 - Math.random();
  return Math.sqrt(-2 * Math.log(u)) * Math.cos(2 * Math.PI * Math.random());
}

function setupRoc() {
  const ctx = $("roc-plot").getContext("2d");
  const W = ctx.canvas.width;

  const render = () => {
    const scores = [], labels = [];
    for (const line of $("scores").value.split("\n")) {
      const [s, l] = line.trim().split(/\s+/);
      if (s === undefined || l === undefined) continue;
      scores.push(parseFloat(s));
      labels.push(l === "1" ? 1 : 0);
    }
    ctx.clearRect(0, 0, W, W);
    ctx.strokeStyle = "#ccc";
    ctx.beginPath();
    ctx.moveTo(0, W);
    ctx.lineTo(W, 0);
    ctx.stroke();
    let r;
    try {
      r = roc(new Float64Array(scores), new Uint8Array(labels));
    } catch (e) {
      $("auc").textContent = $("eer").textContent = String(e.message ?? e);
      return;
    }
    const fpr = r.fpr, tpr = r.tpr;
    ctx.strokeStyle = "#c40";
    ctx.lineWidth = 2;
    ctx.beginPath();
    fpr.forEach((f, i) => ctx.lineTo(f * W, (1 - tpr[i]) * W));
    ctx.stroke();
    ctx.fillStyle = "#06c";
    ctx.beginPath();
    ctx.arc(r.eer * W, r.eer * W, 4, 0, 2 * Math.PI);
    ctx.fill();
    $("auc").textContent = r.auc.toFixed(4);
    $("eer").textContent = r.eer.toFixed(4);
    r.free();
  };

  const generate = () => {
    const sep = parseFloat($("sep").value);
    const lines = [];
    for (let i = 0; i < 60; i++) {
      const out = i % 3 === 0;
      lines.push(`${(gaussian() + (out ? sep : 0)).toFixed(2)} ${out ? 1 : 0}`);
    }
    $("scores").value = lines.join("\n");
    render();
  };
  $("scores").addEventListener("input", render);
  $("gen").addEventListener("click", generate);
  $("sep").addEventListener("input", generate);
  generate();
}

function setupSurrogate() {
  const ctx = $("sur-plot").getContext("2d");
  const [W, H] = [ctx.canvas.width, ctx.canvas.height];
  const n = 400, lo = -0.5, hi = 2.5;

  const render = () => {
    const s = parseFloat($("s").value);
    const eps = 10 ** parseFloat($("eps").value);
    $("eps-out").textContent = eps.toPrecision(2);
    const v = surrogate_curve(s, eps, lo, hi, n);
    const a = v.subarray(0, n), val = v.subarray(n, 2 * n);
    const dp = v.subarray(2 * n, 3 * n), ds = v.subarray(3 * n);
    // y axis spans [-1.5, 1.5]
    const px = (x) => ((x - lo) / (hi - lo)) * W;
    const py = (y) => H / 2 - (y / 1.5) * (H / 2);
    ctx.clearRect(0, 0, W, H);
    ctx.strokeStyle = "#ccc";
    ctx.lineWidth = 1;
    ctx.beginPath();
    ctx.moveTo(0, py(0));
    ctx.lineTo(W, py(0));
    ctx.moveTo(px(s), 0);
    ctx.lineTo(px(s), H);
    ctx.stroke();
    const line = (ys, color, dash) => {
      ctx.strokeStyle = color;
      ctx.setLineDash(dash);
      ctx.lineWidth = 2;
      ctx.beginPath();
      for (let i = 0; i < n; i++) ctx.lineTo(px(a[i]), py(Math.max(-1.5, Math.min(1.5, ys[i]))));
      ctx.stroke();
      ctx.setLineDash([]);
    };
    line(val, "#222", []);
    line(dp, "#c22", []);
    line(ds, "#26c", [6, 4]);
  };
  $("s").addEventListener("input", render);
  $("eps").addEventListener("input", render);
  render();
}

await init();
setupMask();
setupRoc();
setupSurrogate();
