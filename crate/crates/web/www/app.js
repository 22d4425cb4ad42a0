import init, { dn_spectrum, harmonic_field, recurrence } from "./pkg/dnlab_web.js";

const num = (id) => Number(document.getElementById(id).value);

function report(id, text, isError) {
  const el = document.getElementById(id);
  el.textContent = text;
  el.className = isError ? "err" : "";
}

function colour(v) {
  // blue for negative, red for positive
  const t = Math.max(-1, Math.min(1, v));
  const r = t > 0 ? 255 : Math.round(255 * (1 + t));
  const b = t < 0 ? 255 : Math.round(255 * (1 - t));
  const g = Math.round(255 * (1 - Math.abs(t)));
  return `rgb(${r},${g},${b})`;
}

function drawField() {
  const canvas = document.getElementById("field");
  const ctx = canvas.getContext("2d");
  try {
    const t0 = performance.now();
    const tri = harmonic_field(num("field-res"), num("field-mode"));
    const s = canvas.width / 2.1;
    const cx = canvas.width / 2, cy = canvas.height / 2;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    for (let i = 0; i < tri.length; i += 9) {
      const mean = (tri[i + 2] + tri[i + 5] + tri[i + 8]) / 3;
      ctx.fillStyle = ctx.strokeStyle = colour(mean);
      ctx.beginPath();
      ctx.moveTo(cx + s * tri[i], cy - s * tri[i + 1]);
      ctx.lineTo(cx + s * tri[i + 3], cy - s * tri[i + 4]);
      ctx.lineTo(cx + s * tri[i + 6], cy - s * tri[i + 7]);
      ctx.closePath();
      ctx.fill();
      ctx.stroke();
    }
    report("field-msg", `${tri.length / 9} triangles in ${(performance.now() - t0).toFixed(0)} ms`, false);
  } catch (e) {
    report("field-msg", String(e), true);
  }
}

function axes(ctx, w, h, pad) {
  ctx.strokeStyle = "#999";
  ctx.beginPath();
  ctx.moveTo(pad, pad);
  ctx.lineTo(pad, h - pad);
  ctx.lineTo(w - pad, h - pad);
  ctx.stroke();
}

function drawSpectrum() {
  const canvas = document.getElementById("spectrum");
  const ctx = canvas.getContext("2d");
  try {
    const res = num("spec-res");
    const aniso = dn_spectrum(res, num("h11"), num("h12"), num("h22"));
    const base = dn_spectrum(res, 1, 0, 1);
    const count = Math.min(24, base.length);
    const top = Math.max(aniso[count - 1], base[count - 1]);
    const pad = 30, w = canvas.width, h = canvas.height;
    ctx.clearRect(0, 0, w, h);
    axes(ctx, w, h, pad);
    const x = (i) => pad + (i + 0.5) * (w - 2 * pad) / count;
    const y = (v) => h - pad - v / top * (h - 2 * pad);
    for (const [series, fill, shift] of [[base, "#888", -3], [aniso, "#c33", 3]]) {
      ctx.fillStyle = fill;
      for (let i = 0; i < count; i++) {
        ctx.beginPath();
        ctx.arc(x(i) + shift, y(series[i]), 3, 0, 2 * Math.PI);
        ctx.fill();
      }
    }
    let shift = 0;
    for (let i = 0; i < count; i++) shift = Math.max(shift, Math.abs(aniso[i] - base[i]) / Math.max(base[i], 1));
    report("spec-msg", `grey: Euclidean, red: inclusion; largest relative change ${shift.toExponential(2)}`, false);
  } catch (e) {
    report("spec-msg", String(e), true);
  }
}

function drawRecurrence() {
  const canvas = document.getElementById("recurrence");
  const ctx = canvas.getContext("2d");
  try {
    const rows = recurrence(num("sigma0"), num("c"), num("steps"));
    const n = rows.length / 3 - 1;
    const pass = rows[3 * n + 1] === 1;
    const kMax = rows[3 * (n - 1)];
    let lo = Infinity, hi = -Infinity;
    for (let i = 0; i < n; i++) {
      lo = Math.min(lo, rows[3 * i + 2]);
      hi = Math.max(hi, rows[3 * i + 2] + 1, rows[3 * i + 1]);
    }
    const pad = 30, w = canvas.width, h = canvas.height;
    const x = (k) => pad + k / kMax * (w - 2 * pad);
    const y = (v) => h - pad - (v - lo) / (hi - lo) * (h - 2 * pad);
    ctx.clearRect(0, 0, w, h);
    axes(ctx, w, h, pad);
    const line = (offset, col, column) => {
      ctx.strokeStyle = col;
      ctx.beginPath();
      for (let i = 0; i < n; i++) {
        const px = x(rows[3 * i]), py = y(rows[3 * i + column] + offset);
        if (i === 0) ctx.moveTo(px, py); else ctx.lineTo(px, py);
      }
      ctx.stroke();
    };
    line(0, "#888", 2);
    line(1, "#888", 2);
    line(0, "#c33", 1);
    report("rec-msg", `${pass ? "both bounds hold" : "a bound fails"}; smallest lower margin ${rows[3 * n + 2].toExponential(2)}`, !pass);
  } catch (e) {
    report("rec-msg", String(e), true);
  }
}

await init();
document.getElementById("field-run").addEventListener("click", drawField);
document.getElementById("spec-run").addEventListener("click", drawSpectrum);
document.getElementById("rec-run").addEventListener("click", drawRecurrence);
drawField();
drawSpectrum();
drawRecurrence();
