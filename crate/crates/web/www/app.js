import init, { surrogate_sensitivity, compare_engines, sinusoid_objective } from "./pkg/excite_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function plot(canvas, times, series, yMax) {
  const dpr = window.devicePixelRatio || 1;
  const w = canvas.clientWidth, h = canvas.clientHeight;
  canvas.width = w * dpr;
  canvas.height = h * dpr;
  const ctx = canvas.getContext("2d");
  ctx.scale(dpr, dpr);
  ctx.clearRect(0, 0, w, h);
  const pad = 30;
  const t1 = times[times.length - 1];
  const top = yMax ?? Math.max(1e-12, ...series.flatMap((s) => Array.from(s.data).filter(Number.isFinite)));
  const x = (t) => pad + (t / t1) * (w - 2 * pad);
  const y = (v) => h - pad - (v / top) * (h - 2 * pad);
  ctx.strokeStyle = "#bbb";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#555";
  ctx.font = "11px sans-serif";
  ctx.fillText(top.toPrecision(3), 2, pad + 4);
  ctx.fillText("0", 2, h - pad);
  ctx.fillText(`${t1} s`, w - pad - 20, h - pad + 14);
  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    let pen = false;
    for (let k = 0; k < times.length; k++) {
      const v = s.data[k];
      if (!Number.isFinite(v)) { pen = false; continue; }
      if (pen) ctx.lineTo(x(times[k]), y(v)); else ctx.moveTo(x(times[k]), y(v));
      pen = true;
    }
    ctx.stroke();
  }
}

function guard(fn) {
  return () => {
    try {
      $("status").textContent = "";
      fn();
    } catch (e) {
      $("status").textContent = String(e.message ?? e);
    }
  };
}

function runSensitivity() {
  const r = surrogate_sensitivity(num("u0"), num("f"), num("phase"), num("degree"), num("noise"));
  const t = r.times(), sc = r.s_c(), sd = r.s_d();
  const top = Math.max(...sc, ...sd, ...r.s_min(), 1e-12);
  const input = t.map((tt) => (0.5 + 0.5 * Math.sin(2 * Math.PI * num("f") * tt - num("phase"))) * top);
  plot($("plot-sens"), t, [
    { data: input, color: "#2a2" },
    { data: r.s_min(), color: "#888" },
    { data: sc, color: "#1f5fa8" },
    { data: sd, color: "#c0392b" },
  ], top);
  $("out-sens").textContent = `impact ‖ΔS‖₁: c = ${r.impact_c().toExponential(3)}, d = ${r.impact_d().toExponential(3)}`;
}

function runCompare() {
  const r = compare_engines(num("u0"), num("f"), num("phase"), num("samples"), BigInt(num("seed")));
  plot($("plot-cmp"), r.times(), [
    { data: r.iota_c(), color: "#7fb0e8" },
    { data: r.iota_d(), color: "#e8a09a" },
    { data: r.su_c(), color: "#1f5fa8" },
    { data: r.su_d(), color: "#c0392b" },
  ], 1);
}

function runObjective() {
  const [jc, jd] = sinusoid_objective(num("u0"), num("f"), num("phase"), num("noise"));
  $("out-obj").textContent = `J (spring constant weighting) = ${jc.toExponential(4)}, J (damping weighting) = ${jd.toExponential(4)}`;
}

await init();
$("status").textContent = "";
$("run-sens").onclick = guard(runSensitivity);
$("run-cmp").onclick = guard(runCompare);
$("run-obj").onclick = guard(runObjective);
guard(runSensitivity)();
