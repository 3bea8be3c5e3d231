import init, { tlap_histogram, residual_curve, partition_census, generate_instance } from "./pkg/dpjoin_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function guarded(fn) {
  return () => {
    $("err").textContent = "";
    try {
      fn();
    } catch (e) {
      $("err").textContent = String(e);
    }
  };
}

function axes(ctx, w, h, pad) {
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#999";
  ctx.beginPath();
  ctx.moveTo(pad, 0);
  ctx.lineTo(pad, h - pad);
  ctx.lineTo(w, h - pad);
  ctx.stroke();
}

function drawHistogram(h) {
  const c = $("t-canvas");
  const ctx = c.getContext("2d");
  const pad = 24;
  axes(ctx, c.width, c.height, pad);
  const top = Math.max(...h.bins.map((b) => b.count));
  const bw = (c.width - pad) / h.bins.length;
  ctx.fillStyle = "#4a78b5";
  h.bins.forEach((b, i) => {
    const bh = ((c.height - pad) * b.count) / top;
    ctx.fillRect(pad + i * bw, c.height - pad - bh, Math.max(bw - 1, 1), bh);
  });
  ctx.strokeStyle = "#c33";
  const x = pad + (c.width - pad) / 2;
  ctx.beginPath();
  ctx.moveTo(x, 0);
  ctx.lineTo(x, c.height - pad);
  ctx.stroke();
  ctx.fillStyle = "#222";
  ctx.fillText("0", pad, c.height - 8);
  ctx.fillText("τ", x - 3, c.height - 8);
  ctx.fillText("2τ", c.width - 16, c.height - 8);
}

function runTlap() {
  const h = JSON.parse(tlap_histogram(num("t-eps"), num("t-delta"), num("t-sens"), num("t-n"), 60, BigInt(num("t-seed"))));
  drawHistogram(h);
  $("t-out").textContent =
    `τ = ${h.tau.toFixed(4)}  scale = ${h.scale.toFixed(4)}  min = ${h.min.toFixed(4)}  ` +
    `max = ${h.max.toFixed(4)}  mean = ${h.mean.toFixed(4)}`;
}

function loadInstance() {
  $("r-inst").value = generate_instance($("r-gen").value);
}

function drawCurve(curve) {
  const c = $("r-canvas");
  const ctx = c.getContext("2d");
  const pad = 24;
  axes(ctx, c.width, c.height, pad);
  const pts = curve.points;
  const lx = (b) => Math.log(b);
  const x0 = lx(pts[0].beta);
  const x1 = lx(pts[pts.length - 1].beta) || x0 + 1;
  const top = Math.max(...pts.map((p) => p.rs));
  const px = (b) => pad + ((c.width - pad - 8) * (lx(b) - x0)) / (x1 - x0 || 1);
  const py = (v) => c.height - pad - ((c.height - pad - 8) * v) / top;
  ctx.strokeStyle = "#4a78b5";
  ctx.beginPath();
  pts.forEach((p, i) => (i ? ctx.lineTo(px(p.beta), py(p.rs)) : ctx.moveTo(px(p.beta), py(p.rs))));
  ctx.stroke();
  ctx.strokeStyle = "#c33";
  ctx.setLineDash([4, 4]);
  ctx.beginPath();
  ctx.moveTo(pad, py(curve.ls));
  ctx.lineTo(c.width, py(curve.ls));
  ctx.stroke();
  ctx.setLineDash([]);
  ctx.fillStyle = "#222";
  ctx.fillText("LS", c.width - 20, py(curve.ls) - 4);
  ctx.fillText(`β = ${pts[0].beta}`, pad + 2, c.height - 8);
  ctx.fillText(`β = ${pts[pts.length - 1].beta}`, c.width - 70, c.height - 8);
}

function runCurve() {
  if (!$("r-inst").value.trim()) loadInstance();
  const curve = JSON.parse(residual_curve($("r-inst").value, num("r-min"), num("r-max"), 60));
  drawCurve(curve);
  const first = curve.points[0];
  const last = curve.points[curve.points.length - 1];
  $("r-out").textContent =
    `relations = ${curve.relations}  n = ${curve.n}  count = ${curve.count}  LS = ${curve.ls}  ` +
    `RS(${first.beta}) = ${first.rs.toFixed(3)}  RS(${last.beta}) = ${last.rs.toFixed(3)}`;
}

function runCensus() {
  const inst = generate_instance(JSON.stringify({ gen: "gap", k: Number($("c-k").value) }));
  const c = JSON.parse(partition_census(inst, num("c-eps"), num("c-delta"), BigInt(num("c-seed"))));
  const rows = c.buckets
    .map(
      (b) =>
        `<tr><td>${b.bucket}</td><td>${b.lo.toFixed(2)}</td><td>${b.hi.toFixed(2)}</td>` +
        `<td>${b.values}</td><td>${b.true_degrees.join(", ")}</td><td>${b.join_size}</td></tr>`,
    )
    .join("");
  $("c-out").innerHTML =
    `<div class="stats">λ = ${c.lambda.toFixed(4)}  max multiplicity = ${c.max_multiplicity}</div>` +
    `<table><tr><th>bucket</th><th>lo</th><th>hi</th><th>join values</th><th>true degrees</th><th>join size</th></tr>${rows}</table>`;
}

await init();
$("t-run").onclick = guarded(runTlap);
$("r-load").onclick = guarded(loadInstance);
$("r-run").onclick = guarded(runCurve);
$("c-run").onclick = guarded(runCensus);
guarded(() => {
  runTlap();
  loadInstance();
  runCurve();
  runCensus();
})();
