import init, { Demo } from "./pkg/netlasso_wasm.js";

const $ = (id) => document.getElementById(id);
const canvas = $("graph");
const ctx = canvas.getContext("2d");

let demo = null;
let scene = null;
let estimate = null;
let prediction = null;
let pos = [];
const forced = new Set();

function num(id) {
  return Number($(id).value);
}

function status(msg) {
  $("status").textContent = msg || "";
}

// force-directed layout, deterministic start on a circle
function layout(n, edges) {
  const w = canvas.width, h = canvas.height;
  const p = Array.from({ length: n }, (_, i) => {
    const a = (2 * Math.PI * i) / n;
    return { x: w / 2 + 0.4 * w * Math.cos(a), y: h / 2 + 0.4 * h * Math.sin(a) };
  });
  const k = Math.sqrt((w * h) / Math.max(n, 1)) * 0.6;
  let temp = w / 10;
  for (let it = 0; it < 150; it++) {
    const disp = p.map(() => ({ x: 0, y: 0 }));
    for (let i = 0; i < n; i++) {
      for (let j = i + 1; j < n; j++) {
        const dx = p[i].x - p[j].x, dy = p[i].y - p[j].y;
        const d2 = Math.max(dx * dx + dy * dy, 0.01);
        const f = (k * k) / d2;
        disp[i].x += dx * f; disp[i].y += dy * f;
        disp[j].x -= dx * f; disp[j].y -= dy * f;
      }
    }
    for (const [i, j] of edges) {
      const dx = p[i].x - p[j].x, dy = p[i].y - p[j].y;
      const d = Math.max(Math.hypot(dx, dy), 0.1);
      const f = d / k;
      disp[i].x -= dx * f; disp[i].y -= dy * f;
      disp[j].x += dx * f; disp[j].y += dy * f;
    }
    for (let i = 0; i < n; i++) {
      const d = Math.max(Math.hypot(disp[i].x, disp[i].y), 0.01);
      const step = Math.min(d, temp);
      p[i].x = Math.min(w - 12, Math.max(12, p[i].x + (disp[i].x / d) * step));
      p[i].y = Math.min(h - 12, Math.max(12, p[i].y + (disp[i].y / d) * step));
    }
    temp *= 0.96;
  }
  return p;
}

function shade(v, lo, hi) {
  const t = hi > lo ? (v - lo) / (hi - lo) : 0.5;
  const c = Math.round(235 - 170 * Math.min(1, Math.max(0, t)));
  return `rgb(${c}, ${c + 10}, 255)`;
}

function draw() {
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (!scene) return;
  ctx.strokeStyle = "rgba(0, 0, 0, 0.08)";
  ctx.beginPath();
  for (const [i, j] of scene.edges) {
    ctx.moveTo(pos[i].x, pos[i].y);
    ctx.lineTo(pos[j].x, pos[j].y);
  }
  ctx.stroke();

  // node colour: predicted outcome after a what-if, observed outcome otherwise
  let values = scene.outcome;
  if (prediction) {
    values = scene.outcome.slice();
    prediction.followers.forEach((node, k) => { values[node] = prediction.predicted[k]; });
    for (const node of prediction.forced) values[node] = 1;
  }
  const lo = Math.min(...values), hi = Math.max(...values);
  const found = new Set(estimate ? estimate.rejected : []);
  const leaders = new Set(scene.leaders);
  for (let i = 0; i < scene.n; i++) {
    ctx.beginPath();
    ctx.arc(pos[i].x, pos[i].y, leaders.has(i) || found.has(i) ? 7 : 4.5, 0, 2 * Math.PI);
    ctx.fillStyle = forced.has(i) ? "#f90" : found.has(i) ? "#2a7" : shade(values[i], lo, hi);
    ctx.fill();
    if (leaders.has(i)) {
      ctx.lineWidth = 2.5;
      ctx.strokeStyle = "#d33";
      ctx.stroke();
    }
  }
}

function fmt(x, d = 3) {
  return Number.isFinite(x) ? x.toFixed(d) : String(x);
}

function showEstimate() {
  const e = estimate;
  const leaders = new Set(scene.leaders);
  $("summary").innerHTML =
    `<p>Detected ${e.rejected.length} node(s): ${e.hits} of ${scene.leaders.length} true key players, ${e.false_hits} false.` +
    ` Covariate coefficient ${fmt(e.b_hat)} (interval ${fmt(e.beta_ci[0])} to ${fmt(e.beta_ci[1])}, true value 3).</p>`;
  // detected nodes first, then the true key players, then the strongest of the rest
  const order = [...Array(scene.n).keys()].sort((a, b) => e.p_values[a] - e.p_values[b]);
  const shown = new Set([...e.rejected, ...scene.leaders, ...order.slice(0, 10)]);
  const rows = order.filter((i) => shown.has(i)).map((i) => {
    const truth = leaders.has(i) ? scene.effect : 0;
    return `<tr class="${leaders.has(i) ? "leader" : ""}"><td>${i}</td><td>${fmt(truth, 2)}</td><td>${fmt(e.eta_hat[i])}</td>` +
      `<td>${fmt(e.e_hat[i])}</td><td>${fmt(e.ci_lower[i])}</td><td>${fmt(e.ci_upper[i])}</td>` +
      `<td>${e.p_values[i].toExponential(2)}</td><td>${e.rejected.includes(i) ? "yes" : ""}</td></tr>`;
  });
  $("table").innerHTML =
    "<tr><th>node</th><th>true</th><th>lasso</th><th>de-biased</th><th>lower</th><th>upper</th><th>p-value</th><th>detected</th></tr>" +
    rows.join("");
}

function simulate() {
  try {
    demo?.free();
    demo = new Demo(num("n"), num("p"), num("leaders"), num("effect"), num("seed"));
    scene = JSON.parse(demo.scene());
  } catch (err) {
    demo = null;
    scene = null;
    status(err.message);
    draw();
    return;
  }
  estimate = null;
  prediction = null;
  forced.clear();
  updateForced();
  pos = layout(scene.n, scene.edges);
  $("estimate").disabled = false;
  $("whatif").disabled = true;
  $("summary").innerHTML = `<p>${scene.n} nodes, ${scene.edges.length} links, spillover radius ${fmt(scene.spectral_radius)}.</p>`;
  $("table").innerHTML = "";
  status();
  draw();
}

function runEstimate() {
  try {
    estimate = JSON.parse(demo.estimate(num("c"), num("level"), num("q")));
  } catch (err) {
    status(err.message);
    return;
  }
  prediction = null;
  $("whatif").disabled = false;
  status();
  showEstimate();
  draw();
}

function updateForced() {
  $("forced").textContent = forced.size ? [...forced].sort((a, b) => a - b).join(", ") : "none selected";
}

function runWhatIf() {
  try {
    prediction = JSON.parse(demo.whatIf(Uint32Array.from(forced)));
  } catch (err) {
    status(err.message);
    return;
  }
  status();
  const gain = prediction.mean_outcome - prediction.baseline_mean;
  $("summary").innerHTML =
    `<p>Forcing ${prediction.forced.length} node(s) to 1 moves the mean predicted outcome of the other ${prediction.followers.length}` +
    ` from ${fmt(prediction.baseline_mean)} to ${fmt(prediction.mean_outcome)} (${gain >= 0 ? "+" : ""}${fmt(gain)}).</p>`;
  draw();
}

canvas.addEventListener("click", (ev) => {
  if (!scene) return;
  const r = canvas.getBoundingClientRect();
  const x = ((ev.clientX - r.left) * canvas.width) / r.width;
  const y = ((ev.clientY - r.top) * canvas.height) / r.height;
  let best = -1, bestD = 15;
  pos.forEach((p, i) => {
    const d = Math.hypot(p.x - x, p.y - y);
    if (d < bestD) { best = i; bestD = d; }
  });
  if (best < 0) return;
  forced.has(best) ? forced.delete(best) : forced.add(best);
  updateForced();
  draw();
});

$("simulate").addEventListener("click", simulate);
$("estimate").addEventListener("click", runEstimate);
$("whatif").addEventListener("click", runWhatIf);
$("clear").addEventListener("click", () => {
  forced.clear();
  prediction = null;
  updateForced();
  draw();
});

await init();
simulate();
