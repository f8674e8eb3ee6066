import init, { filterResponse, similarityHeatmap, heatmapSize, recommendDemo } from "./pkg/polyfilter_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => parseFloat($(id).value);

function filterArgs() {
  return [$("r-kind").value, num("r-tau"), num("r-beta"), $("r-coeffs").value];
}

function fail(el, err) {
  el.className = "err";
  el.textContent = String(err.message ?? err);
}

function drawResponse() {
  const info = $("r-info");
  let data;
  try {
    data = JSON.parse(filterResponse(...filterArgs()));
  } catch (e) {
    return fail(info, e);
  }
  const c = $("r-plot"), g = c.getContext("2d");
  const all = data.gains.concat(data.ideal);
  const lo = Math.min(-0.2, ...all), hi = Math.max(1.2, ...all);
  const x = (l) => 40 + l * (c.width - 50);
  const y = (v) => c.height - 20 - ((v - lo) / (hi - lo)) * (c.height - 30);
  g.clearRect(0, 0, c.width, c.height);
  g.strokeStyle = "#bbb";
  g.beginPath(); g.moveTo(x(0), y(0)); g.lineTo(x(1), y(0)); g.stroke();
  g.fillStyle = "#555";
  g.fillText("0", 25, y(0) + 4); g.fillText("1", 25, y(1) + 4);
  g.fillText("λ=0", x(0), c.height - 5); g.fillText("λ=1", x(1) - 20, c.height - 5);
  const line = (ys, color) => {
    g.strokeStyle = color; g.beginPath();
    data.lambdas.forEach((l, i) => (i ? g.lineTo(x(l), y(ys[i])) : g.moveTo(x(l), y(ys[i]))));
    g.stroke();
  };
  line(data.ideal, "#aaa");
  line(data.gains, "#1f6fd1");
  info.className = "";
  info.textContent = `coefficients ${JSON.stringify(data.effective)}` +
    (data.rms === null ? "" : `\nstep fit rms ${data.rms.toFixed(6)}`);
}

function drawHeatmap() {
  const info = $("h-info");
  let values;
  try {
    values = similarityHeatmap(num("h-alpha"), num("h-s"), parseInt($("h-seed").value, 10));
  } catch (e) {
    return fail(info, e);
  }
  const n = heatmapSize();
  const c = $("h-plot"), g = c.getContext("2d");
  const img = g.createImageData(n, n);
  // Diagonal dominates; scale by the largest off-diagonal entry.
  let max = 0;
  for (let i = 0; i < n; i++) for (let j = 0; j < n; j++) if (i !== j) max = Math.max(max, values[i * n + j]);
  for (let p = 0; p < n * n; p++) {
    const v = Math.min(1, values[p] / (max || 1));
    const shade = 255 - Math.round(255 * Math.sqrt(v));
    img.data.set([shade, shade, 255, 255], p * 4);
  }
  const tmp = new OffscreenCanvas(n, n);
  tmp.getContext("2d").putImageData(img, 0, 0);
  g.imageSmoothingEnabled = false;
  g.drawImage(tmp, 0, 0, c.width, c.height);
  info.className = "";
  info.textContent = `${n}×${n}, max off-diagonal ${max.toExponential(3)}`;
}

function runRecommend() {
  const info = $("rec-info");
  info.textContent = "running…";
  setTimeout(() => {
    try {
      const r = JSON.parse(recommendDemo(num("h-alpha"), num("h-s"), ...filterArgs(), parseInt($("h-seed").value, 10)));
      const lines = [
        `${r.users} users, ${r.items} items, ${r.interactions} interactions`,
        `recall@20 ${r.recall.toFixed(4)}   ndcg@20 ${r.ndcg.toFixed(4)}   random recall@20 ${r.random_recall.toFixed(4)}`,
        "",
        "user  history clusters        top-8 clusters",
        ...r.samples.map((s) => `${String(s.user).padEnd(5)} ${JSON.stringify([...new Set(s.cluster_of_history)]).padEnd(24)} ${JSON.stringify(s.top_clusters)}`),
      ];
      info.className = "";
      info.textContent = lines.join("\n");
    } catch (e) {
      fail(info, e);
    }
  }, 0);
}

await init();
for (const id of ["r-kind", "r-tau", "r-beta", "r-coeffs"]) $(id).addEventListener("input", drawResponse);
for (const id of ["h-alpha", "h-s", "h-seed"]) $(id).addEventListener("change", drawHeatmap);
$("rec-run").addEventListener("click", runRecommend);
drawResponse();
drawHeatmap();
