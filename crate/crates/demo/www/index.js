import init, { simulate_curriculum, pass_at_k_curve, restructure } from "./pkg/clpo_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function lineChart(title, series, { w = 300, h = 200, logX = false } = {}) {
  const pad = 30;
  const fx = (x) => (logX ? Math.log2(x) : x);
  const xs = series.flatMap((s) => s.points.map((p) => fx(p[0])));
  const x0 = Math.min(...xs), x1 = Math.max(...xs, x0 + 1);
  const sx = (x) => pad + ((fx(x) - x0) / (x1 - x0)) * (w - pad - 8);
  const sy = (y) => 18 + (1 - y) * (h - 18 - pad);
  let svg = `<svg width="${w}" height="${h}" xmlns="http://www.w3.org/2000/svg" font-size="10">`;
  svg += `<text x="${w / 2}" y="12" text-anchor="middle" font-size="12">${title}</text>`;
  svg += `<path d="M${pad} 18 V${h - pad} H${w - 8}" stroke="black" fill="none"/>`;
  for (const y of [0, 0.5, 1]) svg += `<text x="${pad - 4}" y="${sy(y) + 3}" text-anchor="end">${y}</text>`;
  svg += `<text x="${pad}" y="${h - pad + 12}">${logX ? 2 ** x0 : x0}</text>`;
  svg += `<text x="${w - 8}" y="${h - pad + 12}" text-anchor="end">${logX ? 2 ** x1 : x1}</text>`;
  for (const s of series) {
    const d = s.points.map((p, i) => `${i ? "L" : "M"}${sx(p[0]).toFixed(1)} ${sy(p[1]).toFixed(1)}`).join(" ");
    svg += `<path d="${d}" stroke="${s.color}" fill="none" stroke-width="1.5"/>`;
  }
  return svg + "</svg>";
}

function parse(json, out) {
  const v = JSON.parse(json);
  if (v && v.error) {
    out.innerHTML = `<span class="err">${v.error}</span>`;
    return null;
  }
  return v;
}

function runSimulation() {
  $("sim-status").textContent = "training...";
  // let the status paint before the blocking call
  setTimeout(() => {
    const v = parse(simulate_curriculum(num("sim-seed"), num("sim-steps"), num("sim-batch"), num("sim-lr")), $("sim-status"));
    if (!v) return;
    $("sim-status").textContent = "";
    const charts = ["hard", "medium", "easy"].map((key) =>
      lineChart(`${key} ratio`, [
        { color: "#1f77b4", points: v.clpo.series.map((p) => [p.step, p[key]]) },
        { color: "#d62728", points: v.grpo.series.map((p) => [p.step, p[key]]) },
      ]),
    );
    charts.push(
      lineChart("pass@k (held-out)", [
        { color: "#1f77b4", points: v.clpo.pass_at_k },
        { color: "#d62728", points: v.grpo.pass_at_k },
      ], { logX: true }),
    );
    $("sim-charts").innerHTML = charts.join("");
    const row = (r) => `<tr><th class="${r.mode}">${r.mode.toUpperCase()}</th><td>${r.pass1.toFixed(4)}</td><td>${r.total_rollouts}</td></tr>`;
    $("sim-table").innerHTML = `<table><tr><th></th><th>pass@1</th><th>rollouts</th></tr>${row(v.clpo)}${row(v.grpo)}</table>`;
  }, 20);
}

function runPassAtK() {
  const v = parse(pass_at_k_curve(num("pk-n"), num("pk-c")), $("pk-out"));
  if (!v) return;
  const rows = v.map((p) => `<tr><td>${p.k}</td><td>${p.exact}</td><td>${p.value.toFixed(6)}</td></tr>`).join("");
  $("pk-out").innerHTML =
    lineChart("pass@k", [{ color: "#1f77b4", points: v.map((p) => [p.k, p.value]) }], { logX: v.length > 1 }) +
    `<table><tr><th>k</th><th>exact</th><th>value</th></tr>${rows}</table>`;
}

function runRestructure(kind) {
  const v = parse(restructure($("rs-text").value, kind, num("rs-seed")), $("rs-out"));
  if (!v) return;
  $("rs-out").textContent = [
    `original:   ${v.original}`,
    `values:     ${v.steps.join(" -> ")}  (answer ${v.answer})`,
    `${v.kind}:  ${v.rewritten}`,
    `answer:     ${v.rewritten_answer}  ${v.preserved ? "(preserved)" : "(CHANGED)"}${v.surface_only ? "  surface-only" : ""}`,
  ].join("\n");
}

await init();
$("sim-run").onclick = runSimulation;
$("pk-run").onclick = runPassAtK;
$("rs-simplify").onclick = () => runRestructure("simplify");
$("rs-diversify").onclick = () => runRestructure("diversify");
runPassAtK();
runRestructure("simplify");
