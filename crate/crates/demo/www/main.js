import init, { error_curve, amplification_curve, Explorer } from "./pkg/budgeter_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function plot(canvas, xs, ys, xLabel, yLabel) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 48;
  ctx.clearRect(0, 0, w, h);
  const lx = xs.map(Math.log10);
  const x0 = Math.min(...lx), x1 = Math.max(...lx);
  const y1 = Math.max(...ys) * 1.05, y0 = 0;
  const px = (x) => pad + (Math.log10(x) - x0) / (x1 - x0) * (w - 2 * pad);
  const py = (y) => h - pad + (y0 - y) / (y1 - y0) * (h - 2 * pad);

  ctx.strokeStyle = "#999";
  ctx.beginPath();
  ctx.moveTo(pad, pad / 2);
  ctx.lineTo(pad, h - pad);
  ctx.lineTo(w - pad / 2, h - pad);
  ctx.stroke();
  ctx.fillStyle = "#444";
  ctx.font = "12px system-ui";
  ctx.fillText(xLabel + " (log scale)", w / 2 - 40, h - 12);
  ctx.fillText(yLabel, 4, pad / 2 - 6);
  ctx.fillText(xs[0].toPrecision(3), pad - 10, h - pad + 16);
  ctx.fillText(xs[xs.length - 1].toPrecision(3), w - pad - 30, h - pad + 16);
  ctx.fillText(y1.toPrecision(3), 4, pad);

  ctx.strokeStyle = "#1f5fbf";
  ctx.lineWidth = 2;
  ctx.beginPath();
  xs.forEach((x, i) => (i ? ctx.lineTo(px(x), py(ys[i])) : ctx.moveTo(px(x), py(ys[i]))));
  ctx.stroke();
  ctx.lineWidth = 1;
}

function drawCurve() {
  $("curve-error").textContent = "";
  const points = 60, lo = 0.01, hi = 2;
  try {
    const ys = error_curve($("curve-kind").value, num("curve-lower"), num("curve-upper"),
      num("curve-n"), num("curve-conf"), lo, hi, points);
    const xs = Array.from({ length: points }, (_, i) => lo * Math.pow(hi / lo, i / (points - 1)));
    plot($("curve"), xs, Array.from(ys), "epsilon", "error bound");
  } catch (e) {
    $("curve-error").textContent = e;
  }
}

function drawAmplification() {
  $("amp-error").textContent = "";
  const points = 60, n = num("amp-n"), m = num("amp-m");
  try {
    const ys = amplification_curve(num("amp-eps"), n, m, points);
    const xs = Array.from({ length: points }, (_, i) => n * Math.pow(m / n, i / (points - 1)));
    plot($("amp"), xs, Array.from(ys), "population size", "internal epsilon");
  } catch (e) {
    $("amp-error").textContent = e;
  }
}

const kinds = ["mean", "histogram", "cdf"];
let explorer;

function renderRows() {
  const eps = explorer.epsilons(), err = explorer.errors(), held = explorer.held();
  const body = $("rows");
  body.replaceChildren();
  kinds.forEach((kind, i) => {
    const tr = document.createElement("tr");
    const input = document.createElement("input");
    input.type = "number";
    input.step = "any";
    input.disabled = held[i] === 1;
    input.addEventListener("change", () => update(() => explorer.target(i, Number(input.value))));
    const box = document.createElement("input");
    box.type = "checkbox";
    box.checked = held[i] === 1;
    box.addEventListener("change", () => update(() => explorer.hold(i, box.checked)));
    const cells = [kind, eps[i].toFixed(4), err[i].toPrecision(4)];
    for (const text of cells) {
      const td = document.createElement("td");
      td.textContent = text;
      tr.append(td);
    }
    for (const el of [input, box]) {
      const td = document.createElement("td");
      td.append(el);
      tr.append(td);
    }
    body.append(tr);
  });
  $("unspent").textContent = `unspent epsilon: ${explorer.unspent().toFixed(4)}`;
}

function update(change) {
  $("explorer-error").textContent = "";
  try {
    change();
  } catch (e) {
    $("explorer-error").textContent = e;
  }
  renderRows();
}

await init();
for (const id of ["curve-kind", "curve-lower", "curve-upper", "curve-n", "curve-conf"]) {
  $(id).addEventListener("input", drawCurve);
}
for (const id of ["amp-eps", "amp-n", "amp-m"]) {
  $(id).addEventListener("input", drawAmplification);
}
explorer = new Explorer(1, 0, 150, 1000);
kinds.forEach((k) => explorer.add(k));
drawCurve();
drawAmplification();
renderRows();
