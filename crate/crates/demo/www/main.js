import init, { blob_frames, gaussian_tc, DiffusionRun } from "./pkg/stvae_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function bindLabels(ids) {
  for (const id of ids) {
    const show = () => ($(id + "-v").textContent = $(id).value);
    $(id).addEventListener("input", show);
    show();
  }
}

const SIZE = 16;
const FRAMES = 8;

function drawBlobs() {
  const frames = blob_frames(SIZE, FRAMES, num("vx"), num("vy"), num("amp"), num("bw"));
  const canvas = $("blobs");
  const ctx = canvas.getContext("2d");
  const cell = canvas.height / SIZE;
  ctx.fillStyle = "white";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  for (let t = 0; t < FRAMES; t++) {
    for (let y = 0; y < SIZE; y++) {
      for (let x = 0; x < SIZE; x++) {
        const v = Math.round(255 * (1 - frames[(t * SIZE + y) * SIZE + x]));
        ctx.fillStyle = `rgb(${v},${v},255)`;
        ctx.fillRect(t * canvas.height + x * cell, y * cell, cell, cell);
      }
    }
  }
}

function estimateTc() {
  const rho = num("rho");
  $("tc-out").textContent = "estimating...";
  // let the label repaint before the estimate blocks the thread
  setTimeout(() => {
    const [est, exact] = gaussian_tc(rho, 4096, 7n);
    $("tc-out").textContent = `estimate ${est.toFixed(4)} nats, closed form ${exact.toFixed(4)} nats`;
  }, 10);
}

let run = null;

function rebuildGraph() {
  if (run) run.free();
  run = new DiffusionRun(num("nodes"), 2, num("alpha"), 30, BigInt(num("seed")));
  drawGraph();
}

function drawGraph() {
  const canvas = $("graph");
  const ctx = canvas.getContext("2d");
  const n = run.n_nodes;
  const values = run.values;
  const edges = run.edges;
  const step = num("step");
  const r = canvas.width / 2 - 30;
  const pos = (i) => [
    canvas.width / 2 + r * Math.cos((2 * Math.PI * i) / n),
    canvas.height / 2 + r * Math.sin((2 * Math.PI * i) / n),
  ];
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#bbb";
  for (let e = 0; e < edges.length; e += 2) {
    const [a, b] = [pos(edges[e]), pos(edges[e + 1])];
    ctx.beginPath();
    ctx.moveTo(a[0], a[1]);
    ctx.lineTo(b[0], b[1]);
    ctx.stroke();
  }
  for (let i = 0; i < n; i++) {
    const v = values[step * n + i];
    const [x, y] = pos(i);
    const shade = Math.round(255 * (1 - Math.min(1, Math.sqrt(v))));
    ctx.fillStyle = `rgb(255,${shade},${shade})`;
    ctx.strokeStyle = "#333";
    ctx.beginPath();
    ctx.arc(x, y, 10, 0, 2 * Math.PI);
    ctx.fill();
    ctx.stroke();
  }
}

await init();
$("status").textContent = "";
bindLabels(["vx", "vy", "bw", "amp", "rho", "nodes", "alpha", "step"]);
for (const id of ["vx", "vy", "bw", "amp"]) $(id).addEventListener("input", drawBlobs);
$("estimate").addEventListener("click", estimateTc);
for (const id of ["nodes", "alpha", "seed"]) $(id).addEventListener("change", rebuildGraph);
$("step").addEventListener("input", drawGraph);
drawBlobs();
rebuildGraph();
estimateTc();
