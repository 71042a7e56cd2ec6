import init, { Demo } from "./pkg/richards_ms_demo.js";

const FINE_N = 16;
const COARSE_N = 4;

const $ = (id) => document.getElementById(id);
const status = (msg) => { $("status").textContent = msg; };

// blue -> white -> red
function colour(t) {
  const c = Math.max(0, Math.min(1, t));
  if (c < 0.5) {
    const s = c / 0.5;
    return [Math.round(40 + 215 * s), Math.round(80 + 175 * s), 255];
  }
  const s = (c - 0.5) / 0.5;
  return [255, Math.round(255 - 205 * s), Math.round(255 - 215 * s)];
}

function draw(id, values, side, { symmetric = false } = {}) {
  const canvas = $(id);
  canvas.width = side;
  canvas.height = side;
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(side, side);
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    lo = Math.min(lo, v);
    hi = Math.max(hi, v);
  }
  if (symmetric) {
    const m = Math.max(Math.abs(lo), Math.abs(hi));
    lo = -m;
    hi = m;
  }
  const span = hi - lo || 1;
  for (let iy = 0; iy < side; iy++) {
    for (let ix = 0; ix < side; ix++) {
      // node rows run bottom to top
      const v = values[iy * side + ix];
      const [r, g, b] = colour((v - lo) / span);
      const p = 4 * ((side - 1 - iy) * side + ix);
      img.data[p] = r;
      img.data[p + 1] = g;
      img.data[p + 2] = b;
      img.data[p + 3] = 255;
    }
  }
  ctx.putImageData(img, 0, 0);
}

const pct = (x) => `${(100 * x).toFixed(3)} %`;

async function main() {
  await init();
  const demo = new Demo(FINE_N, COARSE_N);
  const side = demo.nodesPerSide();
  $("vertex").max = demo.nVertices() - 1;

  const sample = () => {
    const kappa = demo.sample(Number($("seed").value));
    draw("c-kappa", kappa.map(Math.log), side);
    for (const id of ["c-fine", "c-offline", "c-online", "c-basis"]) {
      $(id).getContext("2d").clearRect(0, 0, side, side);
    }
    $("errors").hidden = true;
    status(`field sampled (${demo.kleTerms()} KLE terms)`);
  };

  const solve = () => {
    const t0 = performance.now();
    const [offL2, onL2, offH1, onH1, fineIt, offIt] = demo.solve(Number($("nb").value));
    const ms = performance.now() - t0;
    const fine = demo.solution(0);
    draw("c-fine", fine, side);
    draw("c-offline", demo.solution(1), side);
    draw("c-online", demo.solution(2), side);
    $("e-off-l2").textContent = pct(offL2);
    $("e-off-h1").textContent = pct(offH1);
    $("e-on-l2").textContent = pct(onL2);
    $("e-on-h1").textContent = pct(onH1);
    $("errors").hidden = false;
    status(`solved in ${ms.toFixed(0)} ms (Picard iterations: fine ${fineIt}, offline ${offIt})`);
  };

  const basis = () => {
    const v = Number($("vertex").value);
    const k = Number($("index").value);
    draw("c-basis", demo.basis(v, k), side, { symmetric: true });
    const online = k === Number($("nb").value);
    $("basis-caption").textContent = online ? `online basis, vertex ${v}` : `offline basis ${k}, vertex ${v}`;
  };

  const guard = (f) => () => {
    try {
      f();
    } catch (e) {
      status(`error: ${e.message ?? e}`);
    }
  };
  $("sample").onclick = guard(sample);
  $("solve").onclick = guard(solve);
  $("basis").onclick = guard(basis);
  guard(sample)();
}

main().catch((e) => status(`failed to load: ${e}`));
