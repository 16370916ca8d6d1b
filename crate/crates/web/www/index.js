import init, { Demo } from "./pkg/plume_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
let demo = null;

function paint(id, rgba) {
  const canvas = $(id);
  canvas.width = demo.width;
  canvas.height = demo.height;
  const image = new ImageData(new Uint8ClampedArray(rgba), demo.width, demo.height);
  canvas.getContext("2d").putImageData(image, 0, 0);
}

function guarded(fn) {
  return () => {
    try {
      $("error").textContent = "";
      fn();
    } catch (e) {
      $("error").textContent = String(e.message ?? e);
    }
  };
}

function showLabels() {
  for (const id of ["sigma", "kappa", "noise", "plo", "phi", "k"]) {
    $(`${id}-out`).textContent = $(id).value;
  }
}

function detect() {
  if (!demo) return;
  const view = demo.detect(num("k"), $("channel").value, Math.max(1, num("minarea")));
  paint("diff", view.rgba());
  $("dice").textContent = view.dice.toFixed(4);
  $("iou").textContent = view.iou.toFixed(4);
  $("tp").textContent = view.tp;
  $("fp").textContent = view.fp;
  $("fn").textContent = view.fn;
  view.free();
}

function enhance() {
  if (!demo) return;
  demo.enhance(num("plo"), num("phi"));
  for (const layer of ["V", "S", "background"]) paint(layer, demo.image(layer));
  $("c").textContent = demo.varon_c.toFixed(5);
  $("cprime").textContent = demo.sanchez_c.toFixed(5);
  $("bg").textContent = demo.background_pixels;
  detect();
}

function generate() {
  demo?.free();
  demo = null;
  demo = new Demo(num("seed"), num("size"), num("sigma"), num("kappa"), num("noise"));
  paint("B12", demo.image("B12"));
  paint("truth", demo.image("truth"));
  enhance();
}

await init();
showLabels();
document.querySelectorAll("input, select").forEach((el) => el.addEventListener("input", showLabels));
$("generate").addEventListener("click", guarded(generate));
for (const id of ["plo", "phi"]) $(id).addEventListener("input", guarded(enhance));
for (const id of ["k", "channel", "minarea"]) $(id).addEventListener("input", guarded(detect));
guarded(generate)();
