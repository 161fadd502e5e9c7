/** Browser entry point: wires the DOM to the session state machine.
 *
 * All segmentation math happens server-side; this file only collects user
 * input, posts it through ApiClient and paints the masks the server
 * returned.  The pure logic lives in session/render/export and is covered
 * by the node test suite; keep this layer free of decisions worth testing.
 */

import { ApiClient } from "./api.js";
import { exportAnnotation } from "./export.js";
import { classColor, BACKGROUND } from "./palette.js";
import { compositeMasks, emptyRaster, layersFromResponse } from "./render.js";
import {
  Workbench,
  addPrompt,
  canExport,
  canSubmit,
  removePrompt,
  setConfig,
  setImage,
} from "./session.js";
import type { Ablation, Session } from "./types.js";

const SCALE_CHOICES = [256, 128, 64];

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function rgb([r, g, b]: [number, number, number]): string {
  return `rgb(${r},${g},${b})`;
}

function main(): void {
  const workbench = new Workbench(new ApiClient(""));
  const fileInput = el<HTMLInputElement>("image-input");
  const promptInput = el<HTMLInputElement>("prompt-input");
  const promptAdd = el<HTMLButtonElement>("prompt-add");
  const promptList = el<HTMLDivElement>("prompt-list");
  const scaleBox = el<HTMLDivElement>("scale-boxes");
  const objectnessToggle = el<HTMLInputElement>("toggle-objectness");
  const multiscaleToggle = el<HTMLInputElement>("toggle-multiscale");
  const globalScaleToggle = el<HTMLInputElement>("toggle-global-scale0");
  const logitSlider = el<HTMLInputElement>("logit-scale");
  const logitReadout = el<HTMLSpanElement>("logit-scale-value");
  const opacitySlider = el<HTMLInputElement>("opacity");
  const submitButton = el<HTMLButtonElement>("submit");
  const exportButton = el<HTMLButtonElement>("export");
  const errorBanner = el<HTMLDivElement>("error-banner");
  const canvas = el<HTMLCanvasElement>("viewport");
  const layerList = el<HTMLDivElement>("layer-list");
  const historyList = el<HTMLOListElement>("history");
  const statusLine = el<HTMLSpanElement>("status");

  let baseImage: HTMLImageElement | null = null;
  const hiddenLayers = new Set<string>();

  for (const scale of SCALE_CHOICES) {
    const label = document.createElement("label");
    const box = document.createElement("input");
    box.type = "checkbox";
    box.value = String(scale);
    box.checked = true;
    box.addEventListener("change", pushConfig);
    label.append(box, ` ${scale}`);
    scaleBox.append(label);
  }

  function selectedScales(): number[] {
    return [...scaleBox.querySelectorAll<HTMLInputElement>("input:checked")]
      .map((box) => Number(box.value))
      .sort((a, b) => b - a);
  }

  function selectedAblation(): Ablation {
    if (!objectnessToggle.checked) return "no_objectness";
    if (!multiscaleToggle.checked) return "no_multiscale";
    return "full";
  }

  function pushConfig(): void {
    workbench.update(
      setConfig(workbench.session, {
        scales: selectedScales(),
        globalScale0: globalScaleToggle.checked,
        logitScale: Number(logitSlider.value),
        ablation: selectedAblation(),
      }),
    );
    render();
  }

  function mutate(step: (session: Session) => Session): void {
    try {
      workbench.update(step(workbench.session));
      errorBanner.hidden = true;
    } catch (err) {
      errorBanner.textContent = err instanceof Error ? err.message : String(err);
      errorBanner.hidden = false;
    }
    render();
  }

  function paint(): void {
    const ctx = canvas.getContext("2d");
    if (!ctx) return;
    const response = workbench.session.lastResponse;
    const [height, width] = response
      ? response.labels_rle.size
      : [baseImage?.naturalHeight ?? 0, baseImage?.naturalWidth ?? 0];
    if (!width || !height) {
      canvas.width = canvas.height = 0;
      return;
    }
    canvas.width = width;
    canvas.height = height;
    if (baseImage) ctx.drawImage(baseImage, 0, 0, width, height);
    if (!response) return;
    const base = ctx.getImageData(0, 0, width, height);
    const raster = emptyRaster(width, height);
    raster.data.set(base.data);
    const visibility = new Map(
      response.per_class.map((entry) => [entry.name, !hiddenLayers.has(entry.name)]),
    );
    const layers = layersFromResponse(response.per_class, classColor, visibility);
    const blended = compositeMasks(raster, width, height, layers, Number(opacitySlider.value));
    ctx.putImageData(new ImageData(new Uint8ClampedArray(blended.data), width, height), 0, 0);
  }

  function render(): void {
    const session = workbench.session;
    promptList.replaceChildren(
      ...session.prompts.map((prompt) => {
        const chip = document.createElement("span");
        chip.className = "chip";
        chip.style.borderColor = rgb(prompt.color);
        const remove = document.createElement("button");
        remove.textContent = "x";
        remove.addEventListener("click", () => mutate((s) => removePrompt(s, prompt.name)));
        chip.append(prompt.name, remove);
        return chip;
      }),
    );
    const bg = document.createElement("span");
    bg.className = "chip chip-fixed";
    bg.style.borderColor = rgb(classColor(BACKGROUND));
    bg.textContent = `${BACKGROUND} (implicit)`;
    promptList.append(bg);

    logitReadout.textContent = logitSlider.value;
    submitButton.disabled = !canSubmit(session) || session.pending;
    exportButton.disabled = !canExport(session);
    statusLine.textContent = session.pending ? "segmenting..." : "";
    errorBanner.hidden = !session.error;
    if (session.error) errorBanner.textContent = session.error;

    layerList.replaceChildren(
      ...(session.lastResponse?.per_class ?? []).map((entry) => {
        const row = document.createElement("label");
        const box = document.createElement("input");
        box.type = "checkbox";
        box.checked = !hiddenLayers.has(entry.name);
        box.addEventListener("change", () => {
          box.checked ? hiddenLayers.delete(entry.name) : hiddenLayers.add(entry.name);
          paint();
        });
        const swatch = document.createElement("span");
        swatch.className = "swatch";
        swatch.style.background = rgb(classColor(entry.name));
        row.append(box, swatch, ` ${entry.name} (${(entry.pixel_fraction * 100).toFixed(1)}%)`);
        return row;
      }),
    );
    historyList.replaceChildren(
      ...session.history.map((entry) => {
        const item = document.createElement("li");
        item.textContent =
          `${entry.prompts.join(", ")} | scales ${entry.config.scales.join("/")} | ` +
          `${entry.config.ablation} | logit ${entry.config.logitScale}`;
        return item;
      }),
    );
    paint();
  }

  fileInput.addEventListener("change", () => {
    const file = fileInput.files?.[0];
    if (!file) return;
    baseImage = new Image();
    baseImage.onload = render;
    baseImage.src = URL.createObjectURL(file);
    mutate((s) => setImage(s, file, file.name));
  });

  promptAdd.addEventListener("click", () => {
    const name = promptInput.value;
    mutate((s) => addPrompt(s, name));
    if (!workbench.session.error) promptInput.value = "";
  });
  promptInput.addEventListener("keydown", (event) => {
    if (event.key === "Enter") promptAdd.click();
  });

  for (const control of [objectnessToggle, multiscaleToggle, globalScaleToggle, logitSlider]) {
    control.addEventListener("change", pushConfig);
  }
  opacitySlider.addEventListener("input", paint);

  submitButton.addEventListener("click", () => {
    void workbench.submitQuery().finally(render);
    render();
  });

  exportButton.addEventListener("click", () => {
    const bundle = exportAnnotation(workbench.session);
    const pngBytes = bundle.labelsPng.slice().buffer;
    const downloads: [string, Blob][] = [
      [`${bundle.baseName}_labels.png`, new Blob([pngBytes], { type: "image/png" })],
      [
        `${bundle.baseName}_labels.json`,
        new Blob([JSON.stringify(bundle.sidecar, null, 2)], { type: "application/json" }),
      ],
    ];
    for (const [name, blob] of downloads) {
      const link = document.createElement("a");
      link.href = URL.createObjectURL(blob);
      link.download = name;
      link.click();
      URL.revokeObjectURL(link.href);
    }
  });

  render();
}

main();
