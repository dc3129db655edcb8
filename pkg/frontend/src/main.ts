/**
 * Annotation app: paint 7-class masks over face images and save them
 * through the versioned mask endpoint.
 *
 * Keyboard: 0-6 select classes, [ and ] resize the brush, Ctrl+Z / Ctrl+Y
 * undo and redo, S saves. The overlay renders at adjustable opacity with
 * nearest-neighbor scaling so class boundaries stay crisp.
 */

import { AnnotationClient, ImageInfo, NO_MASK_TOKEN, PaletteEntry, SaveResult } from "./api.js";
import { BrushState, MaskLayer } from "./mask.js";
import { decodeGrayPng, encodeGrayPng } from "./png.js";

const ZOOM = 12;

interface AppState {
  client: AnnotationClient;
  palette: PaletteEntry[];
  images: ImageInfo[];
  current: ImageInfo | null;
  mask: MaskLayer | null;
  version: string;
  brush: BrushState;
  stroke: { x: number; y: number }[] | null;
}

const state: AppState = {
  client: new AnnotationClient(),
  palette: [],
  images: [],
  current: null,
  mask: null,
  version: NO_MASK_TOKEN,
  brush: { classIndex: 1, radius: 2, opacity: 0.55 },
  stroke: null,
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

// ---------------------------------------------------------------------------
// rendering

function renderOverlay(): void {
  const mask = state.mask;
  if (!mask) return;
  const canvas = el<HTMLCanvasElement>("overlay");
  const ctx = canvas.getContext("2d")!;
  const image = ctx.createImageData(mask.width, mask.height);
  const alpha = Math.round(state.brush.opacity * 255);
  for (let i = 0; i < mask.data.length; i++) {
    const entry = state.palette[mask.data[i]];
    image.data[i * 4] = entry.color[0];
    image.data[i * 4 + 1] = entry.color[1];
    image.data[i * 4 + 2] = entry.color[2];
    image.data[i * 4 + 3] = mask.data[i] === 0 ? Math.round(alpha * 0.4) : alpha;
  }
  ctx.putImageData(image, 0, 0);
  el<HTMLSpanElement>("progress").textContent =
    `${(mask.progress() * 100).toFixed(1)}% labeled`;
}

function renderClassButtons(): void {
  const bar = el<HTMLDivElement>("classes");
  bar.replaceChildren();
  for (const entry of state.palette) {
    const button = document.createElement("button");
    button.textContent = `${entry.index} ${entry.name}`;
    button.style.borderColor = `rgb(${entry.color.join(",")})`;
    button.className = entry.index === state.brush.classIndex ? "cls active" : "cls";
    button.addEventListener("click", () => {
      state.brush.classIndex = entry.index;
      renderClassButtons();
    });
    bar.appendChild(button);
  }
  el<HTMLSpanElement>("brush-info").textContent =
    `brush r=${state.brush.radius}`;
}

function renderImageList(): void {
  const list = el<HTMLUListElement>("image-list");
  list.replaceChildren();
  for (const info of state.images) {
    const item = document.createElement("li");
    item.textContent = `${info.id}${info.has_mask ? " ✓" : ""}`;
    item.className = state.current?.id === info.id ? "active" : "";
    item.addEventListener("click", () => void openImage(info));
    list.appendChild(item);
  }
}

function setStatus(text: string, isError = false): void {
  const node = el<HTMLSpanElement>("status");
  node.textContent = text;
  node.className = isError ? "error" : "";
}

// ---------------------------------------------------------------------------
// image/mask loading

async function decodeServerMask(png: Uint8Array, width: number, height: number):
    Promise<Uint8Array> {
  // server masks are zlib-compressed PNGs; decode through the browser
  const blob = new Blob([png.buffer as ArrayBuffer], { type: "image/png" });
  const bitmap = await createImageBitmap(blob);
  const canvas = document.createElement("canvas");
  canvas.width = width;
  canvas.height = height;
  const ctx = canvas.getContext("2d")!;
  ctx.drawImage(bitmap, 0, 0);
  const rgba = ctx.getImageData(0, 0, width, height).data;
  const out = new Uint8Array(width * height);
  for (let i = 0; i < out.length; i++) {
    out[i] = rgba[i * 4]; // grayscale: R carries the class index
  }
  return out;
}

async function openImage(info: ImageInfo): Promise<void> {
  state.current = info;
  const img = el<HTMLImageElement>("photo");
  img.src = state.client.imageUrl(info.id);
  img.style.width = `${info.width * ZOOM}px`;
  const overlay = el<HTMLCanvasElement>("overlay");
  overlay.width = info.width;
  overlay.height = info.height;
  overlay.style.width = `${info.width * ZOOM}px`;

  const remote = await state.client.fetchMask(info.id);
  if (remote) {
    const data = await decodeServerMask(remote.png, info.width, info.height);
    state.mask = new MaskLayer(info.width, info.height, data);
    state.version = remote.version;
  } else {
    state.mask = new MaskLayer(info.width, info.height);
    state.version = NO_MASK_TOKEN;
  }
  setStatus(`editing ${info.id}`);
  renderImageList();
  renderOverlay();
}

// ---------------------------------------------------------------------------
// painting

function canvasPoint(event: PointerEvent): { x: number; y: number } {
  const overlay = el<HTMLCanvasElement>("overlay");
  const rect = overlay.getBoundingClientRect();
  const x = Math.floor(((event.clientX - rect.left) / rect.width) * overlay.width);
  const y = Math.floor(((event.clientY - rect.top) / rect.height) * overlay.height);
  return { x, y };
}

function wireCanvas(): void {
  const overlay = el<HTMLCanvasElement>("overlay");
  overlay.addEventListener("pointerdown", (event) => {
    if (!state.mask) return;
    overlay.setPointerCapture(event.pointerId);
    state.stroke = [canvasPoint(event)];
  });
  overlay.addEventListener("pointermove", (event) => {
    if (!state.stroke || !state.mask) return;
    state.stroke.push(canvasPoint(event));
    // live preview: paint incrementally on a copy-free path would lose the
    // one-stroke-one-undo contract, so redraw the committed mask plus a
    // temporary stamp trail instead
    previewStroke();
  });
  const finish = () => {
    if (!state.stroke || !state.mask) return;
    state.mask.paintStroke(state.stroke, state.brush);
    state.stroke = null;
    renderOverlay();
  };
  overlay.addEventListener("pointerup", finish);
  overlay.addEventListener("pointercancel", () => {
    state.stroke = null;
    renderOverlay();
  });
}

function previewStroke(): void {
  if (!state.mask || !state.stroke) return;
  const preview = new MaskLayer(state.mask.width, state.mask.height, state.mask.data);
  preview.paintStroke(state.stroke, state.brush);
  const saved = state.mask;
  state.mask = preview;
  renderOverlay();
  state.mask = saved;
}

// ---------------------------------------------------------------------------
// saving

async function save(): Promise<void> {
  if (!state.mask || !state.current) return;
  const png = encodeGrayPng(state.mask.data, state.mask.width, state.mask.height);
  const result = await state.client.putMask(state.current.id, png, state.version);
  await handleSaveResult(result, png);
}

async function handleSaveResult(result: SaveResult, png: Uint8Array): Promise<void> {
  if ("ok" in result) {
    state.version = result.version;
    setStatus(`saved (version ${result.version.slice(0, 8)})`);
    if (state.current) state.current.has_mask = true;
    renderImageList();
    return;
  }
  if ("conflict" in result) {
    const choice = window.confirm(
      "The mask changed on the server while you were editing.\n" +
        "OK = overwrite with your version, Cancel = keep editing (your strokes stay).",
    );
    if (choice && state.current) {
      const retry = await state.client.putMask(state.current.id, png, result.currentVersion);
      await handleSaveResult(retry, png);
    } else {
      setStatus("save deferred: remote mask is newer", true);
    }
    return;
  }
  setStatus(`save failed: ${result.error} (local state kept, retry with S)`, true);
}

// ---------------------------------------------------------------------------
// bootstrap

function wireControls(): void {
  el<HTMLButtonElement>("save").addEventListener("click", () => void save());
  el<HTMLButtonElement>("undo").addEventListener("click", () => {
    state.mask?.undo();
    renderOverlay();
  });
  el<HTMLButtonElement>("redo").addEventListener("click", () => {
    state.mask?.redo();
    renderOverlay();
  });
  const radius = el<HTMLInputElement>("radius");
  radius.addEventListener("input", () => {
    state.brush.radius = Number(radius.value);
    renderClassButtons();
  });
  const opacity = el<HTMLInputElement>("opacity");
  opacity.addEventListener("input", () => {
    state.brush.opacity = Number(opacity.value);
    renderOverlay();
  });

  window.addEventListener("keydown", (event) => {
    if (event.target instanceof HTMLInputElement) return;
    if (event.key >= "0" && event.key <= "6") {
      state.brush.classIndex = Number(event.key);
      renderClassButtons();
    } else if (event.key === "[") {
      state.brush.radius = Math.max(1, state.brush.radius - 1);
      renderClassButtons();
    } else if (event.key === "]") {
      state.brush.radius = Math.min(16, state.brush.radius + 1);
      renderClassButtons();
    } else if ((event.ctrlKey || event.metaKey) && event.key.toLowerCase() === "z") {
      state.mask?.undo();
      renderOverlay();
      event.preventDefault();
    } else if ((event.ctrlKey || event.metaKey) && event.key.toLowerCase() === "y") {
      state.mask?.redo();
      renderOverlay();
      event.preventDefault();
    } else if (event.key.toLowerCase() === "s" && !event.ctrlKey) {
      void save();
    }
  });
}

async function start(): Promise<void> {
  try {
    state.palette = await state.client.getPalette();
    state.images = await state.client.listImages();
  } catch (err) {
    setStatus(`cannot reach the annotation service: ${err}`, true);
    return;
  }
  renderClassButtons();
  renderImageList();
  wireCanvas();
  wireControls();
  if (state.images.length > 0) {
    await openImage(state.images[0]);
  } else {
    setStatus("dataset has no images");
  }
}

if (typeof document !== "undefined" && document.getElementById("overlay")) {
  void start();
}

export { decodeGrayPng };
