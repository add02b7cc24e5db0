/** Application wiring: split current/reference views, pick modes, lists,
 * crop editing, preview overlay, and annotation save. */

import { ApiClient, ApiError } from "./api.js";
import { decodeLabelBitset } from "./frame.js";
import { UiSession } from "./session.js";
import { CropBox, Vec3 } from "./types.js";
import { HoverInfo, PointCloudView } from "./viewer.js";

const MAX_RENDER_POINTS = 200_000;

type PickMode = "navigate" | "correspondence" | "seed";

const api = new ApiClient("");

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const currentView = new PointCloudView(el<HTMLCanvasElement>("view-current"));
const referenceView = new PointCloudView(el<HTMLCanvasElement>("view-reference"));

let session: UiSession | null = null;
let mode: PickMode = "navigate";

function status(text: string, isError = false): void {
  const bar = el<HTMLDivElement>("status");
  bar.textContent = text;
  bar.className = isError ? "status error" : "status";
}

function hudText(hit: HoverInfo | null): string {
  if (!hit) return "";
  const p = hit.position.map((v) => v.toFixed(4)).join(", ");
  const c = hit.color.map((v) => v.toFixed(3)).join(", ");
  return `#${hit.index}  pos (${p})  rgb (${c})`;
}

currentView.onHover = (hit) => {
  el<HTMLDivElement>("hud-current").textContent = hudText(hit);
};
referenceView.onHover = (hit) => {
  el<HTMLDivElement>("hud-reference").textContent = hudText(hit);
};

currentView.onPick = (hit) => {
  if (!session || mode === "navigate") return;
  if (mode === "correspondence") {
    session.pickCorrespondence("current", hit.position);
    status("source picked; now pick its match in the reference view");
  } else {
    session.pickSeedColor(hit.color);
    status(`seed color added (${hit.color.map((v) => v.toFixed(2)).join(", ")})`);
  }
  refreshPanels();
};

referenceView.onPick = (hit) => {
  if (!session || mode !== "correspondence") return;
  if (session.pendingSource === null) {
    status("pick the source point in the current view first", true);
    return;
  }
  session.pickCorrespondence("reference", hit.position);
  status(`correspondence ${session.correspondences.length} recorded`);
  refreshPanels();
};

currentView.onCropEdit = (box: CropBox) => {
  if (!session) return;
  session.setCropBox(box);
  refreshPanels();
};

function refreshPanels(): void {
  if (!session) return;
  // correspondence list
  const corrList = el<HTMLUListElement>("correspondence-list");
  corrList.innerHTML = "";
  session.correspondences.forEach((pair, i) => {
    const item = document.createElement("li");
    const fmt = (v: Vec3) => v.map((x) => x.toFixed(3)).join(",");
    item.textContent = `${i + 1}: (${fmt(pair.source)}) -> (${fmt(pair.reference)}) `;
    const remove = document.createElement("button");
    remove.textContent = "x";
    remove.onclick = () => {
      session!.deleteCorrespondence(i);
      refreshPanels();
    };
    item.appendChild(remove);
    corrList.appendChild(item);
  });
  el<HTMLSpanElement>("pending-pick").textContent = session.pendingSource
    ? `pending source: ${session.pendingSource.map((v) => v.toFixed(3)).join(", ")}`
    : "";

  // seed color swatches
  const seedList = el<HTMLUListElement>("seed-list");
  seedList.innerHTML = "";
  session.seedColors.forEach((color, i) => {
    const item = document.createElement("li");
    const swatch = document.createElement("span");
    swatch.className = "swatch";
    swatch.style.backgroundColor = `rgb(${color.map((v) => Math.round(v * 255)).join(",")})`;
    item.appendChild(swatch);
    item.append(` (${color.map((v) => v.toFixed(2)).join(", ")}) `);
    const remove = document.createElement("button");
    remove.textContent = "x";
    remove.onclick = () => {
      session!.deleteSeedColor(i);
      refreshPanels();
    };
    item.appendChild(remove);
    seedList.appendChild(item);
  });

  // crop inputs
  for (let axis = 0; axis < 3; axis++) {
    el<HTMLInputElement>(`crop-min-${axis}`).value = session.cropBox.min[axis].toFixed(3);
    el<HTMLInputElement>(`crop-max-${axis}`).value = session.cropBox.max[axis].toFixed(3);
  }
  currentView.setCropBox(session.cropBox);

  // markers
  currentView.setMarkers(
    session.correspondences.map((p) => p.source),
    0x2ec4b6,
    session.pendingSource,
  );
  referenceView.setMarkers(
    session.correspondences.map((p) => p.reference),
    0x3a86ff,
  );

  // overlay + stats
  currentView.setOverlay(session.overlay ? session.overlay.labels : null);
  el<HTMLDivElement>("preview-stats").textContent = session.overlay
    ? `positive fraction ${(session.overlay.positiveFraction * 100).toFixed(1)}% ` +
      `over ${session.overlay.clusterCount} clusters`
    : "";

  // submit gate
  const reasons = session.gateReasons();
  const save = el<HTMLButtonElement>("save-button");
  const preview = el<HTMLButtonElement>("preview-button");
  save.disabled = reasons.length > 0;
  preview.disabled = reasons.length > 0;
  el<HTMLDivElement>("gate-reasons").textContent = reasons.join("; ");
}

async function loadDatasets(): Promise<void> {
  try {
    const datasets = await api.listDatasets();
    const pickers = [el<HTMLSelectElement>("dataset-select"), el<HTMLSelectElement>("reference-select")];
    for (const select of pickers) {
      select.innerHTML = "";
      for (const ds of datasets) {
        const option = document.createElement("option");
        option.value = ds.id;
        option.textContent = `${ds.id} (${ds.frames} frames, ${ds.first_frame_points} pts)`;
        select.appendChild(option);
      }
    }
    status(`${datasets.length} datasets`);
  } catch (err) {
    status(`could not list datasets: ${(err as Error).message} (retry below)`, true);
  }
}

async function loadFrames(): Promise<void> {
  const datasetId = el<HTMLSelectElement>("dataset-select").value;
  const referenceId = el<HTMLSelectElement>("reference-select").value;
  if (!datasetId) return;
  session = new UiSession(datasetId, referenceId);
  try {
    const [frame, referenceFrame] = await Promise.all([
      api.fetchFrame(datasetId, 0, MAX_RENDER_POINTS),
      api.fetchFrame(referenceId, 0, MAX_RENDER_POINTS),
    ]);
    currentView.setFrame(frame);
    referenceView.setFrame(referenceFrame);
    el<HTMLDivElement>("count-current").textContent = `${frame.count} points`;
    el<HTMLDivElement>("count-reference").textContent = `${referenceFrame.count} points`;
    const stored = await api.getAnnotation(datasetId);
    if (stored) {
      session.loadDocument(stored);
      status(`loaded ${datasetId} with its stored annotation (v${(stored as { version?: number }).version ?? "?"})`);
    } else {
      status(`loaded ${datasetId}; no annotation yet`);
    }
    refreshPanels();
  } catch (err) {
    status(`frame load failed: ${(err as Error).message}`, true);
  }
}

let previewInFlight = false;

async function runPreview(): Promise<void> {
  if (!session || previewInFlight) return;
  previewInFlight = true;
  el<HTMLButtonElement>("preview-button").disabled = true;
  status("running preview...");
  try {
    const result = await api.preview(session.datasetId, session.toDocument());
    session.overlay = {
      labels: decodeLabelBitset(result.labels_bitset, result.n_points),
      positiveFraction: result.positive_fraction,
      clusterCount: result.cluster_count,
    };
    status(`preview: ${(result.positive_fraction * 100).toFixed(1)}% labeled positive`);
  } catch (err) {
    if (err instanceof ApiError && err.status === 409) {
      status("no matching cluster; pick different seed colors", true);
    } else {
      status(`preview failed: ${(err as Error).message}`, true);
    }
  } finally {
    previewInFlight = false;
  }
  refreshPanels();
}

async function saveAnnotation(): Promise<void> {
  if (!session) return;
  try {
    const saved = await api.saveAnnotation(session.datasetId, session.toDocument());
    status(`annotation saved (version ${saved.version})`);
  } catch (err) {
    status(`save failed: ${(err as Error).message}`, true);
  }
}

function readCropInputs(): void {
  if (!session) return;
  const box: CropBox = { min: [0, 0, 0], max: [0, 0, 0] };
  for (let axis = 0; axis < 3; axis++) {
    box.min[axis] = parseFloat(el<HTMLInputElement>(`crop-min-${axis}`).value);
    box.max[axis] = parseFloat(el<HTMLInputElement>(`crop-max-${axis}`).value);
  }
  session.setCropBox(box);
  refreshPanels();
}

el<HTMLButtonElement>("refresh-datasets").onclick = loadDatasets;
el<HTMLButtonElement>("load-button").onclick = loadFrames;
el<HTMLButtonElement>("preview-button").onclick = runPreview;
el<HTMLButtonElement>("save-button").onclick = saveAnnotation;
el<HTMLButtonElement>("apply-crop").onclick = readCropInputs;
for (const radio of document.querySelectorAll<HTMLInputElement>("input[name=mode]")) {
  radio.onchange = () => {
    mode = radio.value as PickMode;
  };
}
window.addEventListener("resize", () => {
  currentView.resize();
  referenceView.resize();
});

loadDatasets();
