/** DOM wiring: two canvas panes (webcam | mesh render), correspondence table,
 * optimize button. All data comes from the service API. */

import { ApiClient } from "./api.js";
import { buildWebcamOverlay } from "./overlay.js";
import { AnnotationSession } from "./session.js";
import {
  deviceToImage,
  fitViewport,
  identityViewport,
  imageToDevice,
  panBy,
  Viewport,
  zoomAt,
} from "./viewport.js";

const api = new ApiClient("");

interface Pane {
  canvas: HTMLCanvasElement;
  image: HTMLImageElement;
  vp: Viewport;
}

function makePane(id: string): Pane {
  const canvas = document.getElementById(id) as HTMLCanvasElement;
  return { canvas, image: new Image(), vp: identityViewport() };
}

function loadImage(pane: Pane, url: string, onReady: () => void): void {
  pane.image = new Image();
  pane.image.onload = () => {
    pane.vp = fitViewport(pane.image.width, pane.image.height, pane.canvas.width, pane.canvas.height);
    onReady();
  };
  pane.image.src = url;
}

function drawPane(pane: Pane, session: AnnotationSession | null, withOverlay: boolean): void {
  const ctx = pane.canvas.getContext("2d")!;
  ctx.fillStyle = "#111";
  ctx.fillRect(0, 0, pane.canvas.width, pane.canvas.height);
  if (!pane.image.width) return;
  ctx.imageSmoothingEnabled = pane.vp.scale < 1;
  const [x0, y0] = imageToDevice(pane.vp, 0, 0);
  ctx.drawImage(pane.image, x0, y0, pane.image.width * pane.vp.scale, pane.image.height * pane.vp.scale);
  if (!withOverlay || !session) return;

  const overlay = buildWebcamOverlay(session, pane.vp);
  for (const line of overlay.lines) {
    ctx.strokeStyle = "#ff851b88";
    ctx.lineWidth = 1;
    ctx.beginPath();
    ctx.moveTo(line.x1, line.y1);
    ctx.lineTo(line.x2, line.y2);
    ctx.stroke();
  }
  for (const m of overlay.markers) {
    ctx.strokeStyle = m.color;
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.arc(m.x, m.y, 6, 0, 2 * Math.PI);
    ctx.stroke();
    ctx.fillStyle = m.color;
    ctx.font = "11px sans-serif";
    ctx.fillText(m.label, m.x + 8, m.y - 8);
  }
}

function attachNav(pane: Pane, redraw: () => void, onClick: (u: number, v: number) => void): void {
  let dragging = false;
  let lastX = 0;
  let lastY = 0;
  let moved = false;
  pane.canvas.addEventListener("mousedown", (e) => {
    dragging = true;
    moved = false;
    lastX = e.offsetX;
    lastY = e.offsetY;
  });
  pane.canvas.addEventListener("mousemove", (e) => {
    if (!dragging) return;
    const dx = e.offsetX - lastX;
    const dy = e.offsetY - lastY;
    if (Math.abs(dx) + Math.abs(dy) > 2) moved = true;
    if (moved) {
      pane.vp = panBy(pane.vp, dx, dy);
      lastX = e.offsetX;
      lastY = e.offsetY;
      redraw();
    }
  });
  window.addEventListener("mouseup", (e) => {
    if (!dragging) return;
    dragging = false;
    if (!moved && e.target === pane.canvas) {
      const [u, v] = deviceToImage(pane.vp, lastX, lastY);
      onClick(u, v);
    }
  });
  pane.canvas.addEventListener("wheel", (e) => {
    e.preventDefault();
    pane.vp = zoomAt(pane.vp, e.deltaY < 0 ? 1.2 : 1 / 1.2, e.offsetX, e.offsetY);
    redraw();
  });
}

async function boot(): Promise<void> {
  const projectSel = document.getElementById("project") as HTMLSelectElement;
  const cameraSel = document.getElementById("camera") as HTMLSelectElement;
  const noticeEl = document.getElementById("notice")!;
  const lossEl = document.getElementById("loss")!;
  const tableEl = document.getElementById("pairs") as HTMLTableElement;
  const webcamPane = makePane("webcam-pane");
  const renderPane = makePane("render-pane");
  let session: AnnotationSession | null = null;

  const redraw = () => {
    drawPane(webcamPane, session, true);
    drawPane(renderPane, null, false);
    if (!session) return;
    noticeEl.textContent = session.notice.kind === "idle" ? "" : session.notice.message;
    noticeEl.className = `notice ${session.notice.kind}`;
    const loss = session.displayedMeanL1();
    lossEl.textContent = loss === null ? "—" : `mean L1: ${loss.toFixed(3)} px`;
    renderTable();
  };

  const renderTable = () => {
    if (!session) return;
    const res = session.lastOptimize?.residuals ?? [];
    tableEl.innerHTML =
      "<tr><th>#</th><th>u, v</th><th>residual px</th><th></th></tr>" +
      session.correspondences
        .map((c, i) => {
          const l1 = res[i] ? res[i].l1.toFixed(2) : "—";
          return `<tr><td>${i}</td><td>${c.u.toFixed(1)}, ${c.v.toFixed(1)}</td><td>${l1}</td><td><button data-del="${i}">✕</button></td></tr>`;
        })
        .join("");
    tableEl.querySelectorAll<HTMLButtonElement>("button[data-del]").forEach((b) =>
      b.addEventListener("click", async () => {
        await session!.remove(Number(b.dataset.del));
        redraw();
      }),
    );
  };

  const reloadImages = () => {
    if (!session) return;
    const s = session;
    loadImage(webcamPane, api.cameraImageUrl(s.project, s.camera), redraw);
    loadImage(renderPane, api.renderUrl(s.project, s.camera, s.renderBump), redraw);
  };

  const selectCamera = async () => {
    session = new AnnotationSession(api, projectSel.value, cameraSel.value);
    await session.refresh();
    reloadImages();
    redraw();
  };

  const projects = await api.listProjects();
  projectSel.innerHTML = projects.map((p) => `<option>${p}</option>`).join("");
  const loadCameras = async () => {
    const cams = await api.listCameras(projectSel.value);
    cameraSel.innerHTML = cams.map((c) => `<option>${c.id}</option>`).join("");
    await selectCamera();
  };
  projectSel.addEventListener("change", loadCameras);
  cameraSel.addEventListener("change", selectCamera);

  attachNav(webcamPane, redraw, (u, v) => {
    session?.clickWebcam(u, v);
    redraw();
  });
  attachNav(renderPane, redraw, async (u, v) => {
    if (!session) return;
    await session.clickRender(u, v);
    redraw();
  });

  document.getElementById("optimize")!.addEventListener("click", async () => {
    if (!session) return;
    await session.optimize();
    reloadImages();
    redraw();
  });
  document.getElementById("drop-worst")!.addEventListener("click", async () => {
    if (!session) return;
    const i = session.largestResidualIndex();
    if (i !== null) {
      await session.remove(i);
      redraw();
    }
  });

  await loadCameras();
}

boot().catch((e) => {
  document.getElementById("notice")!.textContent = String(e);
});
