/** DOM wiring: canvas display with 2D-pan pose prediction, parameter
 * controls, brush interaction, alignment steppers, and the stats chart. */

import { Pose, move, poseQuat, turn, unproject } from "./camera.js";
import { Connection } from "./net.js";
import { FrameHeader, StatsMessage } from "./protocol.js";
import { STATS_WINDOW } from "./state.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export class Viewer {
  conn: Connection;
  pose: Pose = { position: [1.0, 1.0, 0.15], yaw: 0, pitch: 0 };
  private sentYaw = 0;
  private sentPitch = 0;
  private lastBitmap: ImageBitmap | null = null;
  private lastHeader: FrameHeader | null = null;
  private keys = new Set<string>();
  private dragging: "look" | "brush" | null = null;
  private brushMode: "erase" | "reveal" = "erase";
  private canvas = el<HTMLCanvasElement>("view");
  private chart = el<HTMLCanvasElement>("chart");
  private banner = el<HTMLDivElement>("banner");

  constructor(url: string) {
    this.conn = new Connection(url, {
      onFrame: (h, payload) => this.showFrame(h, payload),
      onMessage: (m) => {
        if (m.type === "stats") this.drawChart();
        if (m.type === "state") this.syncControls();
      },
      onStatus: (s, detail) => this.setBanner(s, detail),
    });
  }

  start() {
    this.conn.connect();
    this.bindControls();
    this.bindCanvas();
    setInterval(() => this.tick(), 50);
  }

  private setBanner(status: string, detail?: string) {
    this.banner.textContent = detail ? `${status}: ${detail}` : status;
    this.banner.dataset.status = status;
    this.banner.style.display = status === "connected" ? "none" : "block";
  }

  private async showFrame(header: FrameHeader, payload: Uint8Array) {
    const blob = new Blob([payload.slice()], { type: "image/png" });
    this.lastBitmap = await createImageBitmap(blob);
    this.lastHeader = header;
    this.sentYaw = this.pose.yaw;
    this.sentPitch = this.pose.pitch;
    this.redraw();
    el<HTMLSpanElement>("stat-res").textContent =
      `${header.width}x${header.height}`;
  }

  /** Last frame reprojected by 2D pan only while newer frames are pending. */
  private redraw() {
    if (!this.lastBitmap || !this.lastHeader) return;
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    const scale = this.canvas.width / this.lastHeader.width;
    const fov = this.conn.state.mirror.fov_deg;
    const pxPerDeg = this.lastHeader.width / fov;
    const dx = -(this.pose.yaw - this.sentYaw) * (180 / Math.PI) * pxPerDeg;
    const dy = -(this.pose.pitch - this.sentPitch) * (180 / Math.PI) * pxPerDeg;
    ctx.fillStyle = "#111";
    ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);
    ctx.drawImage(this.lastBitmap, dx * scale, dy * scale,
                  this.canvas.width, this.canvas.height);
  }

  private drawChart() {
    const ctx = this.chart.getContext("2d");
    if (!ctx) return;
    const stats = this.conn.state.stats;
    const w = this.chart.width;
    const h = this.chart.height;
    ctx.fillStyle = "#181818";
    ctx.fillRect(0, 0, w, h);
    if (!stats.length) return;
    const maxFt = Math.max(...stats.map((s) => s.wall_time_ms), 1e-9);
    const maxSamp = Math.max(...stats.map((s) => s.samples_total), 1);
    const step = w / STATS_WINDOW;
    const plot = (get: (s: StatsMessage) => number, max: number,
                  color: string) => {
      ctx.strokeStyle = color;
      ctx.beginPath();
      stats.forEach((s, i) => {
        const x = w - (stats.length - i) * step;
        const y = h - (get(s) / max) * (h - 4) - 2;
        if (i === 0) ctx.moveTo(x, y);
        else ctx.lineTo(x, y);
      });
      ctx.stroke();
    };
    plot((s) => s.wall_time_ms, maxFt, "#e4b363");
    plot((s) => s.samples_total, maxSamp, "#6cc2e8");
    const last = stats[stats.length - 1];
    el<HTMLSpanElement>("stat-ft").textContent =
      `${last.wall_time_ms.toFixed(1)} ms`;
    el<HTMLSpanElement>("stat-samples").textContent =
      last.samples_total.toExponential(2);
  }

  private sendPose() {
    const q = poseQuat(this.pose);
    this.conn.send({ type: "pose", pos: this.pose.position, quat: q },
                   { pos: this.pose.position, quat: q });
  }

  private tick() {
    if (this.keys.size) {
      this.pose = move(this.pose, this.keys, 0.05);
      this.sendPose();
    }
  }

  private bindCanvas() {
    const c = this.canvas;
    c.addEventListener("mousedown", (ev) => {
      this.dragging = ev.shiftKey || ev.button === 2 ? "brush" : "look";
      if (this.dragging === "brush") this.brushAt(ev.offsetX, ev.offsetY);
    });
    c.addEventListener("contextmenu", (ev) => ev.preventDefault());
    window.addEventListener("mouseup", () => (this.dragging = null));
    c.addEventListener("mousemove", (ev) => {
      if (this.dragging === "look") {
        this.pose = turn(this.pose, ev.movementX * 0.004,
                         ev.movementY * 0.004);
        this.redraw();
        this.sendPose();
      } else if (this.dragging === "brush") {
        this.brushAt(ev.offsetX, ev.offsetY);
      }
    });
    window.addEventListener("keydown", (ev) => {
      if (["w", "a", "s", "d", "q", "e"].includes(ev.key)) {
        this.keys.add(ev.key);
      }
    });
    window.addEventListener("keyup", (ev) => this.keys.delete(ev.key));
  }

  /** One brush sample: probe depth under the cursor, then emit an edit at
   * the unprojected point (rate-limited server-side contractually, and
   * client-side here). */
  private brushAt(cx: number, cy: number) {
    if (!this.lastHeader) return;
    if (!this.conn.state.allowEdit(performance.now())) return;
    const res = this.lastHeader.width;
    const px = (cx / this.canvas.width) * res;
    const py = (cy / this.canvas.height) * res;
    this.conn.send({ type: "probe", px: Math.floor(px), py: Math.floor(py) });
    const dist = this.conn.state.brushDistance();
    const center = unproject(this.pose, this.conn.state.mirror.fov_deg, res,
                             px, py, dist);
    const radius = parseFloat(el<HTMLInputElement>("brush-radius").value);
    this.conn.send({ type: "edit", mode: this.brushMode, center, radius });
  }

  private bindControls() {
    const send = this.conn.send.bind(this.conn);
    const fov = el<HTMLInputElement>("fov");
    fov.addEventListener("change", () => {
      const v = parseFloat(fov.value);
      if (send({ type: "lens", fov_deg: v }, { fov_deg: v })) {
        el<HTMLSpanElement>("fov-out").textContent = `${v}`;
      }
    });
    const ppd = el<HTMLInputElement>("ppd");
    ppd.addEventListener("change", () => {
      const v = parseFloat(ppd.value);
      if (send({ type: "lens", ppd: v }, { ppd: v })) {
        el<HTMLSpanElement>("ppd-out").textContent = `${v}`;
      }
    });
    const mode = el<HTMLSelectElement>("mode");
    mode.addEventListener("change", () => {
      send({ type: "tunnel", mode: mode.value }, { mode: mode.value });
    });
    const alpha = el<HTMLInputElement>("merge-alpha");
    alpha.addEventListener("input", () => {
      const v = parseFloat(alpha.value);
      send({ type: "tunnel", merge_alpha: v }, { merge_alpha: v });
    });
    el<HTMLSelectElement>("brush-mode").addEventListener("change", (ev) => {
      this.brushMode = (ev.target as HTMLSelectElement).value as never;
    });
    // alignment steppers: translation xyz and uniform scale
    const align = () => {
      const t = ["ax", "ay", "az"].map(
        (id) => parseFloat(el<HTMLInputElement>(id).value));
      const s = parseFloat(el<HTMLInputElement>("ascale").value);
      send({ type: "align", translation: t, rotation_quat: [0, 0, 0, 1],
             scale: s },
           { align_translation: t, align_scale: s });
    };
    for (const id of ["ax", "ay", "az", "ascale"]) {
      el<HTMLInputElement>(id).addEventListener("change", align);
    }
  }

  private syncControls() {
    const m = this.conn.state.mirror;
    el<HTMLInputElement>("fov").value = `${m.fov_deg}`;
    el<HTMLSpanElement>("fov-out").textContent = `${m.fov_deg}`;
    el<HTMLInputElement>("ppd").value = `${m.ppd}`;
    el<HTMLSpanElement>("ppd-out").textContent = `${m.ppd}`;
    el<HTMLSelectElement>("mode").value = m.mode;
    el<HTMLInputElement>("merge-alpha").value = `${m.merge_alpha}`;
  }
}
