import { Viewer } from "./ui.js";

const proto = location.protocol === "https:" ? "wss" : "ws";
const viewer = new Viewer(`${proto}://${location.host}/stream`);
viewer.start();

(globalThis as Record<string, unknown>).viewer = viewer;
