/** Wire protocol shared with the render server: control message shapes,
 * client-side range validation mirroring the server schema, and binary
 * frame packet parsing. */

export const FRAME_MAGIC = 0x464c4e4d; // "MNLF" little-endian
export const FRAME_HEADER_BYTES = 18;
export const FORMAT_RGBA8_PNG = 0;

export interface FrameHeader {
  width: number;
  height: number;
  format: number;
  flags: number;
  frameId: number;
  payloadLen: number;
}

export class ProtocolError extends Error {}

export function parseFrameHeader(buf: ArrayBuffer): FrameHeader {
  if (buf.byteLength < FRAME_HEADER_BYTES) {
    throw new ProtocolError(
      `frame packet too short: ${buf.byteLength} bytes`);
  }
  const v = new DataView(buf);
  if (v.getUint32(0, true) !== FRAME_MAGIC) {
    throw new ProtocolError("bad frame magic");
  }
  const header: FrameHeader = {
    width: v.getUint16(4, true),
    height: v.getUint16(6, true),
    format: v.getUint8(8),
    flags: v.getUint8(9),
    frameId: v.getUint32(10, true),
    payloadLen: v.getUint32(14, true),
  };
  if (buf.byteLength - FRAME_HEADER_BYTES !== header.payloadLen) {
    throw new ProtocolError(
      `payload length mismatch: header says ${header.payloadLen}, ` +
      `got ${buf.byteLength - FRAME_HEADER_BYTES}`);
  }
  return header;
}

export function framePayload(buf: ArrayBuffer): Uint8Array {
  return new Uint8Array(buf, FRAME_HEADER_BYTES);
}

export interface StatsMessage {
  type: "stats";
  frame_id: number;
  resolution: number;
  mode: string;
  rays_total: number;
  rays_active: number;
  samples_total: number;
  wall_time_ms: number;
  skipped_voxel_spans: number;
}

export interface StateMessage {
  type: "state";
  seq: number | null;
  pos: number[];
  quat: number[];
  near: number;
  far: number;
  fov_deg: number;
  ppd: number;
  plane_w: number;
  far_len: number;
  supersample_c: number;
  mode: string;
  peripheral_fov: number;
  feather_deg: number;
  merge_alpha: number;
  frame_id: number;
  resolution: number;
  scene_loaded: boolean;
  mesh_loaded: boolean;
}

export type ServerMessage =
  | StatsMessage
  | StateMessage
  | { type: "ack"; seq: number }
  | { type: "err"; seq: number | null; reason: string }
  | { type: "probe_result"; seq: number; depth: number; sentinel: number };

export const MODES = ["volume", "tunnel", "merge", "occlude"] as const;
export type Mode = (typeof MODES)[number];

/** Client-side validation; mirrors the server's ranges so no message is
 * ever sent with an out-of-range parameter. Returns an error string or
 * null when acceptable. */
export function validateOutbound(msg: Record<string, unknown>): string | null {
  switch (msg.type) {
    case "lens": {
      const fov = msg.fov_deg as number | undefined;
      if (fov !== undefined && !(fov > 0 && fov <= 120)) {
        return "fov_deg out of range (0, 120]";
      }
      const ppd = msg.ppd as number | undefined;
      if (ppd !== undefined && !(ppd > 0)) return "ppd must be > 0";
      const pw = msg.plane_w as number | undefined;
      if (pw !== undefined && !(pw > 0)) return "plane_w must be > 0";
      return null;
    }
    case "tunnel": {
      const a = msg.merge_alpha as number | undefined;
      if (a !== undefined && !(a >= 0 && a <= 1)) {
        return "merge_alpha out of range [0, 1]";
      }
      const f = msg.feather_deg as number | undefined;
      if (f !== undefined && !(f >= 0)) return "feather_deg must be >= 0";
      const m = msg.mode as string | undefined;
      if (m !== undefined && !MODES.includes(m as Mode)) {
        return `mode must be one of ${MODES.join(", ")}`;
      }
      return null;
    }
    case "edit": {
      if (!((msg.radius as number) > 0)) return "radius must be > 0";
      if (msg.mode !== "erase" && msg.mode !== "reveal") {
        return "edit mode must be erase or reveal";
      }
      return null;
    }
    case "align": {
      if (!((msg.scale as number) > 0)) return "scale must be > 0";
      return null;
    }
    case "pose": {
      const q = msg.quat as number[];
      const n = Math.hypot(q[0], q[1], q[2], q[3]);
      if (Math.abs(n - 1) > 1e-6) return "quaternion must be normalized";
      return null;
    }
    default:
      return null;
  }
}
