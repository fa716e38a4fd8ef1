/** Client-side session state: outbound sequence numbers, the server-state
 * mirror (updated only when the matching ack arrives), the stats ring for
 * the live chart, and the brush-message rate limiter. */

import { StateMessage, StatsMessage, validateOutbound } from "./protocol.js";

export const STATS_WINDOW = 120;
export const EDIT_RATE_LIMIT_PER_S = 20;
export const BRUSH_FALLBACK_DIST = 0.7;

export interface MirrorState {
  pos: number[];
  quat: number[];
  fov_deg: number;
  ppd: number;
  plane_w: number;
  far_len: number;
  mode: string;
  peripheral_fov: number;
  feather_deg: number;
  merge_alpha: number;
  align_translation: number[];
  align_scale: number;
}

export class ClientState {
  seq = 0;
  connected = false;
  mirror: MirrorState = {
    pos: [0, 0, 0], quat: [0, 0, 0, 1], fov_deg: 30, ppd: 4,
    plane_w: 4, far_len: 6, mode: "volume", peripheral_fov: 60,
    feather_deg: 2, merge_alpha: 1, align_translation: [0, 0, 0],
    align_scale: 1,
  };
  pending = new Map<number, Partial<MirrorState>>();
  stats: StatsMessage[] = [];
  lastProbeDepth: number | null = null;
  probeSentinel: number | null = null;
  private editStamps: number[] = [];

  nextSeq(): number {
    this.seq += 1;
    return this.seq;
  }

  /** Stage an outbound message: validates, assigns seq, records the mirror
   * delta to apply on ack. Returns the ready-to-send message or null when
   * the payload is invalid (never sent). */
  stage(msg: Record<string, unknown>,
        delta?: Partial<MirrorState>): Record<string, unknown> | null {
    const err = validateOutbound(msg);
    if (err !== null) return null;
    const seq = this.nextSeq();
    const out = { ...msg, seq };
    if (delta) this.pending.set(seq, delta);
    return out;
  }

  onAck(seq: number) {
    const delta = this.pending.get(seq);
    if (delta) {
      Object.assign(this.mirror, delta);
      this.pending.delete(seq);
    }
  }

  onErr(seq: number | null) {
    if (seq !== null) this.pending.delete(seq);
  }

  onState(msg: StateMessage) {
    this.mirror.pos = msg.pos;
    this.mirror.quat = msg.quat;
    this.mirror.fov_deg = msg.fov_deg;
    this.mirror.ppd = msg.ppd;
    this.mirror.plane_w = msg.plane_w;
    this.mirror.far_len = msg.far_len;
    this.mirror.mode = msg.mode;
    this.mirror.peripheral_fov = msg.peripheral_fov;
    this.mirror.feather_deg = msg.feather_deg;
    this.mirror.merge_alpha = msg.merge_alpha;
  }

  onStats(msg: StatsMessage) {
    this.stats.push(msg);
    if (this.stats.length > STATS_WINDOW) {
      this.stats.splice(0, this.stats.length - STATS_WINDOW);
    }
  }

  /** True when an edit message may be sent now (<= 20 per second). */
  allowEdit(nowMs: number): boolean {
    const cutoff = nowMs - 1000;
    this.editStamps = this.editStamps.filter((t) => t > cutoff);
    if (this.editStamps.length >= EDIT_RATE_LIMIT_PER_S) return false;
    this.editStamps.push(nowMs);
    return true;
  }

  brushDistance(): number {
    if (this.lastProbeDepth !== null && this.probeSentinel !== null &&
        this.lastProbeDepth < this.probeSentinel * 0.999) {
      return this.lastProbeDepth;
    }
    return BRUSH_FALLBACK_DIST;
  }

  quiescent(): boolean {
    return this.pending.size === 0;
  }
}
