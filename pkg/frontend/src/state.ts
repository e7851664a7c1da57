// Dashboard session state, kept apart from the DOM so it can be unit
// tested.  Every plotted point comes from a received frame; the buffers are
// cleared on connect and disconnect so nothing stale is ever rendered.

import { Frame, ServerMessage, commandLine, parseServerMessage } from "./protocol.js";

export type ConnectionStatus = "connecting" | "connected" | "retry";

export interface PendingCommand {
  id: number;
  label: string;
  name: string;
  value: string;
  sentAt: number;
}

export interface SurfacedError {
  text: string;
  at: number;
}

export const PENDING_TIMEOUT_MS = 2000;

export class DashboardState {
  status: ConnectionStatus = "connecting";
  frames: Frame[] = [];
  windowSeconds = 10;
  evicted = 0;
  inferredDrops = 0;
  framesReceived = 0;
  pending = new Map<number, PendingCommand>();
  errors: SurfacedError[] = [];
  lastAcked = new Map<string, string>();
  private nextId = 1;
  private medianDt = 0;

  onOpen(): void {
    this.status = "connected";
    // Fresh history on every (re)connect: no time-travel splices.
    this.frames = [];
    this.medianDt = 0;
  }

  onClose(): void {
    this.status = "retry";
    this.frames = [];
    this.pending.clear();
  }

  /** Returns the parsed message (for the caller's own wiring), or null. */
  onMessage(line: string, nowMs: number): ServerMessage | null {
    const msg = parseServerMessage(line);
    if (!msg) return null;
    if (msg.kind === "frame") {
      if (this.status === "connected") this.pushFrame(msg.frame);
    } else if (msg.kind === "ack") {
      const cmd = this.pending.get(msg.id);
      if (cmd) {
        this.pending.delete(msg.id);
        this.lastAcked.set(cmd.name, cmd.value);
      }
    } else {
      if (msg.id !== null) this.pending.delete(msg.id);
      this.errors.push({ text: msg.text || "server error", at: nowMs });
    }
    return msg;
  }

  /** Register a command and return the wire line to transmit. */
  prepareCommand(
    name: string, args: Array<string | number>, nowMs: number,
  ): { id: number; line: string } {
    const id = this.nextId++;
    const value = args.map(String).join(" ");
    this.pending.set(id, {
      id, name, value, label: `${name} ${value}`.trim(), sentAt: nowMs,
    });
    return { id, line: commandLine(id, name, args) };
  }

  /** Expire stale pending commands into visible errors. */
  tick(nowMs: number): void {
    for (const [id, cmd] of this.pending) {
      if (nowMs - cmd.sentAt >= PENDING_TIMEOUT_MS) {
        this.pending.delete(id);
        this.errors.push({ text: `no reply to ${cmd.label}`, at: nowMs });
      }
    }
    const cutoff = nowMs - 6000;
    this.errors = this.errors.filter((e) => e.at > cutoff);
  }

  latest(): Frame | null {
    return this.frames.length ? this.frames[this.frames.length - 1] : null;
  }

  private pushFrame(frame: Frame): void {
    const prev = this.latest();
    this.frames.push(frame);
    this.framesReceived += 1;
    if (prev) {
      const dt = frame.t - prev.t;
      if (dt > 0) {
        if (this.medianDt > 0 && dt > 2.5 * this.medianDt) {
          // cadence gap: count the missing frames, keep the estimate
          this.inferredDrops += Math.round(dt / this.medianDt) - 1;
        } else {
          this.medianDt = this.medianDt === 0
            ? dt : 0.9 * this.medianDt + 0.1 * dt;
        }
      }
    }
    const horizon = frame.t - this.windowSeconds;
    let cut = 0;
    while (cut < this.frames.length && this.frames[cut].t < horizon) cut++;
    if (cut > 0) {
      this.frames.splice(0, cut);
      this.evicted += cut;
    }
  }
}
