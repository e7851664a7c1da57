// Wire grammar shared with the telemetry server: one text message per
// websocket frame.
//
//   FRAME t=0.01 w_ref=120.0 ... mode=foc pwm=1 sat=0 trip=0
//   CMD <id> <name> [args...]      (client -> server)
//   ACK <id>
//   ERR <id|-> <text>

export interface Frame {
  t: number;
  wRef: number;
  wMeas: number;
  ia: number;
  ib: number;
  ic: number;
  id: number;
  iq: number;
  thetaE: number;
  da: number;
  db: number;
  dc: number;
  mode: string;
  pwm: boolean;
  sat: boolean;
  trip: boolean;
}

export type ServerMessage =
  | { kind: "frame"; frame: Frame }
  | { kind: "ack"; id: number }
  | { kind: "err"; id: number | null; text: string };

const NUMERIC_FIELDS: Array<[string, keyof Frame]> = [
  ["t", "t"], ["w_ref", "wRef"], ["w_meas", "wMeas"],
  ["ia", "ia"], ["ib", "ib"], ["ic", "ic"],
  ["id", "id"], ["iq", "iq"], ["theta_e", "thetaE"],
  ["da", "da"], ["db", "db"], ["dc", "dc"],
];

export function parseServerMessage(line: string): ServerMessage | null {
  if (line.startsWith("ACK ")) {
    const id = Number(line.slice(4).trim());
    return Number.isFinite(id) ? { kind: "ack", id } : null;
  }
  if (line.startsWith("ERR ")) {
    const rest = line.slice(4);
    const space = rest.indexOf(" ");
    const idTok = space < 0 ? rest : rest.slice(0, space);
    const text = space < 0 ? "" : rest.slice(space + 1);
    const id = idTok === "-" ? null : Number(idTok);
    if (id !== null && !Number.isFinite(id)) return null;
    return { kind: "err", id, text };
  }
  if (!line.startsWith("FRAME ")) return null;

  const fields = new Map<string, string>();
  for (const token of line.slice(6).split(" ")) {
    const eq = token.indexOf("=");
    if (eq > 0) fields.set(token.slice(0, eq), token.slice(eq + 1));
  }
  const frame: Partial<Frame> = {};
  for (const [wire, prop] of NUMERIC_FIELDS) {
    const raw = fields.get(wire);
    if (raw === undefined) return null;
    const value = Number(raw);
    if (!Number.isFinite(value)) return null;
    (frame as Record<string, unknown>)[prop] = value;
  }
  const mode = fields.get("mode");
  if (!mode) return null;
  frame.mode = mode;
  frame.pwm = fields.get("pwm") === "1";
  frame.sat = fields.get("sat") === "1";
  frame.trip = fields.get("trip") === "1";
  return { kind: "frame", frame: frame as Frame };
}

export function commandLine(
  id: number, name: string, args: Array<string | number>,
): string {
  return ["CMD", String(id), name, ...args.map(String)].join(" ");
}

export const GAIN_NAMES = [
  "kp_id", "ki_id", "kp_iq", "ki_iq", "kp_w", "ki_w",
  "vf_volts_per_hz", "vf_boost", "id_ref", "speed_filter_hz",
] as const;
