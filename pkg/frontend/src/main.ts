// DOM wiring: live plots, drive controls and the gain table, all fed by
// the telemetry stream.  Rendering is decoupled from message receipt: the
// socket fills DashboardState and a requestAnimationFrame loop draws it.

import { GAIN_NAMES } from "./protocol.js";
import { DashboardState } from "./state.js";
import { RollingPlot } from "./plot.js";
import { ReconnectingSocket } from "./socket.js";

const state = new DashboardState();

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

const defaultUrl = `ws://${location.host || "127.0.0.1:8765"}/stream`;
const urlInput = el<HTMLInputElement>("server-url");
urlInput.value = defaultUrl;

let socket: ReconnectingSocket | null = null;

function send(name: string, args: Array<string | number>): void {
  const { line } = state.prepareCommand(name, args, performance.now());
  if (!socket || !socket.send(line)) {
    state.errors.push({ text: `not connected; ${name} not sent`,
                        at: performance.now() });
  }
}

// -- controls -------------------------------------------------------------

el<HTMLButtonElement>("btn-start").onclick = () => send("pwm_enable", [1]);
el<HTMLButtonElement>("btn-stop").onclick = () => send("pwm_enable", [0]);
for (const mode of ["idle", "vf", "foc"]) {
  el<HTMLButtonElement>(`btn-mode-${mode}`).onclick =
    () => send("set_mode", [mode]);
}

const slider = el<HTMLInputElement>("speed-slider");
const sliderValue = el<HTMLSpanElement>("speed-value");
slider.oninput = () => { sliderValue.textContent = `${slider.value} rad/s`; };
slider.onchange = () => send("set_speed_ref", [Number(slider.value)]);

const gainTable = el<HTMLTableSectionElement>("gain-rows");
for (const name of GAIN_NAMES) {
  const row = document.createElement("tr");
  const label = document.createElement("td");
  label.textContent = name;
  const cell = document.createElement("td");
  const input = document.createElement("input");
  input.type = "number";
  input.step = "any";
  input.id = `gain-${name}`;
  cell.appendChild(input);
  const action = document.createElement("td");
  const btn = document.createElement("button");
  btn.textContent = "set";
  btn.onclick = () => {
    if (input.value === "") return;
    if (name === "id_ref") send("set_id_ref", [Number(input.value)]);
    else send("set_gain", [name, Number(input.value)]);
  };
  action.appendChild(btn);
  row.append(label, cell, action);
  gainTable.appendChild(row);
}

el<HTMLButtonElement>("btn-connect").onclick = () => {
  socket?.close();
  state.status = "connecting";
  socket = new ReconnectingSocket(urlInput.value, {
    onOpen: () => state.onOpen(),
    onClose: () => state.onClose(),
    onLine: (line) => {
      const msg = state.onMessage(line, performance.now());
      if (msg?.kind === "ack") syncAckedControls();
    },
  });
  socket.connect();
};

function syncAckedControls(): void {
  const speed = state.lastAcked.get("set_speed_ref");
  if (speed !== undefined) {
    slider.value = speed;
    sliderValue.textContent = `${speed} rad/s`;
  }
}

// -- rendering ---------------------------------------------------------------

const plots = [
  new RollingPlot(el<HTMLCanvasElement>("plot-speed"), "speed [rad/s]", [
    { label: "ref", color: "#f2c14e", value: (f) => f.wRef },
    { label: "meas", color: "#46b4e8", value: (f) => f.wMeas },
  ]),
  new RollingPlot(el<HTMLCanvasElement>("plot-dq"), "dq currents [A]", [
    { label: "id", color: "#6fd08c", value: (f) => f.id },
    { label: "iq", color: "#e06c75", value: (f) => f.iq },
  ]),
  new RollingPlot(el<HTMLCanvasElement>("plot-phase"), "phase currents [A]", [
    { label: "ia", color: "#46b4e8", value: (f) => f.ia },
    { label: "ib", color: "#f2c14e", value: (f) => f.ib },
    { label: "ic", color: "#c678dd", value: (f) => f.ic },
  ]),
  new RollingPlot(el<HTMLCanvasElement>("plot-duty"), "duty cycles", [
    { label: "da", color: "#46b4e8", value: (f) => f.da },
    { label: "db", color: "#f2c14e", value: (f) => f.db },
    { label: "dc", color: "#c678dd", value: (f) => f.dc },
  ], { yMin: -0.05, yMax: 1.05 }),
];

const statusBadge = el<HTMLSpanElement>("status");
const retryBanner = el<HTMLDivElement>("retry-banner");
const modeBadge = el<HTMLSpanElement>("mode-badge");
const counters = el<HTMLSpanElement>("counters");
const toastBox = el<HTMLDivElement>("toasts");

function draw(): void {
  state.tick(performance.now());
  statusBadge.textContent = state.status;
  statusBadge.className = `badge ${state.status}`;
  retryBanner.style.display = state.status === "retry" ? "block" : "none";

  const latest = state.latest();
  if (latest) {
    modeBadge.textContent =
      `${latest.mode}${latest.pwm ? "" : " (inhibited)"}${latest.trip ? " TRIP" : ""}`;
  } else {
    modeBadge.textContent = "-";
  }
  counters.textContent =
    `frames ${state.framesReceived} | window evictions ${state.evicted} | ` +
    `inferred drops ${state.inferredDrops} | pending ${state.pending.size}`;

  toastBox.textContent = "";
  for (const err of state.errors.slice(-3)) {
    const div = document.createElement("div");
    div.className = "toast";
    div.textContent = err.text;
    toastBox.appendChild(div);
  }

  for (const plot of plots) plot.render(state.frames, state.windowSeconds);
  requestAnimationFrame(draw);
}

requestAnimationFrame(draw);
