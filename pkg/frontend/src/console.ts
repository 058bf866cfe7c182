/** DOM wiring for the console page. All rendering decisions live in
 * model.ts; this file only moves data between the service client, the
 * reducers, and the document. */

import { ApiError, ServiceClient } from "./api.js";
import type { Scene } from "./api.js";
import { streamTrace } from "./sse.js";
import type { ReceivedFrame, StreamHandle } from "./sse.js";
import {
  configFromToggles,
  initialView,
  onConnected,
  onConnectFailed,
  onFrame,
  onStateRefreshed,
  onStreamDown,
  onTurnError,
  onTurnFinished,
  onTurnStarted,
  sceneModel,
  sendable,
  traceTimeline,
} from "./model.js";
import type { ViewState } from "./model.js";

const DEMO_SCENE: Scene = {
  entities: [
    { id: "e1", category: "ball", bbox: [0.1, 0.15, 0.12, 0.12], attributes: { color: "red" }, state: {}, visible: true },
    { id: "e2", category: "ball", bbox: [0.6, 0.2, 0.12, 0.12], attributes: { color: "yellow" }, state: {}, visible: true },
    { id: "e3", category: "box", bbox: [0.35, 0.55, 0.25, 0.25], attributes: { color: "blue" }, state: { lid: "closed" }, visible: true },
    { id: "e4", category: "cup", bbox: [0.78, 0.62, 0.1, 0.14], attributes: { color: "green" }, state: {}, visible: true },
  ],
  image_ref: null,
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const baseInput = el<HTMLInputElement>("base-url");
const sceneSelect = el<HTMLSelectElement>("scene-select");
const connectButton = el<HTMLButtonElement>("connect");
const banner = el<HTMLDivElement>("banner");
const canvas = el<HTMLCanvasElement>("scene-canvas");
const transcriptBox = el<HTMLDivElement>("transcript");
const inputBox = el<HTMLInputElement>("instruction");
const sendButton = el<HTMLButtonElement>("send");
const memoryBox = el<HTMLDivElement>("memory-panel");
const planBox = el<HTMLDivElement>("plan-panel");
const timelineBox = el<HTMLDivElement>("timeline-panel");
const sessionLabel = el<HTMLSpanElement>("session-label");
const toggleIds = ["disable-memory", "disable-perception", "disable-planner", "disable-tools"] as const;

let view: ViewState = initialView();
let client: ServiceClient | null = null;
let stream: StreamHandle | null = null;

function setView(next: ViewState): void {
  view = next;
  render();
}

function render(): void {
  sessionLabel.textContent = view.sessionId
    ? `${view.sessionId} (${view.backend})`
    : "not connected";
  banner.textContent = view.banner ? view.banner.text : "";
  banner.className = view.banner ? `banner ${view.banner.kind}` : "banner hidden";
  inputBox.disabled = view.inFlight || view.sessionId === null;
  sendButton.disabled = inputBox.disabled;
  renderScene();
  renderTranscript();
  renderMemory();
  renderPlan();
  renderTimeline();
}

function renderScene(): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (!view.scene) return;
  const rects = sceneModel(view.scene, new Set(view.highlights));
  for (const rect of rects) {
    const x = rect.x * canvas.width;
    const y = rect.y * canvas.height;
    const w = rect.w * canvas.width;
    const h = rect.h * canvas.height;
    ctx.lineWidth = rect.highlighted ? 4 : 1.5;
    ctx.strokeStyle = rect.highlighted ? "#d97706" : "#334155";
    ctx.fillStyle = rect.highlighted ? "rgba(217, 119, 6, 0.18)" : "rgba(51, 65, 85, 0.06)";
    ctx.fillRect(x, y, w, h);
    ctx.strokeRect(x, y, w, h);
    ctx.fillStyle = "#1e293b";
    ctx.font = "12px system-ui, sans-serif";
    ctx.fillText(rect.label, x + 3, Math.max(12, y - 4));
  }
}

function renderTranscript(): void {
  transcriptBox.replaceChildren(
    ...view.transcript.map((item) => {
      const row = document.createElement("div");
      row.className = item.clarify ? "line clarify" : `line ${item.role}`;
      row.textContent = `${item.role === "user" ? ">" : item.clarify ? "?" : "·"} ${item.text}`;
      return row;
    }),
  );
  transcriptBox.scrollTop = transcriptBox.scrollHeight;
}

function renderMemory(): void {
  if (!view.memory) {
    memoryBox.textContent = "no snapshot yet";
    return;
  }
  const parts: HTMLElement[] = [];
  for (const [title, entries] of [
    ["short tier", view.memory.short],
    ["long tier", view.memory.long],
  ] as const) {
    const head = document.createElement("div");
    head.className = "panel-head";
    head.textContent = `${title} (${entries.length})`;
    parts.push(head);
    for (const entry of entries) {
      const row = document.createElement("div");
      row.className = "entry";
      row.textContent = `${entry.salience.toFixed(3)} ${entry.kind} ${entry.content}`;
      parts.push(row);
    }
  }
  memoryBox.replaceChildren(...parts);
}

function renderPlan(): void {
  if (!view.plan) {
    planBox.textContent = "no plan yet";
    return;
  }
  const goal = document.createElement("div");
  goal.className = "panel-head";
  goal.textContent = view.plan.goal;
  const rows = view.plan.rows.map((row) => {
    const node = document.createElement("div");
    node.className = `entry status-${row.status}`;
    const deps = row.dependsOn.length ? ` after ${row.dependsOn.join(",")}` : "";
    node.textContent = `[${row.status}] ${row.id} ${row.objective}${deps}`;
    return node;
  });
  planBox.replaceChildren(goal, ...rows);
}

function renderTimeline(): void {
  const turns = traceTimeline(view.frames);
  const parts: HTMLElement[] = [];
  for (const turn of turns) {
    const head = document.createElement("div");
    head.className = "panel-head";
    head.textContent = `turn ${turn.turn}`;
    parts.push(head);
    for (const phase of turn.phases) {
      const row = document.createElement("div");
      row.className = "entry";
      const span = phase.spanMs > 0 ? ` ~${phase.spanMs.toFixed(0)}ms` : "";
      row.textContent = `${phase.phase} x${phase.count} seq ${phase.firstSeq}-${phase.lastSeq}${span}`;
      parts.push(row);
    }
  }
  timelineBox.replaceChildren(...parts);
  timelineBox.scrollTop = timelineBox.scrollHeight;
}

function currentToggles() {
  const [memory, perception, planner, tools] = toggleIds.map(
    (id) => el<HTMLInputElement>(id).checked,
  );
  return {
    disableMemory: memory ?? false,
    disablePerception: perception ?? false,
    disablePlanner: planner ?? false,
    disableTools: tools ?? false,
  };
}

async function connect(): Promise<void> {
  stream?.close();
  stream = null;
  client = new ServiceClient(baseInput.value.replace(/\/+$/, ""));
  const toggles = currentToggles();
  const body =
    sceneSelect.value === "demo"
      ? { scene: DEMO_SCENE, config: configFromToggles(toggles) }
      : { scenario_id: sceneSelect.value, config: configFromToggles(toggles) };
  try {
    const session = await client.createSession(body);
    setView({ ...onConnected({ ...view, toggles }, session), toggles });
    openStream(session.session_id);
  } catch (exc) {
    const detail = exc instanceof ApiError ? exc.detail : String(exc);
    setView(onConnectFailed(view, detail));
  }
}

function openStream(sessionId: string): void {
  if (!client) return;
  stream = streamTrace(client.baseUrl, sessionId, {
    onFrame(frame: ReceivedFrame) {
      setView(onFrame(view, frame));
    },
    onDown(reason: string) {
      setView(onStreamDown(view, reason));
    },
  });
}

async function send(): Promise<void> {
  const text = inputBox.value;
  if (!client || !view.sessionId || !sendable(view, text)) return;
  inputBox.value = "";
  setView(onTurnStarted(view, text));
  try {
    const turn = await client.sendTurn(view.sessionId, text.trim());
    setView(onTurnFinished(view, turn));
    const state = await client.getState(view.sessionId);
    setView(onStateRefreshed(view, state));
  } catch (exc) {
    if (exc instanceof ApiError) setView(onTurnError(view, exc.status, exc.detail));
    else setView(onTurnError(view, 0, String(exc)));
  }
}

async function loadScenarioChoices(): Promise<void> {
  if (!client) client = new ServiceClient(baseInput.value.replace(/\/+$/, ""));
  try {
    const scenarios = await client.listScenarios();
    for (const scenario of scenarios) {
      const option = document.createElement("option");
      option.value = scenario.id;
      option.textContent = `${scenario.id} (${scenario.turns} turns)`;
      sceneSelect.appendChild(option);
    }
  } catch {
    // service not up yet or no scenario dir; the demo scene still works
  }
}

connectButton.addEventListener("click", () => void connect());
sendButton.addEventListener("click", () => void send());
inputBox.addEventListener("keydown", (event) => {
  if (event.key === "Enter") void send();
});
void loadScenarioChoices();
render();
