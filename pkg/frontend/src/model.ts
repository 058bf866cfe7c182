/** Pure view models over API payloads.
 *
 * Everything here is a function from received data to render-ready
 * structures; nothing simulates agent behavior. The console's DOM layer
 * stays thin by pushing all decisions into these reducers.
 */

import type {
  Action,
  MemoryDump,
  MemoryEntryDump,
  PlanDump,
  Scene,
  SessionResponse,
  StateResponse,
  TurnResponse,
} from "./api.js";
import type { ReceivedFrame } from "./sse.js";

// --- scene canvas ---

export interface SceneRect {
  id: string;
  label: string;
  x: number;
  y: number;
  w: number;
  h: number;
  highlighted: boolean;
}

/** Ids targeted by point/highlight actions; these become canvas overlays. */
export function highlightTargets(actions: readonly Action[]): Set<string> {
  const ids = new Set<string>();
  for (const action of actions) {
    if ((action.kind === "point" || action.kind === "highlight") && action.entity_id) {
      ids.add(action.entity_id);
    }
  }
  return ids;
}

export function sceneModel(scene: Scene, highlights: ReadonlySet<string>): SceneRect[] {
  const rects: SceneRect[] = [];
  for (const entity of scene.entities) {
    if (!entity.visible) continue;
    const descriptor = [entity.attributes["color"], entity.category]
      .filter((part): part is string => Boolean(part))
      .join(" ");
    rects.push({
      id: entity.id,
      label: `${entity.id}: ${descriptor}`,
      x: entity.bbox[0],
      y: entity.bbox[1],
      w: entity.bbox[2],
      h: entity.bbox[3],
      highlighted: highlights.has(entity.id),
    });
  }
  return rects;
}

// --- side panels ---

export interface MemoryPanel {
  currentTurn: number;
  short: MemoryEntryDump[];
  long: MemoryEntryDump[];
}

export function memoryPanel(memory: MemoryDump): MemoryPanel {
  const bySalience = (a: MemoryEntryDump, b: MemoryEntryDump) =>
    b.salience - a.salience || (a.id < b.id ? -1 : a.id > b.id ? 1 : 0);
  return {
    currentTurn: memory.current_turn,
    short: [...memory.short].sort(bySalience),
    long: Object.values(memory.long).sort(bySalience),
  };
}

export interface PlanRow {
  id: string;
  objective: string;
  status: string;
  dependsOn: string[];
}

export interface PlanPanel {
  goal: string;
  rows: PlanRow[];
}

export function planPanel(plan: PlanDump | null): PlanPanel | null {
  if (!plan) return null;
  return {
    goal: plan.goal,
    rows: plan.subtasks.map((s) => ({
      id: s.id,
      objective: s.objective,
      status: s.status,
      dependsOn: s.depends_on,
    })),
  };
}

// --- trace timeline ---

export interface PhaseGroup {
  phase: string;
  count: number;
  firstSeq: number;
  lastSeq: number;
  /** Wall-clock spread of frame arrivals in this group; client-side metadata. */
  spanMs: number;
}

export interface TimelineTurn {
  turn: number;
  phases: PhaseGroup[];
}

export function traceTimeline(frames: readonly ReceivedFrame[]): TimelineTurn[] {
  interface Group extends PhaseGroup {
    firstAt: number;
  }
  const turns: { turn: number; phases: Group[] }[] = [];
  for (const frame of frames) {
    let turn = turns[turns.length - 1];
    if (!turn || turn.turn !== frame.turn) {
      turn = { turn: frame.turn, phases: [] };
      turns.push(turn);
    }
    let group = turn.phases[turn.phases.length - 1];
    if (!group || group.phase !== frame.phase) {
      group = {
        phase: frame.phase,
        count: 0,
        firstSeq: frame.seq,
        lastSeq: frame.seq,
        spanMs: 0,
        firstAt: frame.receivedAt,
      };
      turn.phases.push(group);
    }
    group.count += 1;
    group.lastSeq = frame.seq;
    group.spanMs = frame.receivedAt - group.firstAt;
  }
  return turns.map((turn) => ({
    turn: turn.turn,
    phases: turn.phases.map(({ firstAt: _firstAt, ...rest }) => rest),
  }));
}

// --- view state ---

export interface TranscriptItem {
  role: "user" | "agent";
  text: string;
  clarify?: boolean;
}

export interface Banner {
  kind: "error" | "notice";
  text: string;
}

export interface AblationToggles {
  disableMemory: boolean;
  disablePerception: boolean;
  disablePlanner: boolean;
  disableTools: boolean;
}

export interface ViewState {
  sessionId: string | null;
  backend: string | null;
  scene: Scene | null;
  highlights: string[];
  transcript: TranscriptItem[];
  memory: MemoryPanel | null;
  plan: PlanPanel | null;
  frames: ReceivedFrame[];
  inFlight: boolean;
  banner: Banner | null;
  toggles: AblationToggles;
}

export function initialView(): ViewState {
  return {
    sessionId: null,
    backend: null,
    scene: null,
    highlights: [],
    transcript: [],
    memory: null,
    plan: null,
    frames: [],
    inFlight: false,
    banner: null,
    toggles: {
      disableMemory: false,
      disablePerception: false,
      disablePlanner: false,
      disableTools: false,
    },
  };
}

export function configFromToggles(toggles: AblationToggles): { flags: Record<string, boolean> } {
  return {
    flags: {
      disable_memory: toggles.disableMemory,
      disable_perception: toggles.disablePerception,
      disable_planner: toggles.disablePlanner,
      disable_tools: toggles.disableTools,
    },
  };
}

export function onConnected(view: ViewState, session: SessionResponse): ViewState {
  return {
    ...view,
    sessionId: session.session_id,
    backend: session.backend,
    scene: session.scene,
    highlights: [],
    transcript: [],
    frames: [],
    memory: null,
    plan: null,
    inFlight: false,
    banner: null,
  };
}

export function onConnectFailed(view: ViewState, detail: string): ViewState {
  return { ...view, banner: { kind: "error", text: `connection failed: ${detail}` } };
}

/** Client-side input gate: empty text never leaves the browser. */
export function sendable(view: ViewState, text: string): boolean {
  return view.sessionId !== null && !view.inFlight && text.trim().length > 0;
}

export function onTurnStarted(view: ViewState, text: string): ViewState {
  return {
    ...view,
    inFlight: true,
    banner: null,
    transcript: [...view.transcript, { role: "user", text: text.trim() }],
  };
}

export function onTurnFinished(view: ViewState, turn: TurnResponse): ViewState {
  const spoken: TranscriptItem[] = [];
  for (const action of [...turn.actions, turn.summary]) {
    if (action.kind === "respond" && action.text) {
      spoken.push({ role: "agent", text: action.text });
    } else if (action.kind === "clarify" && action.text) {
      spoken.push({ role: "agent", text: action.text, clarify: true });
    }
  }
  const highlighted = highlightTargets([...turn.actions, turn.summary]);
  return {
    ...view,
    inFlight: false,
    scene: turn.scene,
    highlights: [...highlighted].sort(),
    transcript: [...view.transcript, ...spoken],
  };
}

export function onTurnError(view: ViewState, status: number, detail: string): ViewState {
  let text: string;
  if (status === 409) text = "turn in flight; wait for the current turn to finish";
  else if (status === 502) text = `backend failure: ${detail}`;
  else text = `error ${status}: ${detail}`;
  return { ...view, inFlight: false, banner: { kind: "error", text } };
}

/** Replays after a reconnect resend everything; frames at or below the
 * last seen seq are dropped. */
export function onFrame(view: ViewState, frame: ReceivedFrame): ViewState {
  const last = view.frames[view.frames.length - 1];
  if (last && frame.seq <= last.seq) return view;
  return { ...view, frames: [...view.frames, frame] };
}

export function onStreamDown(view: ViewState, reason: string): ViewState {
  return {
    ...view,
    banner: { kind: "notice", text: `event stream disconnected (${reason}); reconnect to resume` },
  };
}

export function onStateRefreshed(view: ViewState, state: StateResponse): ViewState {
  return {
    ...view,
    scene: state.scene,
    memory: memoryPanel(state.memory),
    plan: planPanel(state.plan),
  };
}
