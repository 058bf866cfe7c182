/** Typed client for the agent service HTTP API.
 *
 * One method per endpoint; non-2xx responses raise ApiError carrying the
 * server's detail string so callers can branch on status (409 turn in
 * flight, 422 bad payload, 502 backend failure).
 */

export type BBox = [number, number, number, number];

export interface Entity {
  id: string;
  category: string;
  bbox: BBox;
  attributes: Record<string, string>;
  state: Record<string, string>;
  visible: boolean;
}

export interface Scene {
  entities: Entity[];
  image_ref: string | null;
}

export interface WorldEvent {
  kind: "move" | "set_state" | "set_attribute" | "appear" | "disappear";
  entity_id?: string;
  bbox?: BBox;
  key?: string;
  value?: string;
  entity?: Entity;
}

export interface Action {
  kind: "point" | "respond" | "clarify" | "world_event" | "highlight";
  subtask_id: string;
  attempt: number;
  entity_id?: string;
  bbox?: BBox;
  text?: string;
  entity_refs: string[];
  escalated?: boolean;
}

export interface SubtaskResult {
  subtask_id: string;
  objective: string;
  status: string;
  attempts: number;
  resolved_ids: string[];
}

export interface TurnResponse {
  turn: number;
  instruction: string;
  events: WorldEvent[];
  intents: string[];
  actions: Action[];
  summary: Action;
  all_actions: Action[];
  answers: Record<string, string>;
  subtasks: SubtaskResult[];
  resolved_ids: string[];
  focus: string[];
  scene_revision_before: number;
  scene_revision_after: number;
  scene: Scene;
}

export interface FlagsBody {
  disable_memory?: boolean;
  disable_perception?: boolean;
  disable_planner?: boolean;
  disable_tools?: boolean;
}

export interface ConfigBody {
  flags?: FlagsBody;
  memory?: Record<string, number>;
  margin?: number;
  n_focus?: number;
  max_retries?: number;
  seed?: number;
  parser_mode?: string;
}

export interface ScriptRuleBody {
  pattern: string;
  reply: string;
  phase?: string | null;
  consume_once?: boolean;
}

export interface CreateSessionBody {
  scene?: Scene;
  scenario_id?: string;
  config?: ConfigBody;
  backend?: "oracle" | "scripted";
  script?: ScriptRuleBody[];
}

export interface SessionResponse {
  session_id: string;
  scene: Scene;
  config: Record<string, unknown>;
  backend: string;
}

export interface MemoryEntryDump {
  id: string;
  kind: string;
  content: string;
  entity_refs: string[];
  turn_created: number;
  last_accessed: number;
  mention_count: number;
  salience: number;
  tier: "short" | "long";
}

export interface MemoryDump {
  current_turn: number;
  short: MemoryEntryDump[];
  long: Record<string, MemoryEntryDump>;
}

export interface PlanSubtask {
  id: string;
  objective: string;
  status: string;
  depends_on: string[];
}

export interface PlanDump {
  goal: string;
  subtasks: PlanSubtask[];
}

export interface StateResponse {
  session_id: string;
  turn_count: number;
  scene: Scene;
  memory: MemoryDump;
  plan: PlanDump | null;
  trace_length: number;
  scores: Record<string, unknown> | null;
}

export interface ScenarioInfo {
  id: string;
  title: string;
  tags: string[];
  turns: number;
  checks: number;
}

export interface RunStart {
  run_id: string;
  status: string;
  scenarios: number;
}

export interface RunStatus {
  run_id: string;
  status: "running" | "done" | "error";
  report?: Record<string, unknown>;
  latency?: Record<string, unknown>;
  error?: string;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`${status}: ${detail}`);
    this.name = "ApiError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ServiceClient {
  private readonly fetchImpl: FetchLike;

  constructor(
    readonly baseUrl: string,
    fetchImpl?: FetchLike,
  ) {
    // wrap so a bare global fetch keeps its own this binding
    this.fetchImpl = fetchImpl ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: { accept: "application/json" } };
    if (body !== undefined) {
      init.headers = { ...init.headers, "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    let response: Response;
    try {
      response = await this.fetchImpl(this.baseUrl + path, init);
    } catch (exc) {
      throw new ApiError(0, exc instanceof Error ? exc.message : String(exc));
    }
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const parsed = (await response.json()) as { detail?: unknown };
        if (typeof parsed.detail === "string") detail = parsed.detail;
        else if (parsed.detail !== undefined) detail = JSON.stringify(parsed.detail);
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  createSession(body: CreateSessionBody): Promise<SessionResponse> {
    return this.request("POST", "/sessions", body);
  }

  sendTurn(sessionId: string, instruction: string, events: WorldEvent[] = []): Promise<TurnResponse> {
    return this.request("POST", `/sessions/${sessionId}/turns`, { instruction, events });
  }

  getState(sessionId: string): Promise<StateResponse> {
    return this.request("GET", `/sessions/${sessionId}/state`);
  }

  listScenarios(): Promise<ScenarioInfo[]> {
    return this.request("GET", "/scenarios");
  }

  startRun(body: { configs: string[]; scenario_ids?: string[]; seed?: number }): Promise<RunStart> {
    return this.request("POST", "/runs", body);
  }

  getRun(runId: string): Promise<RunStatus> {
    return this.request("GET", `/runs/${runId}`);
  }
}
