/** Typed client for the annotation service; the console talks to nothing else. */

export interface Task {
  id: string;
  kind: string;
  payload: string;
  context: string;
  classifier_score: number;
  label: string | null;
  annotator: string | null;
  labeled_at: string | null;
  status: string;
}

export interface TaskFilter {
  kind?: string | null;
  status?: string | null;
  limit?: number;
}

export interface LabelOutcome {
  status: number;
  task: Task | null;
  detail: string;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
    private readonly baseUrl: string = "",
  ) {}

  async listTasks(filter: TaskFilter = {}): Promise<Task[]> {
    const params = new URLSearchParams();
    if (filter.kind) params.set("kind", filter.kind);
    if (filter.status) params.set("status", filter.status);
    params.set("limit", String(filter.limit ?? 1000));
    const res = await this.fetchFn(`${this.baseUrl}/tasks?${params.toString()}`);
    if (!res.ok) throw new Error(`GET /tasks failed: ${res.status}`);
    return (await res.json()) as Task[];
  }

  /** The console's only mutation: label one task. Returns outcome, never throws on 4xx. */
  async submitLabel(
    id: string,
    label: "accept" | "reject",
    annotator: string,
    override = false,
  ): Promise<LabelOutcome> {
    const res = await this.fetchFn(`${this.baseUrl}/tasks/${encodeURIComponent(id)}/label`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ label, annotator, override }),
    });
    let body: unknown = null;
    try {
      body = await res.json();
    } catch {
      body = null;
    }
    if (res.ok) {
      return { status: res.status, task: body as Task, detail: "" };
    }
    const detail =
      body && typeof body === "object" && "detail" in body
        ? String((body as { detail: unknown }).detail)
        : `HTTP ${res.status}`;
    return { status: res.status, task: null, detail };
  }

  async stats(): Promise<Record<string, number>> {
    const res = await this.fetchFn(`${this.baseUrl}/kg/stats`);
    if (!res.ok) throw new Error(`GET /kg/stats failed: ${res.status}`);
    return (await res.json()) as Record<string, number>;
  }
}
