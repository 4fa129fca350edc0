/** Session state: filter, cursor, pagination and in-flight submissions. */
import type { Task } from "./api.js";

export interface Filter {
  kind: string | null;
  status: string | null;
}

export const PAGE_SIZE = 10;

export interface RelationSpans {
  tokens: string[];
  span1: [number, number];
  span2: [number, number];
}

/** Parse a relation task payload; null when not a well-formed relation candidate. */
export function relationSpans(task: Task): RelationSpans | null {
  if (task.kind !== "relation") return null;
  try {
    const data = JSON.parse(task.payload) as {
      tokens?: unknown;
      span1?: unknown;
      span2?: unknown;
    };
    const tokens = data.tokens;
    const span1 = data.span1;
    const span2 = data.span2;
    if (!Array.isArray(tokens) || !Array.isArray(span1) || !Array.isArray(span2)) return null;
    const [a1, b1] = span1 as number[];
    const [a2, b2] = span2 as number[];
    const inBounds = (a: number, b: number) =>
      Number.isInteger(a) && Number.isInteger(b) && a >= 0 && a < b && b <= tokens.length;
    if (!inBounds(a1, b1) || !inBounds(a2, b2)) return null;
    return { tokens: tokens.map(String), span1: [a1, b1], span2: [a2, b2] };
  } catch {
    return null;
  }
}

export class SessionState {
  tasks: Task[] = [];
  cursor = 0;
  filter: Filter = { kind: null, status: null };
  annotator = "console";
  pageSize = PAGE_SIZE;
  private inFlight = new Set<string>();

  setTasks(tasks: Task[]): void {
    this.tasks = tasks;
    this.cursor = Math.min(this.cursor, Math.max(0, tasks.length - 1));
  }

  pageCount(): number {
    return Math.ceil(this.tasks.length / this.pageSize);
  }

  page(): number {
    return this.tasks.length === 0 ? 0 : Math.floor(this.cursor / this.pageSize);
  }

  visible(): Task[] {
    const start = this.page() * this.pageSize;
    return this.tasks.slice(start, start + this.pageSize);
  }

  current(): Task | null {
    return this.tasks[this.cursor] ?? null;
  }

  moveCursor(delta: number): void {
    if (this.tasks.length === 0) return;
    this.cursor = Math.min(Math.max(this.cursor + delta, 0), this.tasks.length - 1);
  }

  /** True when the submission may start; at most one in flight per task. */
  beginSubmission(id: string): boolean {
    if (this.inFlight.has(id)) return false;
    this.inFlight.add(id);
    return true;
  }

  endSubmission(id: string): void {
    this.inFlight.delete(id);
  }

  pendingCount(): number {
    return this.inFlight.size;
  }

  /** Optimistic label; returns the previous value for revert. */
  applyLabel(id: string, label: string): string | null {
    const task = this.tasks.find((t) => t.id === id);
    if (!task) return null;
    const before = task.label;
    task.label = label;
    task.status = label;
    return before;
  }

  revertLabel(id: string, before: string | null): void {
    const task = this.tasks.find((t) => t.id === id);
    if (!task) return;
    task.label = before;
    task.status = before ?? "pending";
  }

  removeTask(id: string): void {
    const index = this.tasks.findIndex((t) => t.id === id);
    if (index < 0) return;
    this.tasks.splice(index, 1);
    this.cursor = Math.min(this.cursor, Math.max(0, this.tasks.length - 1));
  }

  pendingTasks(): number {
    return this.tasks.filter((t) => t.label === null).length;
  }
}
