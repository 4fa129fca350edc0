/** The review console: keyboard-first labeling over the service API. */
import { ApiClient, Task } from "./api.js";
import {
  closeDialog,
  renderBanner,
  renderConflictDialog,
  renderHelp,
  renderQueue,
  renderStats,
} from "./render.js";
import { SessionState } from "./state.js";

export class Console {
  readonly state = new SessionState();
  private queueRoot: HTMLElement;
  private statsRoot: HTMLElement;
  private helpRoot: HTMLElement;
  private inFlight: Promise<void>[] = [];
  private lastStats: Record<string, number> | null = null;
  private readonly keyHandler: (event: KeyboardEvent) => void;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
  ) {
    this.root.classList.add("kgforge-console");
    this.queueRoot = document.createElement("main");
    this.queueRoot.className = "queue-root";
    this.statsRoot = document.createElement("section");
    this.statsRoot.className = "stats-root";
    this.helpRoot = document.createElement("section");
    this.helpRoot.className = "help-root";
    this.helpRoot.hidden = true;
    this.root.append(this.statsRoot, this.queueRoot, this.helpRoot);
    renderHelp(this.helpRoot);
    this.keyHandler = this.makeKeyHandler();
    document.addEventListener("keydown", this.keyHandler);
  }

  /** Resolves when every in-flight submission has settled. */
  async whenIdle(): Promise<void> {
    while (this.inFlight.length > 0) {
      const batch = this.inFlight;
      this.inFlight = [];
      await Promise.all(batch);
    }
  }

  async load(): Promise<void> {
    try {
      const tasks = await this.api.listTasks({
        kind: this.state.filter.kind,
        status: this.state.filter.status,
      });
      this.state.setTasks(tasks);
      renderBanner(this.root, null);
    } catch (e) {
      renderBanner(this.root, `load failed (${String(e)}) — press g to retry`);
    }
    this.renderQueue();
  }

  async refreshStats(): Promise<void> {
    try {
      this.lastStats = await this.api.stats();
    } catch {
      this.lastStats = null; // panel shows an em dash
    }
    renderStats(this.statsRoot, this.lastStats, this.state.pendingTasks());
  }

  renderQueue(): void {
    renderQueue(this.queueRoot, this.state);
    renderStats(this.statsRoot, this.lastStats, this.state.pendingTasks());
  }

  toggleHelp(): void {
    this.helpRoot.hidden = !this.helpRoot.hidden;
  }

  skip(): void {
    this.state.moveCursor(1);
    this.renderQueue();
  }

  label(decision: "accept" | "reject"): void {
    const task = this.state.current();
    if (task === null) return;
    if (task.label !== null) {
      // already labeled: acting again requires the override affordance
      renderConflictDialog(this.root, task, `already labeled ${task.label}`, (choice) => {
        if (choice.overrideRequested) this.submit(task, decision, true);
      });
      return;
    }
    this.submit(task, decision, false);
  }

  private submit(task: Task, decision: "accept" | "reject", override: boolean): void {
    if (!this.state.beginSubmission(task.id)) return; // one in-flight per task
    const before = this.state.applyLabel(task.id, decision); // optimistic
    this.state.moveCursor(1);
    this.renderQueue();
    const settle = (async () => {
      const outcome = await this.api.submitLabel(
        task.id, decision, this.state.annotator, override,
      );
      this.state.endSubmission(task.id);
      if (outcome.status === 200) {
        return;
      }
      this.state.revertLabel(task.id, before);
      if (outcome.status === 409) {
        renderConflictDialog(this.root, task, outcome.detail, (choice) => {
          if (choice.overrideRequested) this.submit(task, decision, true);
        });
      } else if (outcome.status === 404) {
        this.state.removeTask(task.id);
        renderBanner(this.root, `task ${task.id} no longer exists`);
      } else {
        renderBanner(this.root, `label failed: ${outcome.detail}`);
      }
      this.renderQueue();
    })();
    this.inFlight.push(settle);
  }

  private makeKeyHandler(): (event: KeyboardEvent) => void {
    return (event: KeyboardEvent) => {
      if (event.defaultPrevented) return;
      switch (event.key) {
        case "a":
          this.label("accept");
          break;
        case "r":
          this.label("reject");
          break;
        case "s":
          this.skip();
          break;
        case "j":
        case "ArrowDown":
          this.state.moveCursor(1);
          this.renderQueue();
          break;
        case "k":
        case "ArrowUp":
          this.state.moveCursor(-1);
          this.renderQueue();
          break;
        case "g":
          void this.refreshStats();
          void this.load();
          break;
        case "?":
          this.toggleHelp();
          break;
        default:
          return;
      }
      event.preventDefault();
    };
  }

  dispose(): void {
    document.removeEventListener("keydown", this.keyHandler);
    closeDialog(this.root);
  }
}

export async function mountConsole(root: HTMLElement, api?: ApiClient): Promise<Console> {
  const console_ = new Console(root, api ?? new ApiClient());
  await console_.load();
  await console_.refreshStats();
  return console_;
}
