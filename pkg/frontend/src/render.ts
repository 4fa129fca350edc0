/** DOM rendering. Payload text always goes through textContent so the
 * rendered bytes equal the payload bytes; relation tasks additionally get a
 * highlighted token strip for the two anchor spans. */
import type { Task } from "./api.js";
import { relationSpans, SessionState } from "./state.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderTask(task: Task, selected: boolean): HTMLElement {
  const row = el("article", `task kind-${task.kind}${selected ? " selected" : ""}`);
  row.dataset.taskId = task.id;

  const head = el("header", "task-head");
  head.append(
    el("span", "task-kind", task.kind),
    el("span", "task-id", task.id),
    el("span", "task-score", task.classifier_score.toFixed(3)),
    el("span", `task-status status-${task.status}`, task.status),
  );
  row.append(head);

  const spans = relationSpans(task);
  if (spans) {
    const strip = el("div", "anchor-strip");
    spans.tokens.forEach((token, i) => {
      const inSpan1 = i >= spans.span1[0] && i < spans.span1[1];
      const inSpan2 = i >= spans.span2[0] && i < spans.span2[1];
      if (inSpan1 || inSpan2) {
        const mark = el("mark", inSpan1 ? "anchor-cpv" : "anchor-poi", token);
        strip.append(mark);
      } else {
        strip.append(el("span", "token", token));
      }
    });
    row.append(strip);
  }

  const payload = el("pre", "task-payload");
  payload.textContent = task.payload; // byte-for-byte
  row.append(payload);
  row.append(el("div", "task-context", task.context));
  return row;
}

export function renderQueue(root: HTMLElement, state: SessionState): void {
  root.replaceChildren();
  if (state.tasks.length === 0) {
    root.append(el("div", "empty-state", "no tasks"));
    return;
  }
  const list = el("div", "task-list");
  const pageStart = state.page() * state.pageSize;
  state.visible().forEach((task, i) => {
    list.append(renderTask(task, pageStart + i === state.cursor));
  });
  root.append(list);
  const pager = el("nav", "pager",
    `page ${state.page() + 1} / ${state.pageCount()} · ${state.pendingTasks()} pending`);
  root.append(pager);
}

export function renderStats(
  root: HTMLElement,
  stats: Record<string, number> | null,
  queuePending: number | null,
): void {
  root.replaceChildren();
  const table = el("table", "stats-table");
  const rows: Array<[string, string, string]> = [];
  if (stats === null) {
    rows.push(["kg", "—", ""]);
  } else {
    for (const key of Object.keys(stats).sort()) {
      // raw value kept in a data attribute; display adds thousands grouping only
      rows.push([key, Number(stats[key]).toLocaleString("en-US"), String(stats[key])]);
    }
  }
  rows.push(["queue pending", queuePending === null ? "—" : String(queuePending),
             queuePending === null ? "" : String(queuePending)]);
  for (const [name, display, raw] of rows) {
    const tr = el("tr");
    tr.append(el("td", "stat-name", name));
    const value = el("td", "stat-value", display);
    if (raw) value.dataset.raw = raw;
    tr.append(value);
    table.append(tr);
  }
  root.append(table);
}

export interface DialogChoice {
  overrideRequested: boolean;
}

export function renderConflictDialog(
  root: HTMLElement,
  task: Task,
  detail: string,
  onChoice: (choice: DialogChoice) => void,
): void {
  closeDialog(root);
  const dialog = el("div", "conflict-dialog");
  dialog.append(el("p", "conflict-detail", `task ${task.id}: ${detail}`));
  const override = el("button", "override-button", "Override");
  override.addEventListener("click", () => {
    closeDialog(root);
    onChoice({ overrideRequested: true });
  });
  const cancel = el("button", "cancel-button", "Cancel");
  cancel.addEventListener("click", () => {
    closeDialog(root);
    onChoice({ overrideRequested: false });
  });
  dialog.append(override, cancel);
  root.append(dialog);
}

export function closeDialog(root: HTMLElement): void {
  root.querySelectorAll(".conflict-dialog").forEach((n) => n.remove());
}

export function renderBanner(root: HTMLElement, message: string | null): void {
  root.querySelectorAll(".banner").forEach((n) => n.remove());
  if (message !== null) {
    root.prepend(el("div", "banner", message));
  }
}

export const SHORTCUT_HELP: Array<[string, string]> = [
  ["a", "accept the selected task"],
  ["r", "reject the selected task"],
  ["s", "skip (advance without labeling)"],
  ["j / ArrowDown", "next task"],
  ["k / ArrowUp", "previous task"],
  ["g", "refresh stats"],
  ["?", "toggle this help"],
];

export const ONTOLOGY_EXAMPLES: Array<[string, string]> = [
  ["User POI", "“clothing” - has_poi - “skin-friendly 亲肤”"],
  ["User problem", "“user” - has_problem - “pimple 长痘痘”"],
  ["IPV", "“cleansing foam” - ingredient - “bisabolol 红没药醇”"],
  ["Need", "“pimple” - need - “anti-acne 清痘抑痘”"],
  ["Cause", "“bisabolol” - cause - “anti-acne”"],
];

export function renderHelp(root: HTMLElement): void {
  const panel = el("aside", "help-panel");
  panel.append(el("h2", undefined, "shortcuts"));
  const keys = el("dl", "shortcut-map");
  for (const [key, what] of SHORTCUT_HELP) {
    keys.append(el("dt", undefined, key), el("dd", undefined, what));
  }
  panel.append(keys);
  panel.append(el("h2", undefined, "what counts as good knowledge"));
  const examples = el("dl", "ontology-examples");
  for (const [kind, sample] of ONTOLOGY_EXAMPLES) {
    examples.append(el("dt", undefined, kind), el("dd", undefined, sample));
  }
  panel.append(examples);
  root.append(panel);
}
