/** DOM rendering for the dashboard and the program editor. Thumbnails are
 * always the service's rendered PNGs (never client-rendered SVG), so what
 * the human judges is pixel-identical to what the judge model saw. */

import type { SessionViewState, StepView } from "./state.js";
import { highlightedPick, outcomeBadge } from "./state.js";
import type { CandidatePayload } from "./types.js";

export interface DashboardHandlers {
  onRunSteps(steps: number): void;
  onSelectCandidate(step: number, index: number): void;
  onAcceptFinal(): void;
  onInjectInstruction(text: string): void;
  onSubmitProgram(json: string): void;
}

export interface CandidateRenders {
  /** step index -> base64 PNG per candidate (from GET /steps/{n}). */
  [step: number]: string[];
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

function imagePanel(title: string, src: string): HTMLElement {
  const panel = el("div", "panel");
  panel.appendChild(el("h3", undefined, title));
  const img = el("img");
  img.src = src;
  img.alt = title;
  panel.appendChild(img);
  return panel;
}

function candidateCard(
  step: StepView,
  candidate: CandidatePayload,
  index: number,
  render: string | undefined,
  handlers: DashboardHandlers,
): HTMLElement {
  const pick = highlightedPick(step);
  const card = el(
    "div",
    "candidate" + (pick === index ? " candidate-picked" : ""),
  );
  const label = el("div", "candidate-label", `${index}. ${candidate.strategy}`);
  if (step.overridePick === index) {
    label.textContent += " (your pick)";
  } else if (step.judgePick === index) {
    label.textContent += " (judge's pick)";
  }
  card.appendChild(label);
  if (render) {
    const img = el("img");
    img.src = `data:image/png;base64,${render}`;
    img.alt = `candidate ${index} (${candidate.strategy})`;
    card.appendChild(img);
  } else {
    card.appendChild(el("div", "thumb-pending", "render pending"));
  }
  const button = el("button", undefined, "use this candidate");
  button.addEventListener("click", () => handlers.onSelectCandidate(step.index, index));
  card.appendChild(button);
  return card;
}

function stepSection(
  step: StepView,
  renders: string[] | undefined,
  handlers: DashboardHandlers,
): HTMLElement {
  const section = el("section", "step");
  const heading = el("div", "step-heading");
  heading.appendChild(el("span", "step-title", `step ${step.index}`));
  const badgeClass =
    step.outcome === "reverted" ? "badge badge-reverted" : "badge badge-ok";
  heading.appendChild(el("span", badgeClass, outcomeBadge(step)));
  section.appendChild(heading);

  const critique = el("div", "critique");
  critique.appendChild(el("p", "scene", step.critique.scene_description));
  const list = el("ol");
  step.critique.discrepancies.forEach((discrepancy, i) => {
    const item = el("li");
    item.appendChild(el("div", "discrepancy", discrepancy));
    const suggestion = step.critique.suggestions[i];
    if (suggestion) {
      item.appendChild(el("div", "suggestion", suggestion));
    }
    list.appendChild(item);
  });
  critique.appendChild(list);
  section.appendChild(critique);

  const gallery = el("div", "gallery");
  step.candidates.forEach((candidate, i) => {
    gallery.appendChild(
      candidateCard(step, candidate, i + 1, renders?.[i], handlers),
    );
  });
  section.appendChild(gallery);
  if (step.verdict) {
    section.appendChild(el("p", "rationale", `judge: ${step.verdict.rationale}`));
  }
  return section;
}

export function renderDashboard(
  root: HTMLElement,
  state: SessionViewState,
  sketchUrl: string,
  renderUrl: string,
  renders: CandidateRenders,
  handlers: DashboardHandlers,
  connectionLost: boolean,
): void {
  root.replaceChildren();

  if (connectionLost) {
    root.appendChild(
      el("div", "banner", "connection lost - reconnecting to the event stream..."),
    );
  }

  const header = el("header");
  header.appendChild(el("h2", undefined, `session ${state.sessionId.slice(0, 8)}`));
  header.appendChild(el("span", `phase phase-${state.phase}`, state.phase));
  header.appendChild(el("span", "steps", `${state.stepCount} step(s)`));
  root.appendChild(header);

  const controls = el("div", "controls");
  const runOne = el("button", undefined, "run 1 step");
  runOne.addEventListener("click", () => handlers.onRunSteps(1));
  const runAll = el("button", undefined, "run to completion");
  runAll.addEventListener("click", () => handlers.onRunSteps(99));
  const accept = el("button", undefined, "accept as final");
  accept.addEventListener("click", () => handlers.onAcceptFinal());
  controls.append(runOne, runAll, accept);
  const injectInput = el("input") as HTMLInputElement;
  injectInput.placeholder = "extra instruction for the critic";
  const injectButton = el("button", undefined, "inject");
  injectButton.addEventListener("click", () => {
    if (injectInput.value.trim()) {
      handlers.onInjectInstruction(injectInput.value.trim());
      injectInput.value = "";
    }
  });
  controls.append(injectInput, injectButton);
  root.appendChild(controls);

  const compare = el("div", "compare");
  compare.appendChild(imagePanel("target sketch", sketchUrl));
  // Cache-bust on revision so the current render follows the loop.
  compare.appendChild(
    imagePanel("current diagram", `${renderUrl}?rev=${state.revision}`),
  );
  root.appendChild(compare);

  if (state.sceneDescription) {
    root.appendChild(el("p", "scene-description", state.sceneDescription));
  }
  if (state.instruction) {
    root.appendChild(el("p", "instruction", `instruction: ${state.instruction}`));
  }
  for (const injected of state.injectedInstructions) {
    root.appendChild(el("p", "instruction injected", `injected: ${injected}`));
  }

  const steps = el("div", "steps");
  for (const step of [...state.steps].reverse()) {
    steps.appendChild(stepSection(step, renders[step.index], handlers));
  }
  root.appendChild(steps);
}

export function renderEditor(
  root: HTMLElement,
  programJson: string,
  validationError: string | null,
  handlers: DashboardHandlers,
): void {
  root.replaceChildren();
  root.appendChild(el("h3", undefined, "program editor"));
  const textarea = el("textarea") as HTMLTextAreaElement;
  textarea.value = programJson;
  textarea.rows = 14;
  root.appendChild(textarea);
  if (validationError) {
    root.appendChild(el("div", "editor-error", validationError));
  }
  const submit = el("button", undefined, "apply program");
  submit.addEventListener("click", () => handlers.onSubmitProgram(textarea.value));
  root.appendChild(submit);
}
