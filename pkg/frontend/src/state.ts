/** Session view-model: folds trace records (from /trace or the live event
 * stream) into the state the dashboard renders. Pure functions, no DOM —
 * reloading a page and replaying the trace reconstructs the same view. */

import type {
  CandidatePayload,
  CritiquePayload,
  DiagramPayload,
  Outcome,
  Phase,
  TraceRecord,
  VerdictPayload,
} from "./types.js";

export interface StepView {
  index: number;
  critique: CritiquePayload;
  candidates: CandidatePayload[];
  verdict: VerdictPayload | null;
  outcome: Outcome | null;
  /** Judge numbering: 0 = kept current, 1..N = candidate; null until judged. */
  judgePick: number | null;
  /** Candidate forced by a human override, if any (1..N). */
  overridePick: number | null;
}

export interface SessionViewState {
  sessionId: string;
  phase: Phase;
  instruction: string;
  stepCount: number;
  currentDiagram: DiagramPayload;
  initialDiagram: DiagramPayload | null;
  sceneDescription: string;
  steps: StepView[];
  /** Instructions injected by overrides, newest last. */
  injectedInstructions: string[];
  lastSeq: number;
  /** Bumped on every applied record so the DOM layer knows to re-render. */
  revision: number;
}

export function emptyState(sessionId: string): SessionViewState {
  return {
    sessionId,
    phase: "initializing",
    instruction: "",
    stepCount: 0,
    currentDiagram: { shapes: [] },
    initialDiagram: null,
    sceneDescription: "",
    steps: [],
    injectedInstructions: [],
    lastSeq: -1,
    revision: 0,
  };
}

function stepByIndex(state: SessionViewState, index: number): StepView | undefined {
  return state.steps.find((s) => s.index === index);
}

/** Fold one trace record into the view state (mutating; returns true when
 * the record was new and applied, false for duplicates/stale seq). */
export function applyRecord(state: SessionViewState, record: TraceRecord): boolean {
  if (record.seq >= 0 && record.seq <= state.lastSeq) {
    return false;
  }
  state.lastSeq = Math.max(state.lastSeq, record.seq);
  state.revision += 1;
  const payload = record.payload as Record<string, any>;
  switch (record.type) {
    case "session_meta": {
      state.phase = "awaiting_step";
      state.instruction = payload.config?.instruction ?? "";
      break;
    }
    case "critique": {
      const report = payload.report as CritiquePayload;
      if (record.step === 0 || record.step === null) {
        state.sceneDescription = report.scene_description;
        break;
      }
      state.steps.push({
        index: record.step,
        critique: report,
        candidates: [],
        verdict: null,
        outcome: null,
        judgePick: null,
        overridePick: null,
      });
      break;
    }
    case "init_program": {
      state.initialDiagram = payload.diagram as DiagramPayload;
      state.currentDiagram = payload.diagram as DiagramPayload;
      break;
    }
    case "candidate": {
      const step = record.step === null ? undefined : stepByIndex(state, record.step);
      if (step) {
        step.candidates.push({
          strategy: payload.strategy as string,
          diagram: payload.diagram as DiagramPayload,
          repair_count: (payload.repair_count as number) ?? 0,
        });
      }
      break;
    }
    case "verdict": {
      const step = record.step === null ? undefined : stepByIndex(state, record.step);
      if (step) {
        step.verdict = {
          selected: payload.selected as number,
          rationale: (payload.rationale as string) ?? "",
        };
        step.judgePick = payload.selected as number;
        if (step.judgePick >= 1) {
          step.outcome = "accepted";
          const chosen = step.candidates[step.judgePick - 1];
          if (chosen) {
            state.currentDiagram = chosen.diagram;
          }
        } else {
          step.outcome = "reverted";
        }
        state.stepCount = Math.max(state.stepCount, step.index);
      }
      break;
    }
    case "revert":
      break; // outcome already derived from the verdict
    case "override": {
      const action = payload.action as Record<string, any>;
      if (action.action === "select_candidate") {
        const step = stepByIndex(state, action.step as number);
        const index = action.index as number;
        if (step && index >= 1 && index <= step.candidates.length) {
          step.outcome = "overridden";
          step.overridePick = index;
          const chosen = step.candidates[index - 1];
          if (chosen) {
            state.currentDiagram = chosen.diagram;
          }
        }
      } else if (action.action === "edit_program") {
        state.currentDiagram = action.diagram as DiagramPayload;
      } else if (action.action === "inject_instruction") {
        state.injectedInstructions.push(action.text as string);
      } else if (action.action === "accept_as_final") {
        state.phase = "converged";
      }
      break;
    }
    case "final": {
      state.phase = payload.phase as Phase;
      state.currentDiagram = payload.diagram as DiagramPayload;
      break;
    }
  }
  return true;
}

export function applyRecords(state: SessionViewState, records: TraceRecord[]): void {
  for (const record of records) {
    applyRecord(state, record);
  }
}

export function latestStep(state: SessionViewState): StepView | undefined {
  return state.steps[state.steps.length - 1];
}

/** The candidate index the gallery should highlight for a step: a human
 * override wins over the judge. 0 means "current kept". */
export function highlightedPick(step: StepView): number | null {
  return step.overridePick ?? step.judgePick;
}

export function isTerminal(phase: Phase): boolean {
  return phase === "converged" || phase === "exhausted" || phase === "failed";
}

/** Outcome badge text for a step row. */
export function outcomeBadge(step: StepView): string {
  if (step.outcome === null) {
    return "judging";
  }
  if (step.outcome === "reverted") {
    return "reverted";
  }
  if (step.outcome === "overridden") {
    return `overridden -> candidate ${step.overridePick}`;
  }
  return `accepted candidate ${step.judgePick}`;
}
