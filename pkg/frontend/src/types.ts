/** DTOs mirroring the service API. The UI renders only what the service
 * sends; no grammar or geometry logic is duplicated client-side. */

export interface ShapeRecord {
  shape_type: "circle" | "rectangle" | "ellipse" | "triangle";
  x: number;
  y: number;
  scale_x: number;
  scale_y: number;
  fill_color: string;
  stroke_color: string;
  stroke_width: number;
  rotation: number;
}

export interface DiagramPayload {
  shapes: ShapeRecord[];
}

export interface CritiquePayload {
  scene_description: string;
  discrepancies: string[];
  suggestions: string[];
  raw_response?: string;
}

export interface CandidatePayload {
  strategy: string;
  diagram: DiagramPayload;
  repair_count: number;
  render_png_base64?: string;
}

export interface VerdictPayload {
  selected: number;
  rationale: string;
}

export type Phase =
  | "initializing"
  | "awaiting_step"
  | "running_step"
  | "awaiting_human"
  | "converged"
  | "exhausted"
  | "failed";

export type Outcome = "accepted" | "reverted" | "overridden";

/** One line of the session trace, as streamed over /events. */
export interface TraceRecord {
  seq: number;
  type:
    | "session_meta"
    | "init_program"
    | "critique"
    | "candidate"
    | "verdict"
    | "revert"
    | "override"
    | "final";
  step: number | null;
  ts: string;
  payload: Record<string, unknown>;
}

export interface SessionSummary {
  id: string;
  phase: Phase;
  step_count: number;
  instruction: string;
  diagram: DiagramPayload;
  render_png_base64: string;
  config: Record<string, unknown>;
}

export interface SessionListEntry {
  id: string;
  created_at: string;
  phase: string;
  step_count: number;
  instruction: string;
}

export interface StepViewDto {
  index: number;
  critique: CritiquePayload;
  candidates: CandidatePayload[];
  verdict: VerdictPayload;
  outcome: Outcome;
  diagram_after: DiagramPayload;
  current_render_png_base64?: string;
}

export type OverrideAction =
  | { action: "select_candidate"; step: number; index: number }
  | { action: "edit_program"; diagram: DiagramPayload }
  | { action: "inject_instruction"; text: string }
  | { action: "accept_as_final" };

export interface ApiErrorBody {
  code: string;
  message: string;
}
