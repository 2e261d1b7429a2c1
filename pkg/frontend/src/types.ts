// Shapes of the review service's JSON payloads.

export type Verdict = "accept" | "reject" | "adjust";
export type FrameState = "unreviewed" | "partial" | "reviewed";

export interface FrameSummary {
  image_id: string;
  annotations: number;
  state: FrameState;
}

export interface FramesPage {
  total: number;
  page: number;
  frames: FrameSummary[];
}

export interface AuditInfo {
  decision: string;
  height_source?: string | null;
  local_depth?: number | null;
  true_distance?: number | null;
}

export interface DecisionRecord {
  verdict: Verdict;
  adjusted_center?: [number, number];
  reviewer?: string;
}

export interface AnnotationView {
  index: number;
  box: [number, number, number, number]; // normalized cx, cy, w, h
  center: [number, number];              // normalized cx, cy
  audit: AuditInfo | null;
  decision: DecisionRecord | null;
}

export interface FrameDetail {
  image_id: string;
  width: number;
  height: number;
  state: FrameState;
  annotations: AnnotationView[];
}

export interface DecisionBody {
  image_id: string;
  annotation_index: number;
  verdict: Verdict;
  adjusted_center?: [number, number];
  reviewer?: string;
}

export interface DecisionAck {
  ok: boolean;
  decision: DecisionRecord & { image_id: string; annotation_index: number };
  frame_state: FrameState;
}
