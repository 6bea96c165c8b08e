/** Wire types mirroring the session service payloads. */

export interface RankedActivity {
  activity: string;
  probability: number;
}

export interface StepResultWire {
  v: number;
  index: number;
  ranking: RankedActivity[];
  deviation: boolean;
}

export interface InterpretationWire {
  event_index: number;
  activity: string;
  step: string;
  instance: number;
}

export interface QueryRequest {
  event_index?: number;
  activity: string;
  step?: string;
  instance?: number;
  semantics?: "credulous" | "skeptical";
}

export interface BooleanAnswerWire {
  v: number;
  answer: boolean;
}

export interface MatchesAnswerWire {
  v: number;
  matches: InterpretationWire[];
}

export type QueryAnswerWire = BooleanAnswerWire | MatchesAnswerWire;

export interface ReasonWire {
  kind: string;
  indices: number[];
  constraint: number | null;
  argument: InterpretationWire | null;
}

export interface ExplainAnswerWire {
  v: number;
  reasons: ReasonWire[];
}

export interface SummaryWire {
  v: number;
  accepted: InterpretationWire[][];
  inconsistent: number[];
}

export interface StateWire {
  v: number;
  prefix: { index: number; type: string; attrs: Record<string, unknown> }[];
  results: StepResultWire[];
  finalized: boolean;
}

export interface StreamMessage {
  event: string;
  data: unknown;
}
