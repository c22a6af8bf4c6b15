// Shapes of the experiment service's JSON API.

export interface SamplerOptions {
  kind?: string;
  selective?: boolean;
  batch?: boolean;
  seed?: number;
}

export interface CreateSessionRequest {
  labels: string[];
  urls?: string[];
  sampler?: SamplerOptions;
  beta?: number;
}

export interface SessionInfo {
  session_id: string;
  n: number;
  labels: string[];
  sampler: Required<SamplerOptions>;
  beta: number;
}

export interface Condition {
  index: number;
  label: string;
  url?: string;
}

export interface ServedPair {
  status: "ok";
  pair_id: string;
  first: Condition;
  second: Condition;
}

export interface AwaitingOutcomes {
  status: "awaiting_outcomes";
  pending: number;
}

export type NextResponse = ServedPair | AwaitingOutcomes;

export interface OutcomeResponse {
  status: "ok";
  trials: number;
  standard_trials: number;
  pending: number;
}

export interface ScaleEntry {
  index: number;
  label: string;
  mean: number;
  variance: number;
  rank: number;
}

export interface ScaleResponse {
  session_id: string;
  trials: number;
  standard_trials: number;
  scores: ScaleEntry[];
}

export interface ApiErrorBody {
  code: string;
  message: string;
}
