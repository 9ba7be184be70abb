/** Payload shapes mirrored from the service API. The console never derives
 * numbers from these; it displays them as delivered. */

export type Verdict = "valid" | "invalid";

export interface RunSummary {
  run_id: string;
  seed: number;
  created_at: string;
  stages: Record<string, string>;
}

export interface EvidenceRecord {
  pattern_id: string;
  rank: number;
  quartile: string;
  stance: number;
}

export interface PatternItem {
  id: string;
  text: string;
  stage: string;
  prompt_level: string;
  model_id: string;
  frequency_class: string | null;
  expert_verdict: Verdict | null;
  literature_verdict: Verdict | null;
}

export interface PatternDetail extends PatternItem {
  run_id: string;
  evidence: EvidenceRecord[];
  components: number[];
  total: number | null;
}

export interface VerdictResult {
  pattern_id: string;
  run_id: string;
  rater: string;
  verdict: Verdict;
  appended: boolean;
}

export interface GridPayload {
  rows: string[];
  columns: string[];
  cells: Record<string, Record<string, number | null>>;
}

export interface KappaResponse {
  run_id: string;
  overall: Record<string, unknown> | null;
  overall_items: number;
  composite: Record<string, unknown> | null;
  composite_items: number;
  direct: Record<string, unknown> | null;
  direct_items: number;
  cells: Array<{
    stage: string;
    prompt_level: string;
    model_id: string;
    kappa: number | null;
    consistent: boolean | null;
    items: number;
  }>;
  grid: GridPayload;
}

export interface AnomaliesResponse {
  threshold: number;
  participants: string[];
  question_ids: string[];
  counts: Record<string, number>; // "participant|question|category"
  totals: Record<string, number>;
  double_zero: string[];
  band_error_rates: Record<string, number | null>;
  flagged: number;
  windows: number;
}
