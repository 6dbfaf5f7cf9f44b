// Payload shapes of the review API.

export interface PredictionPayload {
  vector: string;
  per_metric_confidence: Record<string, number>;
  min_confidence: number;
}

export interface RecommendationPayload {
  cve_id: string;
  action: string;
  source: string;
  grounding_refs: [string, string][];
  requires_approval: boolean;
  approval_state: string;
}

export interface ReviewItem {
  item_id: string;
  kind: 'prediction_override' | 'recommendation_approval';
  key: string;
  cve_id: string | null;
  payload: {
    prediction?: PredictionPayload;
    description?: string;
    recommendation?: RecommendationPayload;
  };
  decision: DecisionRecord | null;
  run_id: string;
  manifest_digest: string;
}

export interface DecisionRecord {
  kind: string;
  vector: string | null;
  analyst: string;
  decided_at?: number;
}

export interface StageCountsPayload {
  raw_detection: number;
  unique_cves: number;
  nvd_hits: number;
  euvd_hits: number;
  needs_prediction: number;
  predicted: number;
  prediction_failed: number;
  integrated: number;
  with_cvss: number;
  prioritized: number;
  below_threshold: number;
  rec_cisa: number;
  rec_llm: number;
  rec_total: number;
}

export interface RunReport {
  run_id: string;
  status: 'complete' | 'partial';
  counts: StageCountsPayload;
  manifest: Record<string, unknown>;
  manifest_digest: string;
  workflow: Record<string, number | string>;
  reductions: Record<string, number>;
  pending_reviews: number;
  funnel_problems: string[];
  out_dir: string;
}

export interface RunSummary {
  run_id: string;
  status: string;
  pending_reviews: number;
  manifest_digest: string;
}

export interface ScorePreview {
  vector: string;
  base_score: number;
  severity: string;
}

// Legal values per CVSS v3.1 base metric; the override form builds
// vectors from these dropdowns only, so invalid vectors cannot be
// expressed.
export const METRICS: ReadonlyArray<readonly [string, ReadonlyArray<string>]> = [
  ['AV', ['N', 'A', 'L', 'P']],
  ['AC', ['L', 'H']],
  ['PR', ['N', 'L', 'H']],
  ['UI', ['N', 'R']],
  ['S', ['U', 'C']],
  ['C', ['H', 'L', 'N']],
  ['I', ['H', 'L', 'N']],
  ['A', ['H', 'L', 'N']],
];

export const FUNNEL_ROWS: ReadonlyArray<readonly [string, keyof StageCountsPayload]> = [
  ['Raw detection', 'raw_detection'],
  ['Unique CVEs', 'unique_cves'],
  ['NVD', 'nvd_hits'],
  ['EUVD', 'euvd_hits'],
  ['Needs prediction', 'needs_prediction'],
  ['Predicted', 'predicted'],
  ['Failed', 'prediction_failed'],
  ['Total integrated', 'integrated'],
  ['With CVSS', 'with_cvss'],
  ['Prioritized', 'prioritized'],
  ['Below threshold', 'below_threshold'],
  ['From CISA', 'rec_cisa'],
  ['From LLM', 'rec_llm'],
  ['Total recommendations', 'rec_total'],
];

export function parseVectorString(vector: string): Record<string, string> {
  const values: Record<string, string> = {};
  for (const part of vector.replace(/^CVSS:3\.1\//, '').split('/')) {
    const [metric, value] = part.split(':');
    if (metric && value) values[metric] = value;
  }
  return values;
}

export function buildVectorString(values: Record<string, string>): string {
  const body = METRICS.map(([metric]) => `${metric}:${values[metric]}`).join('/');
  return `CVSS:3.1/${body}`;
}
