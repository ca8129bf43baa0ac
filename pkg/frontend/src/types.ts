// Wire types for the curation service. The UI renders these verbatim and
// never recomputes cluster statistics client-side.

export type VoteDecision = "accept" | "reject";

export interface Tally {
  accepts: number;
  rejects: number;
}

export interface ClusterCard {
  cluster_id: number;
  size: number;
  avg_propensity_rate: number;
  avg_relative_position: number;
  avg_sentence_length: number;
  pct_past_tense: number;
  pct_with_sentiment: number;
  sample_phrases: string[];
  my_vote: VoteDecision | null;
  tally: Tally;
}

export interface ClusterPage {
  total: number;
  page: number;
  size: number;
  clusters: ClusterCard[];
}

export interface Progress {
  total_clusters: number;
  roster: string[];
  per_expert: Record<string, number>;
  voted_pairs: number;
  total_pairs: number;
  complete: boolean;
}

export interface VoteResponse {
  ok: boolean;
  tally: Tally;
}

export interface FinalizeResult {
  selected: number[];
  n_selected: number;
  registry: string | null;
  n_variables: number;
  warning?: { message: string; uncovered_clusters: number[] };
}

export type SortMode = "id" | "size" | "rate";

export interface ListOptions {
  page: number;
  size: number;
  expert?: string;
  sort?: SortMode;
  unvotedFirst?: boolean;
}
