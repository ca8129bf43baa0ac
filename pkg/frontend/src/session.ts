import { ApiClient, ApiError } from "./api.js";
import type { ClusterCard, ClusterPage, Progress, SortMode, VoteDecision } from "./types.js";

export interface PendingVote {
  clusterId: number;
  decision: VoteDecision;
}

export interface SessionView {
  expert: string;
  page: ClusterPage | null;
  progress: Progress | null;
  offlineQueue: number;
  banner: string | null;
}

/**
 * Review-session controller: paging, vote submission with an offline retry
 * queue, and progress tracking.  All cluster data comes straight from the
 * server; on any conflict the server response wins and the card refreshes.
 */
export class ReviewSession {
  private page: ClusterPage | null = null;
  private progress: Progress | null = null;
  private queue: PendingVote[] = [];
  private banner: string | null = null;

  pageSize = 25;
  pageIndex = 0;
  sort: SortMode = "id";
  unvotedFirst = true;

  constructor(
    private readonly api: ApiClient,
    readonly expert: string,
  ) {}

  view(): SessionView {
    return {
      expert: this.expert,
      page: this.page,
      progress: this.progress,
      offlineQueue: this.queue.length,
      banner: this.banner,
    };
  }

  async refresh(): Promise<SessionView> {
    this.page = await this.api.listClusters({
      page: this.pageIndex,
      size: this.pageSize,
      expert: this.expert,
      sort: this.sort,
      unvotedFirst: this.unvotedFirst,
    });
    this.progress = await this.api.progress();
    return this.view();
  }

  async goToPage(index: number): Promise<SessionView> {
    this.pageIndex = Math.max(0, index);
    return this.refresh();
  }

  /** Submit a vote; on network failure it is queued locally and retried. */
  async castVote(clusterId: number, decision: VoteDecision): Promise<SessionView> {
    try {
      const result = await this.api.vote(this.expert, clusterId, decision);
      this.applyVote(clusterId, decision, result.tally);
      this.banner = null;
      await this.flushQueue();
    } catch (err) {
      if (err instanceof ApiError && err.status === 0) {
        this.queue.push({ clusterId, decision });
        this.banner = `offline: ${this.queue.length} vote(s) queued, retrying`;
      } else {
        this.banner = err instanceof Error ? err.message : String(err);
        throw err;
      }
    }
    return this.view();
  }

  /** Retry queued votes in order; stops at the first failure. */
  async flushQueue(): Promise<number> {
    while (this.queue.length > 0) {
      const pending = this.queue[0];
      try {
        const result = await this.api.vote(this.expert, pending.clusterId, pending.decision);
        this.applyVote(pending.clusterId, pending.decision, result.tally);
        this.queue.shift();
      } catch (err) {
        if (err instanceof ApiError && err.status === 0) {
          return this.queue.length;
        }
        // Server rejected the queued vote: drop it and surface the reason.
        this.queue.shift();
        this.banner = err instanceof Error ? err.message : String(err);
      }
    }
    if (this.queue.length === 0 && this.banner?.startsWith("offline")) {
      this.banner = null;
    }
    return this.queue.length;
  }

  /** Server tally wins; only my_vote for this expert is updated locally. */
  private applyVote(clusterId: number, decision: VoteDecision, tally: ClusterCard["tally"]): void {
    if (!this.page) return;
    const card = this.page.clusters.find((c) => c.cluster_id === clusterId);
    if (card) {
      card.my_vote = decision;
      card.tally = tally;
    }
  }

  votedOnPage(): number {
    return this.page?.clusters.filter((c) => c.my_vote !== null).length ?? 0;
  }

  progressPercent(): number {
    if (!this.progress || this.progress.total_clusters === 0) return 0;
    const mine = this.progress.per_expert[this.expert] ?? 0;
    return Math.round((100 * mine) / this.progress.total_clusters);
  }
}
