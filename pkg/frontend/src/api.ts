import type {
  ClusterPage,
  FinalizeResult,
  ListOptions,
  Progress,
  VoteDecision,
  VoteResponse,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    message: string,
    public readonly status: number,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

type FetchLike = typeof fetch;

/** Thin typed client over the four curation endpoints. */
export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let resp: Response;
    try {
      resp = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    } catch (err) {
      throw new ApiError(`network failure: ${String(err)}`, 0);
    }
    let body: unknown = null;
    try {
      body = await resp.json();
    } catch {
      // non-JSON body; fall through to status handling
    }
    if (!resp.ok) {
      const detail =
        body && typeof body === "object" && "error" in body
          ? String((body as { error: unknown }).error)
          : resp.statusText;
      throw new ApiError(detail, resp.status);
    }
    return body as T;
  }

  listClusters(opts: ListOptions): Promise<ClusterPage> {
    const params = new URLSearchParams({
      page: String(opts.page),
      size: String(opts.size),
    });
    if (opts.expert) params.set("expert", opts.expert);
    if (opts.sort && opts.sort !== "id") params.set("sort", opts.sort);
    if (opts.unvotedFirst) params.set("unvoted", "1");
    return this.request<ClusterPage>(`/api/clusters?${params.toString()}`);
  }

  vote(expertId: string, clusterId: number, decision: VoteDecision): Promise<VoteResponse> {
    return this.request<VoteResponse>("/api/vote", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ expert_id: expertId, cluster_id: clusterId, decision }),
    });
  }

  progress(): Promise<Progress> {
    return this.request<Progress>("/api/progress");
  }

  finalize(): Promise<FinalizeResult> {
    return this.request<FinalizeResult>("/api/finalize", { method: "POST" });
  }
}
