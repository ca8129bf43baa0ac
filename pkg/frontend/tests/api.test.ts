import { describe, expect, it } from "vitest";
import { ApiClient, ApiError } from "../src/api.js";
import type { ClusterPage } from "../src/types.js";

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

function stubFetch(handler: (url: string, init?: RequestInit) => Response | Promise<Response>) {
  const calls: { url: string; init?: RequestInit }[] = [];
  const impl = (async (input: RequestInfo | URL, init?: RequestInit) => {
    const url = String(input);
    calls.push({ url, init });
    return handler(url, init);
  }) as typeof fetch;
  return { impl, calls };
}

const PAGE: ClusterPage = {
  total: 2,
  page: 0,
  size: 50,
  clusters: [
    {
      cluster_id: 0,
      size: 4,
      avg_propensity_rate: 0.4,
      avg_relative_position: 0.2,
      avg_sentence_length: 7.5,
      pct_past_tense: 0.1,
      pct_with_sentiment: 0.0,
      sample_phrases: ["open new store"],
      my_vote: null,
      tally: { accepts: 0, rejects: 0 },
    },
  ],
};

describe("ApiClient", () => {
  it("builds cluster listing queries from options", async () => {
    const { impl, calls } = stubFetch(() => jsonResponse(PAGE));
    const api = new ApiClient("http://x", impl);
    const page = await api.listClusters({
      page: 2,
      size: 10,
      expert: "alice",
      sort: "rate",
      unvotedFirst: true,
    });
    expect(page.total).toBe(2);
    const url = new URL(calls[0].url);
    expect(url.pathname).toBe("/api/clusters");
    expect(Object.fromEntries(url.searchParams)).toEqual({
      page: "2",
      size: "10",
      expert: "alice",
      sort: "rate",
      unvoted: "1",
    });
  });

  it("omits default sort from the query", async () => {
    const { impl, calls } = stubFetch(() => jsonResponse(PAGE));
    await new ApiClient("http://x", impl).listClusters({ page: 0, size: 5 });
    expect(calls[0].url).toBe("http://x/api/clusters?page=0&size=5");
  });

  it("posts votes as JSON", async () => {
    const { impl, calls } = stubFetch(() => jsonResponse({ ok: true, tally: { accepts: 1, rejects: 0 } }));
    const api = new ApiClient("http://x", impl);
    const out = await api.vote("bob", 7, "accept");
    expect(out.tally.accepts).toBe(1);
    expect(calls[0].init?.method).toBe("POST");
    expect(JSON.parse(String(calls[0].init?.body))).toEqual({
      expert_id: "bob",
      cluster_id: 7,
      decision: "accept",
    });
  });

  it("surfaces server error bodies", async () => {
    const { impl } = stubFetch(() => jsonResponse({ error: "unknown expert_id: 'mallory'" }, 400));
    const api = new ApiClient("http://x", impl);
    await expect(api.vote("mallory", 1, "accept")).rejects.toThrowError(/mallory/);
  });

  it("wraps network failures with status 0", async () => {
    const impl = (async () => {
      throw new TypeError("fetch failed");
    }) as unknown as typeof fetch;
    const api = new ApiClient("http://x", impl);
    const err = await api.progress().catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).status).toBe(0);
  });

  it("parses finalize payloads including warnings", async () => {
    const { impl } = stubFetch(() =>
      jsonResponse({
        selected: [1, 3],
        n_selected: 2,
        registry: "/store/registry.tsv",
        n_variables: 2,
        warning: { message: "incomplete", uncovered_clusters: [2] },
      }),
    );
    const out = await new ApiClient("http://x", impl).finalize();
    expect(out.selected).toEqual([1, 3]);
    expect(out.warning?.uncovered_clusters).toEqual([2]);
  });
});
