import { describe, expect, it } from "vitest";
import { ApiClient } from "../src/api.js";
import { ReviewSession } from "../src/session.js";
import type { ClusterCard, VoteDecision } from "../src/types.js";

/** In-memory curation service double with controllable connectivity. */
class FakeService {
  votes = new Map<string, VoteDecision>(); // "expert:cluster" -> decision
  online = true;
  voteCalls = 0;

  constructor(
    readonly nClusters = 6,
    readonly roster = ["alice", "bob", "carol"],
  ) {}

  private card(cid: number, expert?: string): ClusterCard {
    let accepts = 0;
    let rejects = 0;
    for (const [key, d] of this.votes) {
      if (key.endsWith(`:${cid}`)) {
        if (d === "accept") accepts += 1;
        else rejects += 1;
      }
    }
    return {
      cluster_id: cid,
      size: cid + 2,
      avg_propensity_rate: 0.1 * cid,
      avg_relative_position: 0.5,
      avg_sentence_length: 8,
      pct_past_tense: 0,
      pct_with_sentiment: 0,
      sample_phrases: [`phrase ${cid}`],
      my_vote: expert ? (this.votes.get(`${expert}:${cid}`) ?? null) : null,
      tally: { accepts, rejects },
    };
  }

  fetchImpl = (async (input: RequestInfo | URL, init?: RequestInit): Promise<Response> => {
    if (!this.online) throw new TypeError("fetch failed");
    const url = new URL(String(input));
    if (url.pathname === "/api/clusters") {
      const page = Number(url.searchParams.get("page") ?? 0);
      const size = Number(url.searchParams.get("size") ?? 50);
      const expert = url.searchParams.get("expert") ?? undefined;
      let ids = Array.from({ length: this.nClusters }, (_, i) => i);
      if (url.searchParams.get("sort") === "size") ids.reverse();
      if (url.searchParams.get("unvoted") === "1" && expert) {
        ids = ids.sort(
          (a, b) =>
            Number(this.votes.has(`${expert}:${a}`)) - Number(this.votes.has(`${expert}:${b}`)),
        );
      }
      const chunk = ids.slice(page * size, (page + 1) * size);
      return Response.json({
        total: this.nClusters,
        page,
        size,
        clusters: chunk.map((cid) => this.card(cid, expert)),
      });
    }
    if (url.pathname === "/api/vote") {
      this.voteCalls += 1;
      const body = JSON.parse(String(init?.body)) as {
        expert_id: string;
        cluster_id: number;
        decision: VoteDecision;
      };
      if (!this.roster.includes(body.expert_id)) {
        return Response.json({ error: `unknown expert_id: ${body.expert_id}` }, { status: 400 });
      }
      this.votes.set(`${body.expert_id}:${body.cluster_id}`, body.decision);
      const card = this.card(body.cluster_id);
      return Response.json({ ok: true, tally: card.tally });
    }
    if (url.pathname === "/api/progress") {
      const perExpert: Record<string, number> = {};
      for (const e of this.roster) perExpert[e] = 0;
      for (const key of this.votes.keys()) perExpert[key.split(":")[0]] += 1;
      return Response.json({
        total_clusters: this.nClusters,
        roster: this.roster,
        per_expert: perExpert,
        voted_pairs: this.votes.size,
        total_pairs: this.roster.length * this.nClusters,
        complete: this.votes.size === this.roster.length * this.nClusters,
      });
    }
    return Response.json({ error: "not found" }, { status: 404 });
  }) as typeof fetch;
}

function makeSession(service: FakeService, expert = "alice"): ReviewSession {
  return new ReviewSession(new ApiClient("http://fake", service.fetchImpl), expert);
}

describe("ReviewSession", () => {
  it("refresh loads a page and progress", async () => {
    const svc = new FakeService();
    const session = makeSession(svc);
    const view = await session.refresh();
    expect(view.page?.clusters).toHaveLength(6);
    expect(view.progress?.total_clusters).toBe(6);
    expect(session.progressPercent()).toBe(0);
  });

  it("casting a vote updates the card from the server response", async () => {
    const svc = new FakeService();
    const session = makeSession(svc);
    await session.refresh();
    const view = await session.castVote(3, "accept");
    const card = view.page?.clusters.find((c) => c.cluster_id === 3);
    expect(card?.my_vote).toBe("accept");
    expect(card?.tally).toEqual({ accepts: 1, rejects: 0 });
  });

  it("changing a vote is latest-wins on the server", async () => {
    const svc = new FakeService();
    const session = makeSession(svc);
    await session.refresh();
    await session.castVote(2, "accept");
    await session.castVote(2, "reject");
    expect(svc.votes.get("alice:2")).toBe("reject");
    const view = session.view();
    expect(view.page?.clusters.find((c) => c.cluster_id === 2)?.tally).toEqual({
      accepts: 0,
      rejects: 1,
    });
  });

  it("network failure queues the vote and retries on flush", async () => {
    const svc = new FakeService();
    const session = makeSession(svc);
    await session.refresh();
    svc.online = false;
    const view = await session.castVote(1, "accept");
    expect(view.offlineQueue).toBe(1);
    expect(view.banner).toMatch(/offline/);
    expect(svc.votes.size).toBe(0);
    svc.online = true;
    const remaining = await session.flushQueue();
    expect(remaining).toBe(0);
    expect(svc.votes.get("alice:1")).toBe("accept");
    expect(session.view().banner).toBeNull();
  });

  it("queued votes stay ordered so the latest decision lands last", async () => {
    const svc = new FakeService();
    const session = makeSession(svc);
    await session.refresh();
    svc.online = false;
    await session.castVote(4, "accept");
    await session.castVote(4, "reject");
    expect(session.view().offlineQueue).toBe(2);
    svc.online = true;
    await session.flushQueue();
    expect(svc.votes.get("alice:4")).toBe("reject");
    expect(svc.voteCalls).toBe(2);
  });

  it("server rejection of a queued vote is dropped with a banner", async () => {
    const svc = new FakeService();
    const session = makeSession(svc, "mallory");
    svc.online = false;
    await session.castVote(0, "accept");
    svc.online = true;
    const remaining = await session.flushQueue();
    expect(remaining).toBe(0);
    expect(session.view().banner).toMatch(/mallory/);
  });

  it("progress percent tracks my votes only", async () => {
    const svc = new FakeService();
    svc.votes.set("bob:0", "accept");
    svc.votes.set("bob:1", "accept");
    const session = makeSession(svc);
    await session.refresh();
    expect(session.progressPercent()).toBe(0);
    await session.castVote(0, "accept");
    await session.refresh();
    expect(session.progressPercent()).toBe(Math.round(100 / 6));
  });
});
