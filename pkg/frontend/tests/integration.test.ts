// Scripted expert session against the real vote service: the pipeline builds
// a small fixture store, `curate-serve` comes up on a local port, three
// simulated experts vote through the typed client, and the finalized registry
// must equal an independently computed majority selection.

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { ApiClient } from "../src/api.js";
import type { VoteDecision } from "../src/types.js";

const FIXTURE_CONFIG = `
[run]
seed = 23

[synth]
n_dialogues = 900
n_variables = 14
mean_active_vars = 1.3
filler_vocab_size = 160
embed_dim = 6

[phrasing]
min_support = 20

[registry]
experts = alice,bob,carol

[clustering]
min_cluster_size = 1
`;

const pythonReady =
  spawnSync("python3", ["-c", "import ctxtail"], { encoding: "utf-8" }).status === 0;

const describeIf = pythonReady ? describe : describe.skip;

describeIf("curation service integration", () => {
  const port = 18000 + (process.pid % 2000);
  const base = `http://127.0.0.1:${port}`;
  const api = new ApiClient(base);
  let child: ChildProcess;

  beforeAll(async () => {
    const dir = mkdtempSync(join(tmpdir(), "ctxtail-ui-"));
    const cfg = join(dir, "cfg.ini");
    writeFileSync(cfg, FIXTURE_CONFIG);
    child = spawn(
      "python3",
      [
        "-m", "ctxtail.cli", "curate-serve",
        "--config", cfg,
        "--store", join(dir, "store"),
        "--auto",
        "--port", String(port),
      ],
      { stdio: ["ignore", "pipe", "pipe"] },
    );
    const deadline = Date.now() + 110_000;
    for (;;) {
      try {
        await api.progress();
        break;
      } catch {
        if (Date.now() > deadline) throw new Error("curation service did not come up");
        await new Promise((r) => setTimeout(r, 500));
      }
    }
  }, 120_000);

  afterAll(() => {
    child?.kill("SIGINT");
  });

  it("full three-expert session finalizes to the majority selection", async () => {
    const roster = (await api.progress()).roster;
    expect(roster).toEqual(["alice", "bob", "carol"]);

    const first = await api.listClusters({ page: 0, size: 500 });
    const ids = first.clusters.map((c) => c.cluster_id);
    expect(first.total).toBeGreaterThan(1);
    expect(ids).toHaveLength(first.total);

    // deterministic pseudo-random decisions, re-derivable for the oracle
    const decide = (expert: string, cid: number): VoteDecision =>
      (expert.length * 31 + cid * 17) % 5 < 3 ? "accept" : "reject";

    const table = new Map<string, VoteDecision>();
    for (const expert of roster) {
      for (const cid of ids) {
        const d = decide(expert, cid);
        const resp = await api.vote(expert, cid, d);
        expect(resp.ok).toBe(true);
        table.set(`${expert}:${cid}`, d);
      }
    }

    // change one vote through the same endpoint: latest must win server-side
    const flipped: VoteDecision = table.get(`alice:${ids[0]}`) === "accept" ? "reject" : "accept";
    await api.vote("alice", ids[0], flipped);
    table.set(`alice:${ids[0]}`, flipped);
    const page = await api.listClusters({ page: 0, size: 1, expert: "alice" });
    expect(page.clusters[0].cluster_id).toBe(ids[0]);
    expect(page.clusters[0].my_vote).toBe(flipped);

    const progress = await api.progress();
    expect(progress.complete).toBe(true);
    expect(progress.voted_pairs).toBe(roster.length * ids.length);

    const out = await api.finalize();
    const oracle = ids
      .filter((cid) => {
        const accepts = roster.filter((e) => table.get(`${e}:${cid}`) === "accept").length;
        return accepts > roster.length - accepts;
      })
      .sort((a, b) => a - b);
    expect(out.selected).toEqual(oracle);
    expect(out.warning).toBeUndefined();

    const again = await api.finalize();
    expect(again.selected).toEqual(out.selected);
  }, 120_000);
});
