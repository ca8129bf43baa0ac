import { ApiClient } from "./api.js";
import { ReviewSession } from "./session.js";
import type { ClusterCard, SortMode } from "./types.js";

const api = new ApiClient("");
let session: ReviewSession | null = null;

const el = {
  roster: document.getElementById("roster") as HTMLSelectElement,
  start: document.getElementById("start") as HTMLButtonElement,
  review: document.getElementById("review")!,
  list: document.getElementById("cluster-list")!,
  banner: document.getElementById("banner")!,
  progressBar: document.getElementById("progress-bar")!,
  progressText: document.getElementById("progress-text")!,
  pageLabel: document.getElementById("page-label")!,
  prev: document.getElementById("prev") as HTMLButtonElement,
  next: document.getElementById("next") as HTMLButtonElement,
  sort: document.getElementById("sort") as HTMLSelectElement,
  unvoted: document.getElementById("unvoted") as HTMLInputElement,
  finalize: document.getElementById("finalize") as HTMLButtonElement,
  finalizeOut: document.getElementById("finalize-out")!,
  hideStats: document.getElementById("hide-stats") as HTMLInputElement,
};

function pct(x: number): string {
  return `${(100 * x).toFixed(1)}%`;
}

function statRow(label: string, value: string): string {
  return `<div class="stat"><span>${label}</span><b>${value}</b></div>`;
}

function renderCard(card: ClusterCard, hideStats: boolean): HTMLElement {
  const div = document.createElement("div");
  div.className = "card" + (card.my_vote ? ` voted-${card.my_vote}` : "");
  const stats = hideStats
    ? ""
    : statRow("propensity rate", pct(card.avg_propensity_rate)) +
      statRow("avg position", card.avg_relative_position.toFixed(2)) +
      statRow("avg sentence length", card.avg_sentence_length.toFixed(1)) +
      statRow("past tense", pct(card.pct_past_tense)) +
      statRow("with sentiment", pct(card.pct_with_sentiment));
  div.innerHTML = `
    <div class="card-head">
      <span class="cid">cluster ${card.cluster_id}</span>
      <span class="size">${card.size} phrases</span>
      <span class="tally">${card.tally.accepts}✓ ${card.tally.rejects}✗</span>
    </div>
    <div class="phrases">${card.sample_phrases.map((p) => `<code>${escapeHtml(p)}</code>`).join(" ")}</div>
    <div class="stats">${stats}</div>
    <div class="actions">
      <button class="accept${card.my_vote === "accept" ? " active" : ""}">accept</button>
      <button class="reject${card.my_vote === "reject" ? " active" : ""}">reject</button>
      ${card.my_vote ? `<span class="mine">your vote: ${card.my_vote}</span>` : ""}
    </div>`;
  div.querySelector(".accept")!.addEventListener("click", () => void vote(card.cluster_id, "accept"));
  div.querySelector(".reject")!.addEventListener("click", () => void vote(card.cluster_id, "reject"));
  return div;
}

function escapeHtml(text: string): string {
  const span = document.createElement("span");
  span.textContent = text;
  return span.innerHTML;
}

function render(): void {
  if (!session) return;
  const view = session.view();
  el.banner.textContent = view.banner ?? "";
  el.banner.style.display = view.banner ? "block" : "none";
  if (view.page) {
    el.list.replaceChildren(...view.page.clusters.map((c) => renderCard(c, el.hideStats.checked)));
    const pages = Math.max(1, Math.ceil(view.page.total / session.pageSize));
    el.pageLabel.textContent = `page ${session.pageIndex + 1} / ${pages}`;
    el.prev.disabled = session.pageIndex === 0;
    el.next.disabled = session.pageIndex >= pages - 1;
  }
  if (view.progress) {
    const mine = view.progress.per_expert[view.expert] ?? 0;
    el.progressText.textContent = `${mine} / ${view.progress.total_clusters} clusters voted`;
    el.progressBar.style.width = `${session.progressPercent()}%`;
  }
}

async function vote(clusterId: number, decision: "accept" | "reject"): Promise<void> {
  if (!session) return;
  await session.castVote(clusterId, decision);
  render();
  void session.refresh().then(render);
}

async function start(): Promise<void> {
  session = new ReviewSession(api, el.roster.value);
  el.review.style.display = "block";
  await session.refresh();
  render();
  window.setInterval(() => void session?.refresh().then(render), 5000);
}

async function init(): Promise<void> {
  const progress = await api.progress();
  el.roster.replaceChildren(
    ...progress.roster.map((name) => {
      const opt = document.createElement("option");
      opt.value = name;
      opt.textContent = name;
      return opt;
    }),
  );
  el.start.addEventListener("click", () => void start());
  el.prev.addEventListener("click", () => void session?.goToPage(session.pageIndex - 1).then(render));
  el.next.addEventListener("click", () => void session?.goToPage(session.pageIndex + 1).then(render));
  el.sort.addEventListener("change", () => {
    if (session) {
      session.sort = el.sort.value as SortMode;
      void session.goToPage(0).then(render);
    }
  });
  el.unvoted.addEventListener("change", () => {
    if (session) {
      session.unvotedFirst = el.unvoted.checked;
      void session.goToPage(0).then(render);
    }
  });
  el.hideStats.addEventListener("change", render);
  el.finalize.addEventListener("click", async () => {
    const out = await api.finalize();
    const warning = out.warning
      ? `<p class="warn">${escapeHtml(out.warning.message)} (${out.warning.uncovered_clusters.length} uncovered)</p>`
      : "";
    el.finalizeOut.innerHTML =
      `<p>${out.n_selected} clusters selected -> ${out.n_variables} variables` +
      (out.registry ? ` (${escapeHtml(out.registry)})` : "") +
      `</p>${warning}`;
  });
  window.addEventListener("online", () => void session?.flushQueue().then(render));
}

void init();
