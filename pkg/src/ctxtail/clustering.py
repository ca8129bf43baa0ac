"""Clustering of phrase vectors, silhouette-based selection, and cluster statistics.

Determinism conventions (documented because the library is run under
byte-reproducibility requirements):

- DBSCAN: a point is core when its closed eps-neighborhood (self included)
  holds at least min_pts points.  Clusters are the connected components of
  core points; border points attach to their nearest core point (ties broken
  by smallest core index).  Labels are numbered by each cluster's smallest
  core index.  The induced partition is invariant to point order.
- Agglomerative: bottom-up merges under average/complete/ward linkage; ties
  broken by the smallest pair of cluster representatives (a cluster's
  representative is its smallest original point index).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus
from .phrasing import tokenize

log = logging.getLogger(__name__)


class ClusteringError(ValueError):
    pass


@dataclass
class ClusterAssignment:
    labels: np.ndarray  # (n,) int, -1 = noise
    n_clusters: int
    method: str
    params: dict = field(default_factory=dict)
    merges: list[tuple[int, int, float]] | None = None  # agglomerative merge tree

    def members(self, label: int) -> np.ndarray:
        return np.flatnonzero(self.labels == label)


def _pairwise_block(X: np.ndarray, rows: np.ndarray) -> np.ndarray:
    # Squared Euclidean distances between X[rows] and all of X, clipped at 0.
    sq = np.sum(X * X, axis=1)
    d2 = sq[rows, None] + sq[None, :] - 2.0 * (X[rows] @ X.T)
    return np.maximum(d2, 0.0)


def dbscan(points: np.ndarray, eps: float, min_pts: int) -> ClusterAssignment:
    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ClusteringError("dbscan requires a non-empty 2-D point matrix")
    if eps <= 0 or min_pts < 1:
        raise ClusteringError("dbscan requires eps > 0 and min_pts >= 1")
    n = X.shape[0]
    eps2 = eps * eps

    neighbors: list[np.ndarray] = []
    block = max(1, min(n, int(4e6 // max(n, 1)) or 1))
    for start in range(0, n, block):
        rows = np.arange(start, min(start + block, n))
        d2 = _pairwise_block(X, rows)
        for local in range(len(rows)):
            neighbors.append(np.flatnonzero(d2[local] <= eps2))
    core = np.array([len(nb) >= min_pts for nb in neighbors])

    labels = np.full(n, -1, dtype=np.int64)
    cluster_of_core = np.full(n, -1, dtype=np.int64)
    next_label = 0
    for i in range(n):
        if not core[i] or cluster_of_core[i] >= 0:
            continue
        # BFS over core points only; expansion in index order.
        stack = [i]
        cluster_of_core[i] = next_label
        while stack:
            p = stack.pop()
            for q in neighbors[p]:
                if core[q] and cluster_of_core[q] < 0:
                    cluster_of_core[q] = next_label
                    stack.append(q)
        next_label += 1
    labels[core] = cluster_of_core[core]

    core_idx = np.flatnonzero(core)
    if core_idx.size:
        for i in np.flatnonzero(~core):
            cand = neighbors[i][core[neighbors[i]]]
            if cand.size:
                d2 = np.sum((X[cand] - X[i]) ** 2, axis=1)
                labels[i] = labels[cand[np.argmin(d2)]]  # argmin ties -> smallest index

    return ClusterAssignment(
        labels=labels,
        n_clusters=next_label,
        method="dbscan",
        params={"eps": eps, "min_pts": min_pts},
    )


def _linkage_tree(X: np.ndarray, linkage: str) -> list[tuple[int, int, float]]:
    """Full merge sequence [(rep_a, rep_b, height)]; merged cluster keeps rep_a (< rep_b)."""
    n = X.shape[0]
    d2 = _pairwise_block(X, np.arange(n))
    np.fill_diagonal(d2, np.inf)
    if linkage == "ward":
        L = d2.copy()
    elif linkage == "complete":
        L = np.sqrt(d2)
    elif linkage == "average":
        S = np.sqrt(d2)  # running sum of pairwise distances between clusters
        np.fill_diagonal(S, 0.0)
        L = S.copy()
        np.fill_diagonal(L, np.inf)
    else:
        raise ClusteringError(f"unknown linkage: {linkage!r}")
    if linkage != "average":
        np.fill_diagonal(L, np.inf)

    active = np.ones(n, dtype=bool)
    sizes = np.ones(n, dtype=np.int64)
    merges: list[tuple[int, int, float]] = []
    INF = np.inf

    with np.errstate(invalid="ignore"):
        for _ in range(n - 1):
            flat = np.argmin(L)
            a, b = divmod(int(flat), n)
            height = L[a, b]
            # np.argmin returns the first minimum in row-major order, which is
            # the smallest (a, b) pair lexicographically; normalize to a < b.
            if a > b:
                a, b = b, a
            merges.append((a, b, float(np.sqrt(height)) if linkage == "ward" else float(height)))

            if linkage == "average":
                col = S[:, a] + S[:, b]
                S[:, a] = col
                S[a, :] = col
                new_size = sizes[a] + sizes[b]
                L[:, a] = col / (sizes * new_size)
                L[a, :] = L[:, a]
            elif linkage == "complete":
                col = np.maximum(L[:, a], L[:, b])
                L[:, a] = col
                L[a, :] = col
            else:  # ward, Lance-Williams on squared distances
                sa, sb = sizes[a], sizes[b]
                col = ((sizes + sa) * L[:, a] + (sizes + sb) * L[:, b] - sizes * height) / (
                    sizes + sa + sb
                )
                L[:, a] = col
                L[a, :] = col

            sizes[a] += sizes[b]
            active[b] = False
            L[b, :] = INF
            L[:, b] = INF
            L[a, a] = INF
            L[~active, :] = INF
            L[:, ~active] = INF
    return merges


def labels_from_merges(n: int, merges: list[tuple[int, int, float]], n_clusters: int) -> np.ndarray:
    """Cut the merge tree at n_clusters; labels numbered by smallest member index."""
    parent = np.arange(n)

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b, _ in merges[: n - n_clusters]:
        ra, rb = find(a), find(b)
        parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(i) for i in range(n)])
    _, labels = np.unique(roots, return_inverse=True)
    return labels.astype(np.int64)


def agglomerative(points: np.ndarray, linkage: str, n_clusters: int) -> ClusterAssignment:
    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ClusteringError("agglomerative requires a non-empty 2-D point matrix")
    n = X.shape[0]
    if not 1 <= n_clusters <= n:
        raise ClusteringError(f"n_clusters must be in [1, {n}], got {n_clusters}")
    merges = _linkage_tree(X, linkage)
    labels = labels_from_merges(n, merges, n_clusters)
    return ClusterAssignment(
        labels=labels,
        n_clusters=int(labels.max()) + 1,
        method="agglomerative",
        params={"linkage": linkage, "n_clusters": n_clusters},
        merges=merges,
    )


def silhouette(points: np.ndarray, labels: np.ndarray) -> float:
    """Mean of (b - a) / max(a, b) over non-noise samples; singletons score 0."""
    X = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    keep = labels >= 0
    X = X[keep]
    labels = labels[keep]
    uniq, inv = np.unique(labels, return_inverse=True)
    if uniq.size < 2:
        raise ClusteringError("silhouette undefined: need at least 2 clusters")
    n = X.shape[0]
    k = uniq.size
    sizes = np.bincount(inv, minlength=k)

    scores = np.zeros(n)
    block = max(1, min(n, int(4e6 // max(n, 1)) or 1))
    for start in range(0, n, block):
        rows = np.arange(start, min(start + block, n))
        d = np.sqrt(_pairwise_block(X, rows))
        sums = np.zeros((len(rows), k))
        for c in range(k):
            sums[:, c] = d[:, inv == c].sum(axis=1)
        own = inv[rows]
        own_size = sizes[own]
        a = np.where(own_size > 1, sums[np.arange(len(rows)), own] / np.maximum(own_size - 1, 1), 0.0)
        means = sums / sizes[None, :]
        means[np.arange(len(rows)), own] = np.inf
        b = means.min(axis=1)
        s = np.where(own_size > 1, (b - a) / np.maximum(np.maximum(a, b), 1e-300), 0.0)
        scores[rows] = s
    return float(scores.mean())


def default_dbscan_grid(
    points: np.ndarray, min_pts_grid: tuple[int, ...] = (3, 5, 10), n_eps: int = 10
) -> list[dict]:
    """eps over quantiles of 5-NN distances crossed with the min_pts grid."""
    X = np.asarray(points, dtype=np.float64)
    n = X.shape[0]
    kth = min(5, n - 1)
    if kth < 1:
        return []
    knn = np.empty(n)
    block = max(1, min(n, int(4e6 // max(n, 1)) or 1))
    for start in range(0, n, block):
        rows = np.arange(start, min(start + block, n))
        d2 = _pairwise_block(X, rows)
        knn[rows] = np.sqrt(np.partition(d2, kth, axis=1)[:, kth])
    qs = np.quantile(knn, np.linspace(0.1, 1.0, n_eps))
    configs = []
    for eps in sorted(set(float(q) for q in qs if q > 0)):
        for mp in min_pts_grid:
            configs.append({"method": "dbscan", "eps": eps, "min_pts": mp})
    return configs


def run_config(points: np.ndarray, config: dict) -> ClusterAssignment:
    cfg = dict(config)
    method = cfg.pop("method")
    if method == "dbscan":
        return dbscan(points, **cfg)
    if method == "agglomerative":
        return agglomerative(points, **cfg)
    raise ClusteringError(f"unknown clustering method: {method!r}")


def select_clustering(points: np.ndarray, configs: list[dict]) -> ClusterAssignment:
    """Run every config, score by silhouette, return the winner.

    Ties break toward more clusters, then toward dbscan over agglomerative.
    Configs producing fewer than 2 clusters are skipped.
    """
    method_rank = {"dbscan": 1, "agglomerative": 0}
    best: tuple | None = None
    best_assignment = None
    for config in configs:
        try:
            assignment = run_config(points, config)
            if assignment.n_clusters < 2:
                continue
            score = silhouette(points, assignment.labels)
        except ClusteringError:
            continue
        key = (score, assignment.n_clusters, method_rank[assignment.method])
        if best is None or key > best:
            best = key
            best_assignment = assignment
    if best_assignment is None:
        raise ClusteringError("all clustering configs degenerate (< 2 clusters)")
    best_assignment.params["silhouette"] = best[0]
    return best_assignment


# --- cluster statistics over the corpus ---

PAST_TENSE_IRREGULAR = frozenset(
    """was were had did went got said told made took came knew thought found
    gave saw left felt kept paid met ran sent spent stood heard held brought
    bought sold built chose drew drove fell grew lost meant put read rose sat
    sold spoke wrote won lent""".split()
)

SENTIMENT_WORDS = frozenset(
    """good great excellent happy glad pleased love like nice perfect wonderful
    interested amazing fine helpful bad terrible awful unhappy hate angry
    problem problems issue issues worried complaint wrong difficult annoying
    disappointed sorry frustrated""".split()
)


def _is_past_tense_token(tok: str) -> bool:
    return tok in PAST_TENSE_IRREGULAR or (len(tok) >= 4 and tok.endswith("ed"))


@dataclass
class ClusterStats:
    size: int
    avg_propensity_rate: float
    avg_relative_position: float
    avg_sentence_length: float
    pct_past_tense: float
    pct_with_sentiment: float
    sample_phrases: tuple[str, ...] = ()


def _match_positions(tokens: list[str], phrase_index: dict[str, list[tuple[str, ...]]]) -> list[tuple[str, ...]]:
    hits = []
    for i, tok in enumerate(tokens):
        for phrase in phrase_index.get(tok, ()):
            if tuple(tokens[i : i + len(phrase)]) == phrase:
                hits.append(phrase)
    return hits


def compute_cluster_stats(
    phrases_by_cluster: dict[int, list[tuple[str, ...]]],
    corpus: Corpus,
    past_tense_words: frozenset[str] = PAST_TENSE_IRREGULAR,
    sentiment_words: frozenset[str] = SENTIMENT_WORDS,
) -> dict[int, ClusterStats]:
    """Occurrence-level statistics for every cluster in one corpus pass.

    An occurrence is a (phrase, customer utterance) pair; propensity uses the
    dialogue-level outcome (any offer accepted) restricted to offer-bearing
    dialogues.
    """
    phrase_cluster: dict[tuple[str, ...], int] = {}
    phrase_index: dict[str, list[tuple[str, ...]]] = {}
    for cid, phrases in phrases_by_cluster.items():
        for ph in phrases:
            phrase_cluster[ph] = cid
            phrase_index.setdefault(ph[0], []).append(ph)

    acc: dict[int, dict] = {
        cid: {
            "prop_n": 0,
            "prop_k": 0,
            "pos_sum": 0.0,
            "pos_n": 0,
            "len_sum": 0,
            "past": 0,
            "sent": 0,
            "occ": 0,
        }
        for cid in phrases_by_cluster
    }

    for d in corpus.dialogues:
        max_index = max((u.index for u in d.utterances), default=0)
        outcome = 1 if any(o.outcome == 1 for o in d.offers) else 0
        has_offer = bool(d.offers)
        seen_clusters_dialogue: dict[int, set[tuple[str, ...]]] = {}
        for utt in d.utterances:
            if utt.speaker != "customer":
                continue
            toks = tokenize(utt.text)
            hits = _match_positions(toks, phrase_index)
            if not hits:
                continue
            is_past = any(
                t in past_tense_words or (len(t) >= 4 and t.endswith("ed")) for t in toks
            )
            has_sent = any(t in sentiment_words for t in toks)
            for ph in set(hits):
                cid = phrase_cluster[ph]
                a = acc[cid]
                a["occ"] += 1
                a["pos_sum"] += utt.index / max_index if max_index > 0 else 0.0
                a["pos_n"] += 1
                a["len_sum"] += len(toks)
                a["past"] += int(is_past)
                a["sent"] += int(has_sent)
                seen_clusters_dialogue.setdefault(cid, set()).add(ph)
        for cid, phs in seen_clusters_dialogue.items():
            if has_offer:
                acc[cid]["prop_n"] += len(phs)
                acc[cid]["prop_k"] += outcome * len(phs)

    out: dict[int, ClusterStats] = {}
    for cid, phrases in phrases_by_cluster.items():
        a = acc[cid]
        occ = max(a["occ"], 1)
        out[cid] = ClusterStats(
            size=len(phrases),
            avg_propensity_rate=a["prop_k"] / a["prop_n"] if a["prop_n"] else 0.0,
            avg_relative_position=a["pos_sum"] / a["pos_n"] if a["pos_n"] else 0.0,
            avg_sentence_length=a["len_sum"] / occ,
            pct_past_tense=a["past"] / occ,
            pct_with_sentiment=a["sent"] / occ,
            sample_phrases=tuple(" ".join(p) for p in sorted(phrases)[:10]),
        )
    return out


def cluster_stats(cluster_phrases: list[tuple[str, ...]], corpus: Corpus) -> ClusterStats:
    """Statistics for a single cluster of phrases."""
    return compute_cluster_stats({0: list(cluster_phrases)}, corpus)[0]


@dataclass(frozen=True)
class PruneThresholds:
    min_size: int | None = None
    min_rate_deviation: float | None = None  # |avg rate - baseline_rate| must reach this
    baseline_rate: float | None = None
    max_past_tense: float | None = None


def write_assignments(phrases: list[tuple[str, ...]], labels, path) -> None:
    """Full phrase-to-cluster map: phrase TAB label, noise = -1."""
    from pathlib import Path

    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write("phrase\tcluster\n")
        for ph, label in zip(phrases, labels):
            fh.write(f"{' '.join(ph)}\t{int(label)}\n")


def read_assignments(path) -> dict[int, list[tuple[str, ...]]]:
    from pathlib import Path

    out: dict[int, list[tuple[str, ...]]] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        fh.readline()
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            phrase, _, label = line.rpartition("\t")
            out.setdefault(int(label), []).append(tuple(phrase.split(" ")))
    return out


CLUSTER_REPORT_COLUMNS = (
    "cluster_id",
    "size",
    "avg_propensity_rate",
    "avg_relative_position",
    "avg_sentence_length",
    "pct_past_tense",
    "pct_with_sentiment",
    "sample_phrases",
)


def write_cluster_report(stats: dict[int, ClusterStats], path) -> None:
    """The table the curation UI renders: one row per surviving cluster."""
    from pathlib import Path

    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write("\t".join(CLUSTER_REPORT_COLUMNS) + "\n")
        for cid in sorted(stats):
            s = stats[cid]
            fh.write(
                f"{cid}\t{s.size}\t{s.avg_propensity_rate:.6g}\t{s.avg_relative_position:.6g}\t"
                f"{s.avg_sentence_length:.6g}\t{s.pct_past_tense:.6g}\t{s.pct_with_sentiment:.6g}\t"
                f"{'|'.join(s.sample_phrases)}\n"
            )


def read_cluster_report(path) -> dict[int, ClusterStats]:
    from pathlib import Path

    out: dict[int, ClusterStats] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        fh.readline()
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            cid, size, rate, pos, slen, past, sent, samples = line.split("\t")
            out[int(cid)] = ClusterStats(
                size=int(size),
                avg_propensity_rate=float(rate),
                avg_relative_position=float(pos),
                avg_sentence_length=float(slen),
                pct_past_tense=float(past),
                pct_with_sentiment=float(sent),
                sample_phrases=tuple(s for s in samples.split("|") if s),
            )
    return out


def prune_clusters(
    assignment: ClusterAssignment,
    stats: dict[int, ClusterStats],
    thresholds: PruneThresholds,
) -> tuple[list[int], dict[int, str]]:
    """Clusters surviving every enabled threshold, plus the rule each removal violated."""
    survivors: list[int] = []
    removed: dict[int, str] = {}
    for cid in sorted(stats):
        st = stats[cid]
        if thresholds.min_size is not None and st.size < thresholds.min_size:
            removed[cid] = f"size {st.size} < min_size {thresholds.min_size}"
        elif (
            thresholds.min_rate_deviation is not None
            and thresholds.baseline_rate is not None
            and abs(st.avg_propensity_rate - thresholds.baseline_rate) < thresholds.min_rate_deviation
        ):
            removed[cid] = (
                f"propensity rate {st.avg_propensity_rate:.4f} within "
                f"{thresholds.min_rate_deviation} of baseline {thresholds.baseline_rate:.4f}"
            )
        elif thresholds.max_past_tense is not None and st.pct_past_tense > thresholds.max_past_tense:
            removed[cid] = f"past-tense share {st.pct_past_tense:.4f} > {thresholds.max_past_tense}"
        else:
            survivors.append(cid)
    for cid, rule in removed.items():
        log.info("pruned cluster %d: %s", cid, rule)
    return survivors, removed
