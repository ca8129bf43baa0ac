"""Expert curation of phrase clusters into a contextual-variable registry,
and annotation of dialogues into binary context vectors.

Negation handling: a phrase occurrence is negated when a cue token ("not",
"no", "never", "n't", ...) appears within ``window`` tokens before the phrase
start inside the same utterance.  Negated occurrences never set the positive
variable; they set the negated twin when one exists for the cluster.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Corpus, Dialogue
from .phrasing import tokenize

log = logging.getLogger(__name__)

DEFAULT_NEGATION_CUES = ("not", "no", "never", "n't", "without", "don't", "doesn't", "won't", "isn't", "aren't")


class RegistryError(ValueError):
    pass


@dataclass(frozen=True)
class ExpertVote:
    expert_id: str
    cluster_id: int
    decision: str  # "accept" | "reject"
    timestamp: str = ""  # ISO-8601; empty sorts earliest
    note: str = ""


@dataclass(frozen=True)
class NegationConfig:
    cues: tuple[str, ...] = DEFAULT_NEGATION_CUES
    window: int = 3
    negated_clusters: tuple[int, ...] = ()  # clusters that get a negated twin


@dataclass(frozen=True)
class ContextualVariable:
    variable_id: str
    source_cluster_id: int
    phrases: tuple[tuple[str, ...], ...]
    polarity: str  # "positive" | "negated"
    paired_variable: str | None = None
    significant_products: tuple[str, ...] = ()


@dataclass(frozen=True)
class Registry:
    variables: tuple[ContextualVariable, ...]

    def __len__(self) -> int:
        return len(self.variables)

    def index_of(self, variable_id: str) -> int:
        for i, v in enumerate(self.variables):
            if v.variable_id == variable_id:
                return i
        raise KeyError(variable_id)


@dataclass
class VoteTable:
    votes: dict[tuple[str, int], ExpertVote]
    roster: tuple[str, ...]
    clusters: tuple[int, ...]

    def coverage(self) -> dict[int, int]:
        counts = {cid: 0 for cid in self.clusters}
        for (_, cid) in self.votes:
            counts[cid] += 1
        return counts

    def incomplete_clusters(self) -> list[int]:
        return [cid for cid, n in self.coverage().items() if n < len(self.roster)]


def ingest_votes(
    source: str | Path | list[ExpertVote],
    roster: list[str] | tuple[str, ...],
    clusters: list[int] | tuple[int, ...],
) -> VoteTable:
    """Deduplicate votes latest-wins per (expert, cluster); validate ids.

    ``source`` is either a TSV path (expert_id, cluster_id, decision,
    timestamp[, note]) or an in-memory vote list.
    """
    if isinstance(source, (str, Path)):
        votes = read_votes(source)
    else:
        votes = list(source)
    roster_set = set(roster)
    cluster_set = set(clusters)
    table: dict[tuple[str, int], ExpertVote] = {}
    for v in votes:
        if v.expert_id not in roster_set:
            raise RegistryError(f"unknown expert: {v.expert_id!r}")
        if v.cluster_id not in cluster_set:
            raise RegistryError(f"unknown cluster: {v.cluster_id}")
        if v.decision not in ("accept", "reject"):
            raise RegistryError(f"bad decision {v.decision!r} from {v.expert_id}")
        key = (v.expert_id, v.cluster_id)
        prev = table.get(key)
        if prev is None or v.timestamp >= prev.timestamp:
            table[key] = v
    vt = VoteTable(votes=table, roster=tuple(roster), clusters=tuple(clusters))
    missing = vt.incomplete_clusters()
    if missing:
        log.info("%d clusters lack full expert coverage", len(missing))
    return vt


def majority_select(table: VoteTable) -> list[int]:
    """Clusters with strictly more accepts than rejects; missing votes count as reject."""
    selected = []
    for cid in table.clusters:
        accepts = sum(
            1
            for e in table.roster
            if (v := table.votes.get((e, cid))) is not None and v.decision == "accept"
        )
        rejects = len(table.roster) - accepts
        if accepts > rejects:
            selected.append(cid)
    return selected


def build_registry(
    selected: dict[int, dict],
    negation: NegationConfig = NegationConfig(),
) -> Registry:
    """Registry of contextual variables from selected clusters.

    ``selected`` maps cluster_id -> {"phrases": [token tuples or strings],
    "significant_products": [...]}.  Ordering is stable: by cluster id,
    positive variable before its negated twin.
    """
    if not selected:
        raise RegistryError("no clusters selected")
    neg_set = set(negation.negated_clusters)
    owner: dict[tuple[str, ...], int] = {}
    for cid in sorted(selected):
        for p in selected[cid]["phrases"]:
            ph = tuple(tokenize(p)) if isinstance(p, str) else tuple(p)
            if ph in owner and owner[ph] != cid:
                raise RegistryError(
                    f"phrase {' '.join(ph)!r} appears in clusters {owner[ph]} and {cid}; "
                    "phrase sets may only overlap across polarity pairs"
                )
            owner[ph] = cid
    variables: list[ContextualVariable] = []
    for cid in sorted(selected):
        info = selected[cid]
        phrases = tuple(
            sorted(tuple(tokenize(p)) if isinstance(p, str) else tuple(p) for p in info["phrases"])
        )
        if not phrases:
            raise RegistryError(f"cluster {cid} has no phrases")
        sig = tuple(sorted(info.get("significant_products", ())))
        pos_id = f"ctx{cid:05d}"
        neg_id = f"ctx{cid:05d}_neg" if cid in neg_set else None
        variables.append(
            ContextualVariable(
                variable_id=pos_id,
                source_cluster_id=cid,
                phrases=phrases,
                polarity="positive",
                paired_variable=neg_id,
                significant_products=sig,
            )
        )
        if neg_id:
            variables.append(
                ContextualVariable(
                    variable_id=neg_id,
                    source_cluster_id=cid,
                    phrases=phrases,
                    polarity="negated",
                    paired_variable=pos_id,
                    significant_products=sig,
                )
            )
    return Registry(variables=tuple(variables))


def _phrase_index(registry: Registry) -> dict[str, list[tuple[tuple[str, ...], int, int]]]:
    """first token -> [(phrase, positive var index, negated var index or -1)]."""
    pos_idx: dict[tuple[int, str], int] = {}
    for i, v in enumerate(registry.variables):
        pos_idx[(v.source_cluster_id, v.polarity)] = i
    index: dict[str, list[tuple[tuple[str, ...], int, int]]] = {}
    seen: set[tuple[int, tuple[str, ...]]] = set()
    for v in registry.variables:
        if v.polarity != "positive":
            continue
        neg_i = pos_idx.get((v.source_cluster_id, "negated"), -1)
        pos_i = pos_idx[(v.source_cluster_id, "positive")]
        for ph in v.phrases:
            if (v.source_cluster_id, ph) in seen:
                continue
            seen.add((v.source_cluster_id, ph))
            index.setdefault(ph[0], []).append((ph, pos_i, neg_i))
    return index


def _annotate_tokens(
    utterance_tokens: list[str],
    index: dict[str, list[tuple[tuple[str, ...], int, int]]],
    cues: frozenset[str],
    window: int,
    out: np.ndarray,
) -> None:
    toks = utterance_tokens
    for i, tok in enumerate(toks):
        for phrase, pos_i, neg_i in index.get(tok, ()):
            if tuple(toks[i : i + len(phrase)]) != phrase:
                continue
            negated = any(t in cues for t in toks[max(0, i - window) : i])
            if negated:
                if neg_i >= 0:
                    out[neg_i] = 1
            else:
                out[pos_i] = 1


def annotate_dialogue(
    dialogue: Dialogue, registry: Registry, negation: NegationConfig = NegationConfig()
) -> np.ndarray:
    """Binary context vector indexed by registry order."""
    out = np.zeros(len(registry), dtype=np.uint8)
    index = _phrase_index(registry)
    cues = frozenset(negation.cues)
    for utt in dialogue.utterances:
        if utt.speaker == "customer":
            _annotate_tokens(tokenize(utt.text), index, cues, negation.window, out)
    return out


@dataclass
class Annotations:
    dialogue_ids: tuple[str, ...]
    matrix: np.ndarray  # (n_dialogues, n_variables) uint8

    def row(self, dialogue_id: str) -> np.ndarray:
        return self.matrix[self.dialogue_ids.index(dialogue_id)]


def annotate_corpus(
    corpus: Corpus, registry: Registry, negation: NegationConfig = NegationConfig()
) -> Annotations:
    index = _phrase_index(registry)
    cues = frozenset(negation.cues)
    matrix = np.zeros((len(corpus.dialogues), len(registry)), dtype=np.uint8)
    ids = []
    for row, d in enumerate(corpus.dialogues):
        ids.append(d.dialogue_id)
        for utt in d.utterances:
            if utt.speaker == "customer":
                _annotate_tokens(tokenize(utt.text), index, cues, negation.window, matrix[row])
    return Annotations(dialogue_ids=tuple(ids), matrix=matrix)


def context_coverage(corpus: Corpus, annotations: Annotations) -> dict[str, float]:
    """Per product: share of its offer dialogues with at least one nonzero context value."""
    any_context = annotations.matrix.any(axis=1)
    pos = {d.dialogue_id: any_context[i] for i, d in zip(range(len(corpus.dialogues)), corpus.dialogues)}
    counts: dict[str, list[int]] = {pid: [0, 0] for pid in corpus.product_catalog}
    for d in corpus.dialogues:
        for o in d.offers:
            c = counts.setdefault(o.product_id, [0, 0])
            c[0] += 1
            c[1] += int(pos[d.dialogue_id])
    return {pid: (c[1] / c[0] if c[0] else 0.0) for pid, c in counts.items()}


# --- persistence ---

def write_votes(votes: list[ExpertVote], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write("expert_id\tcluster_id\tdecision\ttimestamp\tnote\n")
        for v in votes:
            fh.write(f"{v.expert_id}\t{v.cluster_id}\t{v.decision}\t{v.timestamp}\t{v.note}\n")


def append_vote(vote: ExpertVote, path: str | Path) -> None:
    path = Path(path)
    new = not path.exists()
    with path.open("a", encoding="utf-8") as fh:
        if new:
            fh.write("expert_id\tcluster_id\tdecision\ttimestamp\tnote\n")
        fh.write(f"{vote.expert_id}\t{vote.cluster_id}\t{vote.decision}\t{vote.timestamp}\t{vote.note}\n")


def read_votes(path: str | Path) -> list[ExpertVote]:
    votes = []
    with Path(path).open("r", encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("expert_id"):
            raise RegistryError(f"not a votes file: {path}")
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) < 3:
                raise RegistryError(f"malformed vote row: {line!r}")
            while len(parts) < 5:
                parts.append("")
            votes.append(
                ExpertVote(
                    expert_id=parts[0],
                    cluster_id=int(parts[1]),
                    decision=parts[2],
                    timestamp=parts[3],
                    note=parts[4],
                )
            )
    return votes


def write_registry(registry: Registry, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write("variable_id\tcluster_id\tpolarity\tpaired_variable\tphrases\tsignificant_products\n")
        for v in registry.variables:
            phrases = "|".join(" ".join(p) for p in v.phrases)
            fh.write(
                f"{v.variable_id}\t{v.source_cluster_id}\t{v.polarity}\t"
                f"{v.paired_variable or ''}\t{phrases}\t{','.join(v.significant_products)}\n"
            )


def read_registry(path: str | Path) -> Registry:
    variables = []
    with Path(path).open("r", encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("variable_id"):
            raise RegistryError(f"not a registry file: {path}")
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            vid, cid, polarity, paired, phrases, sig = line.split("\t")
            variables.append(
                ContextualVariable(
                    variable_id=vid,
                    source_cluster_id=int(cid),
                    phrases=tuple(tuple(p.split(" ")) for p in phrases.split("|") if p),
                    polarity=polarity,
                    paired_variable=paired or None,
                    significant_products=tuple(s for s in sig.split(",") if s),
                )
            )
    return Registry(variables=tuple(variables))


def write_annotations(ann: Annotations, registry: Registry, path: str | Path) -> None:
    """Sparse annotation pairs: dialogue_id TAB comma-joined nonzero variable ids."""
    var_ids = [v.variable_id for v in registry.variables]
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write("dialogue_id\tvariables\n")
        for i, did in enumerate(ann.dialogue_ids):
            nz = np.flatnonzero(ann.matrix[i])
            fh.write(f"{did}\t{','.join(var_ids[j] for j in nz)}\n")


def read_annotations(path: str | Path, registry: Registry) -> Annotations:
    index = {v.variable_id: i for i, v in enumerate(registry.variables)}
    ids = []
    rows = []
    with Path(path).open("r", encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("dialogue_id"):
            raise RegistryError(f"not an annotations file: {path}")
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            did, _, vars_ = line.partition("\t")
            ids.append(did)
            row = np.zeros(len(registry), dtype=np.uint8)
            for vid in vars_.split(","):
                if vid:
                    row[index[vid]] = 1
            rows.append(row)
    matrix = np.vstack(rows) if rows else np.zeros((0, len(registry)), dtype=np.uint8)
    return Annotations(dialogue_ids=tuple(ids), matrix=matrix)
