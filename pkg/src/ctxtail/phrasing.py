"""Candidate phrase mining over customer turns, with support and significance filters.

Phrases are plain token n-grams (1..4) from customer utterances.  Support is
the number of *distinct* dialogues containing the phrase.  The association of
a phrase with purchase propensity is tested per product with a two-proportion
z-test: outcome rate among dialogues offering the product that contain the
phrase, against the rate over all dialogues offering the product.
"""

from __future__ import annotations

import math
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Corpus, Dialogue

# n-grams consisting solely of these words carry no context and are dropped.
STOPWORDS = frozenset(
    """a an and are as at be but by for from had has have he her his i if in is
    it its me my not no of on or our she so that the their them they this to
    was we were what which will with you your yes ok okay uh um hm hmm""".split()
)

_KEEP_INNER = {"-", "'", "’"}


class PhrasingError(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    """Lowercase, NFC-normalize, split on whitespace, strip edge punctuation.

    Intra-word hyphens and apostrophes survive; tokens without any remaining
    word character are dropped.
    """
    text = unicodedata.normalize("NFC", text).lower()
    tokens = []
    for chunk in text.split():
        chars = [c for c in chunk if c.isalnum() or c in _KEEP_INNER]
        word = "".join(chars).strip("".join(_KEEP_INNER))
        if any(c.isalnum() for c in word):
            tokens.append(word)
    return tokens


def dialogue_ngrams(d: Dialogue, max_len: int = 4) -> set[tuple[str, ...]]:
    """Distinct token n-grams (1..max_len) over the customer utterances."""
    grams: set[tuple[str, ...]] = set()
    for utt in d.utterances:
        if utt.speaker != "customer":
            continue
        toks = tokenize(utt.text)
        for n in range(1, max_len + 1):
            for i in range(len(toks) - n + 1):
                grams.add(tuple(toks[i : i + n]))
    return grams


def is_stop_phrase(tokens: tuple[str, ...]) -> bool:
    return all(t in STOPWORDS for t in tokens)


@dataclass
class ProductPhraseStats:
    n_with_phrase: int = 0
    k_with_phrase: int = 0
    z_stat: float = 0.0
    p_value: float = 1.0


@dataclass
class PhraseCandidate:
    tokens: tuple[str, ...]
    support: int = 0
    per_product: dict[str, ProductPhraseStats] = field(default_factory=dict)
    significant_products: tuple[str, ...] = ()

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


@dataclass(frozen=True)
class SignificanceResult:
    z_stat: float
    p_value: float
    rate_with: float
    rate_baseline: float


def generate_candidates(
    corpus: Corpus, max_len: int = 4, drop_stop_phrases: bool = False
) -> dict[tuple[str, ...], PhraseCandidate]:
    """All n-grams from customer lines with per-distinct-dialogue support counts.

    ``drop_stop_phrases`` removes n-grams made purely of stopwords; the
    pipeline turns it on, the raw enumeration contract keeps everything.
    """
    if not 1 <= max_len <= 4:
        raise PhrasingError(f"max_len must be in [1, 4], got {max_len}")
    support: dict[tuple[str, ...], int] = {}
    for d in corpus.dialogues:
        for gram in dialogue_ngrams(d, max_len):
            support[gram] = support.get(gram, 0) + 1
    out: dict[tuple[str, ...], PhraseCandidate] = {}
    for gram in sorted(support):
        if drop_stop_phrases and is_stop_phrase(gram):
            continue
        out[gram] = PhraseCandidate(tokens=gram, support=support[gram])
    return out


def filter_by_support(
    cands: dict[tuple[str, ...], PhraseCandidate], min_dialogues: int = 50
) -> dict[tuple[str, ...], PhraseCandidate]:
    return {t: c for t, c in cands.items() if c.support >= min_dialogues}


def two_proportion_ztest(k1: int, n1: int, k2: int, n2: int) -> tuple[float, float]:
    """Pooled two-sided two-proportion z-test; returns (z, p).

    Degenerate pooled rate (0 or 1) yields z=0, p=1 by convention.
    """
    if n1 <= 0 or n2 <= 0:
        raise PhrasingError("z-test requires non-empty groups")
    pooled = (k1 + k2) / (n1 + n2)
    if pooled <= 0.0 or pooled >= 1.0:
        return 0.0, 1.0
    se = math.sqrt(pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2))
    z = (k1 / n1 - k2 / n2) / se
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return z, p


def significance_test(
    phrase: PhraseCandidate | tuple[str, ...], product: str, corpus: Corpus
) -> SignificanceResult:
    """Test one phrase against one product directly on the corpus.

    Compares the outcome-1 rate among dialogues that offer the product and
    contain the phrase to the rate over all dialogues offering the product.
    Raises when the phrase never co-occurs with an offer of the product.
    """
    tokens = phrase.tokens if isinstance(phrase, PhraseCandidate) else tuple(phrase)
    n_all = k_all = n_with = k_with = 0
    for d in corpus.dialogues:
        offer = next((o for o in d.offers if o.product_id == product), None)
        if offer is None:
            continue
        n_all += 1
        k_all += offer.outcome
        if tokens in dialogue_ngrams(d, max_len=len(tokens)):
            n_with += 1
            k_with += offer.outcome
    if n_all == 0:
        raise PhrasingError(f"product {product!r} never offered")
    if n_with == 0:
        raise PhrasingError(f"no co-occurrence of phrase {' '.join(tokens)!r} with product {product!r}")
    z, p = two_proportion_ztest(k_with, n_with, k_all, n_all)
    return SignificanceResult(z_stat=z, p_value=p, rate_with=k_with / n_with, rate_baseline=k_all / n_all)


def compute_product_stats(
    cands: dict[tuple[str, ...], PhraseCandidate], corpus: Corpus
) -> None:
    """Fill per-product (n, k, z, p) for every candidate in one corpus pass."""
    totals: dict[str, list[int]] = {}  # product -> [n_all, k_all]
    counts: dict[tuple[str, ...], dict[str, list[int]]] = {t: {} for t in cands}
    max_len = max((len(t) for t in cands), default=1)
    for d in corpus.dialogues:
        if not d.offers:
            continue
        present = [g for g in dialogue_ngrams(d, max_len) if g in counts]
        for o in d.offers:
            tot = totals.setdefault(o.product_id, [0, 0])
            tot[0] += 1
            tot[1] += o.outcome
            for g in present:
                nk = counts[g].setdefault(o.product_id, [0, 0])
                nk[0] += 1
                nk[1] += o.outcome
    for tokens, cand in cands.items():
        cand.per_product = {}
        for pid, (n, k) in sorted(counts[tokens].items()):
            n_all, k_all = totals[pid]
            z, p = two_proportion_ztest(k, n, k_all, n_all)
            cand.per_product[pid] = ProductPhraseStats(n_with_phrase=n, k_with_phrase=k, z_stat=z, p_value=p)


def select_significant(
    cands: dict[tuple[str, ...], PhraseCandidate],
    alpha: float = 0.01,
    products: list[str] | None = None,
    bonferroni: bool = False,
) -> dict[tuple[str, ...], PhraseCandidate]:
    """Keep candidates significant (p < alpha) for at least one product.

    Expects per_product stats already computed (see compute_product_stats).
    With ``bonferroni`` the threshold becomes alpha / number of tests run.
    """
    if bonferroni:
        n_tests = sum(
            len([p for p in c.per_product if products is None or p in products]) for c in cands.values()
        )
        alpha = alpha / max(n_tests, 1)
    out: dict[tuple[str, ...], PhraseCandidate] = {}
    for tokens, cand in cands.items():
        sig = tuple(
            pid
            for pid, st in sorted(cand.per_product.items())
            if (products is None or pid in products) and st.p_value < alpha
        )
        if sig:
            cand.significant_products = sig
            out[tokens] = cand
    return out


def write_candidates(
    cands: dict[tuple[str, ...], PhraseCandidate], path: str | Path, products: list[str]
) -> None:
    """Candidate table as TSV: tokens, support, then n/k/z/p per product."""
    path = Path(path)
    cols = ["tokens", "support"]
    for pid in products:
        cols += [f"{pid}:n", f"{pid}:k", f"{pid}:z", f"{pid}:p"]
    cols.append("significant_products")
    order = sorted(cands.values(), key=lambda c: (-c.support, c.tokens))
    with path.open("w", encoding="utf-8") as fh:
        fh.write("\t".join(cols) + "\n")
        for cand in order:
            row = [" ".join(cand.tokens), str(cand.support)]
            for pid in products:
                st = cand.per_product.get(pid)
                if st is None:
                    row += ["0", "0", "", ""]
                else:
                    row += [str(st.n_with_phrase), str(st.k_with_phrase), f"{st.z_stat:.12g}", f"{st.p_value:.12g}"]
            row.append(",".join(cand.significant_products))
            fh.write("\t".join(row) + "\n")


def read_candidates(path: str | Path) -> dict[tuple[str, ...], PhraseCandidate]:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        products = []
        for col in header:
            if col.endswith(":n"):
                products.append(col[:-2])
        out: dict[tuple[str, ...], PhraseCandidate] = {}
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            rec = dict(zip(header, parts))
            tokens = tuple(rec["tokens"].split(" "))
            cand = PhraseCandidate(tokens=tokens, support=int(rec["support"]))
            for pid in products:
                if rec.get(f"{pid}:z"):
                    cand.per_product[pid] = ProductPhraseStats(
                        n_with_phrase=int(rec[f"{pid}:n"]),
                        k_with_phrase=int(rec[f"{pid}:k"]),
                        z_stat=float(rec[f"{pid}:z"]),
                        p_value=float(rec[f"{pid}:p"]),
                    )
            sig = rec.get("significant_products", "")
            cand.significant_products = tuple(s for s in sig.split(",") if s)
            out[tokens] = cand
    return out
