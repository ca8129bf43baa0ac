"""Synthetic dialogue corpora with planted contextual effects.

Planted variables get activation probabilities following a power law over
rank, so sorting them by importance reproduces the head-and-tail shape the
evaluation protocol expects.  Outcomes follow a logistic model over a
customer latent trait plus the log-odds of the active variables; per-product
intercepts are calibrated on the realized population so empirical base rates
land on the configured ones.  Tail variables carry larger per-occurrence
effects than head ones (rare but decisive when present).

Everything is deterministic per seed; dialogues are generated in blocks with
per-block derived seeds, so block-parallel generation would keep determinism.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .corpus import Corpus, Dialogue, OfferRecord, Utterance
from .models import CustomerEmbeddings
from .registry import DEFAULT_NEGATION_CUES, ContextualVariable, Registry


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class ProductSpec:
    product_id: str
    base_rate: float
    offer_weight: float = 1.0


DEFAULT_PRODUCTS = (
    ProductSpec("account", 0.24, 2.2),
    ProductSpec("acquiring", 0.25, 1.0),
    ProductSpec("salary", 0.41, 1.0),
    ProductSpec("leasing", 0.18, 0.35),
)


@dataclass(frozen=True)
class SynthConfig:
    seed: int
    n_dialogues: int = 5000
    n_customers: int | None = None  # None: one customer per dialogue
    products: tuple[ProductSpec, ...] = DEFAULT_PRODUCTS
    offer_count_probs: tuple[float, ...] = (0.55, 0.35, 0.10)  # P(1, 2, 3 offers)
    n_variables: int = 50
    zipf_exponent: float = 1.1
    mean_active_vars: float = 3.0
    effect_head: float = 0.7  # |log-odds| at rank 1
    effect_tail: float = 2.0  # |log-odds| at the last rank
    negative_share: float = 0.3
    phrases_per_variable: int = 2
    filler_vocab_size: int = 1200
    negation_rate: float = 0.0
    trait_coef: float = 1.0
    embed_dim: int = 16
    embed_noise: float = 0.75
    min_customer_lines: int = 3
    max_customer_lines: int = 6
    min_words: int = 5
    max_words: int = 10
    block_size: int = 1000

    def validate(self) -> None:
        if self.n_variables < 1:
            raise SynthError("n_planted_variables must be >= 1")
        if self.zipf_exponent < 0:
            raise SynthError("zipf_exponent must be >= 0")
        for p in self.products:
            if not 0 < p.base_rate < 1:
                raise SynthError(f"base rate for {p.product_id} must be in (0, 1)")
        if abs(sum(self.offer_count_probs) - 1.0) > 1e-9:
            raise SynthError("offer_count_probs must sum to 1")
        if len(self.offer_count_probs) > len(self.products):
            raise SynthError("cannot offer more products than exist")
        probs = self.activation_probs()
        if probs.max() > 1.0:
            raise SynthError(
                f"infeasible config: expected activation {probs.max():.3f} > 1 for the top variable"
            )

    def activation_probs(self) -> np.ndarray:
        ranks = np.arange(1, self.n_variables + 1, dtype=np.float64)
        weights = ranks ** (-self.zipf_exponent)
        return self.mean_active_vars * weights / weights.sum()


@dataclass
class VariableTruth:
    rank: int  # 1-based
    phrases: tuple[tuple[str, ...], ...]
    logodds: dict[str, float]  # product_id -> effect
    activation_prob: float
    realized_frequency: int = 0


@dataclass
class GroundTruth:
    variables: list[VariableTruth]
    dialogue_active: dict[str, tuple[int, ...]]  # dialogue_id -> active ranks
    dialogue_probs: dict[str, dict[str, float]]  # dialogue_id -> product -> true p
    intercepts: dict[str, float]

    def to_json(self, path: str | Path) -> None:
        payload = {
            "variables": [
                {
                    "rank": v.rank,
                    "phrases": [" ".join(p) for p in v.phrases],
                    "logodds": v.logodds,
                    "activation_prob": v.activation_prob,
                    "realized_frequency": v.realized_frequency,
                }
                for v in self.variables
            ],
            "dialogue_active": {k: list(v) for k, v in self.dialogue_active.items()},
            "dialogue_probs": self.dialogue_probs,
            "intercepts": self.intercepts,
        }
        Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")

    @classmethod
    def from_json(cls, path: str | Path) -> "GroundTruth":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        variables = [
            VariableTruth(
                rank=v["rank"],
                phrases=tuple(tuple(p.split(" ")) for p in v["phrases"]),
                logodds=v["logodds"],
                activation_prob=v["activation_prob"],
                realized_frequency=v["realized_frequency"],
            )
            for v in payload["variables"]
        ]
        return cls(
            variables=variables,
            dialogue_active={k: tuple(v) for k, v in payload["dialogue_active"].items()},
            dialogue_probs=payload["dialogue_probs"],
            intercepts=payload["intercepts"],
        )


_LETTERS = np.array(list(string.ascii_lowercase))


def _pseudo_words(rng: np.random.Generator, count: int, taken: set[str]) -> list[str]:
    words: list[str] = []
    seen = set(taken)
    while len(words) < count:
        length = int(rng.integers(4, 9))
        w = "".join(rng.choice(_LETTERS, size=length))
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))


def _calibrate_intercept(linear: np.ndarray, target: float) -> float:
    lo, hi = -25.0, 25.0
    for _ in range(80):
        mid = (lo + hi) / 2.0
        if _sigmoid(mid + linear).mean() < target:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2.0


def generate(config: SynthConfig) -> tuple[Corpus, CustomerEmbeddings, GroundTruth]:
    config.validate()
    seed = config.seed
    nv = config.n_variables
    nd = config.n_dialogues
    probs = config.activation_probs()

    rng_vocab = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    cues = set(DEFAULT_NEGATION_CUES)
    filler = _pseudo_words(rng_vocab, config.filler_vocab_size, cues)
    template_words = _pseudo_words(
        rng_vocab, nv * config.phrases_per_variable * 3, cues | set(filler)
    )

    rng_vars = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    word_iter = iter(template_words)
    ranks = np.arange(1, nv + 1, dtype=np.float64)
    if nv > 1:
        mags = np.exp(
            np.log(config.effect_head)
            + (np.log(config.effect_tail) - np.log(config.effect_head)) * (ranks - 1) / (nv - 1)
        )
    else:
        mags = np.array([config.effect_head])
    signs = np.where(rng_vars.random(nv) < config.negative_share, -1.0, 1.0)
    betas = signs * mags

    variables: list[VariableTruth] = []
    for v in range(nv):
        phrases = []
        for _ in range(config.phrases_per_variable):
            length = int(rng_vars.integers(2, 4))
            phrases.append(tuple(next(word_iter) for _ in range(length)))
        variables.append(
            VariableTruth(
                rank=v + 1,
                phrases=tuple(phrases),
                logodds={p.product_id: float(betas[v]) for p in config.products},
                activation_prob=float(probs[v]),
            )
        )

    n_customers = config.n_customers or nd
    rng_cust = np.random.default_rng(np.random.SeedSequence([seed, 3]))
    traits = rng_cust.standard_normal(n_customers)
    emb = rng_cust.standard_normal((n_customers, config.embed_dim))
    emb[:, 0] = traits + config.embed_noise * rng_cust.standard_normal(n_customers)
    customer_ids = tuple(f"c{i:07d}" for i in range(n_customers))
    embeddings = CustomerEmbeddings(ids=customer_ids, matrix=emb.astype(np.float32))

    offer_weights = np.array([p.offer_weight for p in config.products], dtype=np.float64)
    offer_weights = offer_weights / offer_weights.sum()
    product_ids = [p.product_id for p in config.products]

    # Pass 1: per-dialogue structure (customer, mentions, offers, text).
    dialogue_customer = np.empty(nd, dtype=np.int64)
    active_sets: list[np.ndarray] = []
    offers_per_dialogue: list[list[int]] = []
    texts: list[list[tuple[str, str]]] = []  # (speaker, text) lines
    realized = np.zeros(nv, dtype=np.int64)

    for block_start in range(0, nd, config.block_size):
        block_end = min(block_start + config.block_size, nd)
        bs = block_end - block_start
        rng = np.random.default_rng(np.random.SeedSequence([seed, 4, block_start]))
        custs = (
            np.arange(block_start, block_end)
            if config.n_customers is None
            else rng.integers(0, n_customers, bs)
        )
        mention = rng.random((bs, nv)) < probs[None, :]
        negated = mention & (rng.random((bs, nv)) < config.negation_rate)
        active = mention & ~negated
        n_offers = rng.choice(
            np.arange(1, len(config.offer_count_probs) + 1), size=bs, p=config.offer_count_probs
        )
        n_lines = rng.integers(config.min_customer_lines, config.max_customer_lines + 1, bs)

        for i in range(bs):
            gi = block_start + i
            dialogue_customer[gi] = custs[i]
            act = np.flatnonzero(active[i])
            active_sets.append(act)
            realized[act] += 1
            offers = list(rng.choice(len(product_ids), size=int(n_offers[i]), replace=False, p=offer_weights))
            offers_per_dialogue.append(offers)

            lines: list[list[str]] = []
            for _ in range(int(n_lines[i])):
                n_words = int(rng.integers(config.min_words, config.max_words + 1))
                words = [filler[w] for w in rng.integers(0, len(filler), n_words)]
                lines.append(words)
            # Each mention gets its own line so negation scope never leaks
            # across phrases; the truth stays exactly scan-reproducible.
            for v in np.flatnonzero(mention[i]):
                phrase = variables[v].phrases[int(rng.integers(0, config.phrases_per_variable))]
                head = [filler[w] for w in rng.integers(0, len(filler), int(rng.integers(2, 5)))]
                tail = [filler[w] for w in rng.integers(0, len(filler), int(rng.integers(1, 4)))]
                cue = ["not"] if negated[i, v] else []
                li = int(rng.integers(0, len(lines) + 1))
                lines.insert(li, head + cue + list(phrase) + tail)
            dialogue_lines: list[tuple[str, str]] = []
            for li, words in enumerate(lines):
                dialogue_lines.append(("manager", " ".join(filler[w] for w in rng.integers(0, len(filler), 4))))
                dialogue_lines.append(("customer", " ".join(words)))
            texts.append(dialogue_lines)

    for v, count in enumerate(realized):
        variables[v].realized_frequency = int(count)

    # Pass 2: calibrate intercepts per product on the realized offer instances.
    base_linear = config.trait_coef * traits[dialogue_customer]
    context_effect = np.zeros(nd)
    for gi, act in enumerate(active_sets):
        if act.size:
            context_effect[gi] = betas[act].sum()
    linear = base_linear + context_effect

    intercepts: dict[str, float] = {}
    outcome_by_product: dict[int, np.ndarray] = {}
    prob_by_product: dict[int, np.ndarray] = {}
    for pi, pspec in enumerate(config.products):
        mask = np.array([pi in offs for offs in offers_per_dialogue])
        if not mask.any():
            intercepts[pspec.product_id] = 0.0
            continue
        b = _calibrate_intercept(linear[mask], pspec.base_rate)
        intercepts[pspec.product_id] = float(b)
        p = _sigmoid(b + linear)
        rng_out = np.random.default_rng(np.random.SeedSequence([seed, 5, pi]))
        outcome_by_product[pi] = (rng_out.random(nd) < p).astype(np.int64)
        prob_by_product[pi] = p

    # Assemble corpus objects.
    dialogues: list[Dialogue] = []
    dialogue_active: dict[str, tuple[int, ...]] = {}
    dialogue_probs: dict[str, dict[str, float]] = {}
    start_date = date(2021, 7, 1)
    for gi in range(nd):
        did = f"d{gi:07d}"
        utts = tuple(
            Utterance(speaker=spk, text=txt, index=i) for i, (spk, txt) in enumerate(texts[gi])
        )
        offers = tuple(
            OfferRecord(product_id=product_ids[pi], outcome=int(outcome_by_product[pi][gi]))
            for pi in sorted(offers_per_dialogue[gi])
        )
        dialogues.append(
            Dialogue(
                dialogue_id=did,
                customer_id=customer_ids[dialogue_customer[gi]],
                utterances=utts,
                offers=offers,
                timestamp=start_date + timedelta(days=int(gi % 90)),
            )
        )
        dialogue_active[did] = tuple(int(v) + 1 for v in active_sets[gi])
        dialogue_probs[did] = {
            product_ids[pi]: float(prob_by_product[pi][gi]) for pi in sorted(offers_per_dialogue[gi])
        }

    corpus = Corpus(dialogues=tuple(dialogues), product_catalog=tuple(sorted(product_ids)))
    truth = GroundTruth(
        variables=variables,
        dialogue_active=dialogue_active,
        dialogue_probs=dialogue_probs,
        intercepts=intercepts,
    )
    return corpus, embeddings, truth


def truth_registry(truth: GroundTruth) -> Registry:
    """Registry built straight from the planted variables (curation bypass)."""
    variables = tuple(
        ContextualVariable(
            variable_id=f"ctx{v.rank:05d}",
            source_cluster_id=v.rank,
            phrases=tuple(sorted(v.phrases)),
            polarity="positive",
            paired_variable=None,
            significant_products=tuple(sorted(v.logodds)),
        )
        for v in truth.variables
    )
    return Registry(variables=variables)


@dataclass(frozen=True)
class RecoveryScore:
    precision: float
    recall: float
    recovered_ranks: tuple[int, ...]
    n_sets: int


def score_recovery(phrase_sets, truth: GroundTruth, eligible_ranks=None) -> RecoveryScore:
    """Precision/recall of a mined phrase-set collection against the planted variables.

    ``phrase_sets`` is a Registry or an iterable of phrase collections (each a
    set/list of token tuples).  A planted variable counts as recovered when
    some set intersects its templates.  ``eligible_ranks`` restricts recall to
    a subset of planted variables (e.g. the well-supported strong-effect ones).
    """
    if isinstance(phrase_sets, Registry):
        sets = [set(v.phrases) for v in phrase_sets.variables]
    else:
        sets = [set(tuple(p) for p in s) for s in phrase_sets]
    template_owner: dict[tuple[str, ...], int] = {}
    for v in truth.variables:
        for ph in v.phrases:
            template_owner[ph] = v.rank
    recovered: set[int] = set()
    matched_sets = 0
    for s in sets:
        owners = {template_owner[ph] for ph in s if ph in template_owner}
        if owners:
            matched_sets += 1
            recovered.update(owners)
    if eligible_ranks is None:
        eligible = {v.rank for v in truth.variables}
    else:
        eligible = set(eligible_ranks)
    recovered_eligible = recovered & eligible
    precision = matched_sets / len(sets) if sets else 1.0
    recall = len(recovered_eligible) / len(eligible) if eligible else 1.0
    return RecoveryScore(
        precision=precision,
        recall=recall,
        recovered_ranks=tuple(sorted(recovered_eligible)),
        n_sets=len(sets),
    )
