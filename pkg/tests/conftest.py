import numpy as np
import pytest

from ctxtail.corpus import Corpus, Dialogue, OfferRecord, Utterance


def make_dialogue(did, cid, customer_texts, offers, manager_texts=(), timestamp=None):
    utts = []
    for i, text in enumerate(customer_texts):
        utts.append(Utterance(speaker="customer", text=text, index=len(utts)))
        if i < len(manager_texts):
            utts.append(Utterance(speaker="manager", text=manager_texts[i], index=len(utts)))
    return Dialogue(
        dialogue_id=did,
        customer_id=cid,
        utterances=tuple(utts),
        offers=tuple(OfferRecord(product_id=p, outcome=o) for p, o in offers),
        timestamp=timestamp,
    )


def make_corpus(dialogues):
    catalog = tuple(sorted({o.product_id for d in dialogues for o in d.offers}))
    return Corpus(dialogues=tuple(dialogues), product_catalog=catalog)


def random_corpus(seed, n_dialogues=40, n_customers=25, products=("A", "B", "C"), vocab=None):
    """Small random corpus for property tests; may contain repeat calls."""
    rng = np.random.default_rng(seed)
    vocab = vocab or ["alpha", "beta", "gamma", "delta", "open", "store", "hire", "new"]
    dialogues = []
    for i in range(n_dialogues):
        n_lines = int(rng.integers(0, 4))
        texts = [
            " ".join(rng.choice(vocab, size=int(rng.integers(1, 6))))
            for _ in range(n_lines)
        ]
        n_offers = int(rng.integers(0, 3))
        chosen = rng.choice(len(products), size=min(n_offers, len(products)), replace=False)
        offers = [(products[int(c)], int(rng.integers(0, 2))) for c in chosen]
        dialogues.append(
            make_dialogue(
                f"d{i:04d}", f"c{int(rng.integers(0, n_customers)):04d}", texts, offers
            )
        )
    return make_corpus(dialogues)


@pytest.fixture
def three_dialogue_corpus():
    return make_corpus(
        [
            make_dialogue("d1", "c1", ["we want to open a new store", "we hire people"], [("A", 1)]),
            make_dialogue("d2", "c2", ["no plans right now", "maybe later"], [("A", 0), ("B", 1)]),
            make_dialogue("d3", "c3", ["we open soon", "thinking about it"], [("B", 0)]),
        ]
    )
