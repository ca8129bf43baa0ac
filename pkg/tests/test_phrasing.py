import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from ctxtail.phrasing import (
    PhrasingError,
    compute_product_stats,
    dialogue_ngrams,
    filter_by_support,
    generate_candidates,
    is_stop_phrase,
    read_candidates,
    select_significant,
    significance_test,
    tokenize,
    two_proportion_ztest,
    write_candidates,
)

from conftest import make_corpus, make_dialogue, random_corpus


class TestTokenize:
    def test_lowercase_and_punctuation(self):
        assert tokenize("We OPEN, soon!") == ["we", "open", "soon"]

    def test_keeps_intraword_hyphen_apostrophe(self):
        assert tokenize("don't re-open (now)") == ["don't", "re-open", "now"]

    def test_drops_pure_punct(self):
        assert tokenize("... -- !!") == []


class TestGenerateCandidates:
    def test_enumeration_single_line(self):
        c = make_corpus([make_dialogue("d1", "c1", ["we open soon"], [("A", 1)])])
        cands = generate_candidates(c, max_len=2)
        assert set(cands) == {("we",), ("open",), ("soon",), ("we", "open"), ("open", "soon")}

    def test_manager_only_dialogue_contributes_nothing(self):
        from ctxtail.corpus import Corpus, Dialogue, OfferRecord, Utterance

        d = Dialogue(
            dialogue_id="d1",
            customer_id="c1",
            utterances=(Utterance("manager", "please buy this", 0),),
            offers=(OfferRecord("A", 0),),
        )
        cands = generate_candidates(Corpus(dialogues=(d,), product_catalog=("A",)), max_len=2)
        assert cands == {}

    def test_support_counts_distinct_dialogues(self):
        c = make_corpus(
            [make_dialogue("d1", "c1", ["ping ping ping"], [("A", 1)]),
             make_dialogue("d2", "c2", ["ping"], [("A", 0)])]
        )
        cands = generate_candidates(c, max_len=1)
        assert cands[("ping",)].support == 2  # 3 occurrences in d1 count once

    def test_max_len_bounds(self, three_dialogue_corpus):
        with pytest.raises(PhrasingError):
            generate_candidates(three_dialogue_corpus, max_len=5)

    def test_stop_phrase_filter(self):
        c = make_corpus([make_dialogue("d1", "c1", ["we are the best"], [("A", 1)])])
        cands = generate_candidates(c, max_len=2, drop_stop_phrases=True)
        assert ("we", "are") not in cands
        assert ("the", "best") in cands
        assert is_stop_phrase(("we", "are"))


class TestFilterBySupport:
    def test_boundary(self):
        cands = generate_candidates(
            make_corpus(
                [make_dialogue(f"d{i}", f"c{i}", ["hit"], [("A", 1)]) for i in range(50)]
                + [make_dialogue(f"e{i}", f"x{i}", ["near"], [("A", 1)]) for i in range(49)]
            ),
            max_len=1,
        )
        kept = filter_by_support(cands, min_dialogues=50)
        assert ("hit",) in kept
        assert ("near",) not in kept

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 5000), st.integers(1, 6))
    def test_matches_brute_force_rescan(self, seed, threshold):
        c = random_corpus(seed, n_dialogues=50)
        cands = generate_candidates(c, max_len=3)
        kept = filter_by_support(cands, min_dialogues=threshold)
        for tokens, cand in cands.items():
            # linear rescan oracle
            support = sum(1 for d in c.dialogues if tokens in dialogue_ngrams(d, 3))
            assert support == cand.support
            assert (tokens in kept) == (support >= threshold)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 5000), st.integers(1, 5))
    def test_monotone_in_threshold(self, seed, threshold):
        c = random_corpus(seed, n_dialogues=30)
        cands = generate_candidates(c, max_len=2)
        lo = filter_by_support(cands, min_dialogues=threshold)
        hi = filter_by_support(cands, min_dialogues=threshold + 1)
        assert set(hi) <= set(lo)


class TestSignificance:
    def test_zero_effect(self):
        z, p = two_proportion_ztest(10, 100, 100, 1000)
        assert z == pytest.approx(0.0, abs=1e-12)
        assert p == pytest.approx(1.0, abs=1e-12)

    def test_strong_effect_matches_statistical_oracle(self):
        # with-phrase 30/100 against baseline 100/1000
        z, p = two_proportion_ztest(30, 100, 100, 1000)
        pooled = 130 / 1100
        se = math.sqrt(pooled * (1 - pooled) * (1 / 100 + 1 / 1000))
        z_oracle = (0.3 - 0.1) / se
        p_oracle = 2 * sps.norm.sf(abs(z_oracle))
        assert z == pytest.approx(z_oracle, rel=1e-12)
        assert z == pytest.approx(5.907, abs=2e-3)
        assert p == pytest.approx(p_oracle, rel=1e-9)
        assert p < 0.01

    def test_degenerate_pooled_rate(self):
        assert two_proportion_ztest(0, 10, 0, 100) == (0.0, 1.0)
        assert two_proportion_ztest(10, 10, 100, 100) == (0.0, 1.0)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 60), st.integers(1, 60), st.integers(1, 60), st.integers(1, 60))
    def test_symmetry_and_oracle(self, k1, n1, k2, n2):
        k1, k2 = min(k1, n1), min(k2, n2)
        z, p = two_proportion_ztest(k1, n1, k2, n2)
        z_sw, p_sw = two_proportion_ztest(k2, n2, k1, n1)
        assert z == pytest.approx(-z_sw, abs=1e-12)
        assert p == pytest.approx(p_sw, abs=1e-12)
        assert 0.0 <= p <= 1.0
        pooled = (k1 + k2) / (n1 + n2)
        if 0 < pooled < 1:
            p_oracle = 2 * sps.norm.sf(abs(z))
            assert p == pytest.approx(p_oracle, rel=1e-9, abs=1e-300)

    def test_significance_test_no_cooccurrence(self, three_dialogue_corpus):
        with pytest.raises(PhrasingError, match="no co-occurrence"):
            significance_test(("missing", "phrase"), "A", three_dialogue_corpus)

    def test_significance_test_end_to_end(self):
        # phrase present in 30 of 100 product dialogues; with-phrase rate 0.8 vs thin baseline
        dialogues = []
        for i in range(100):
            text = "magic words here" if i < 30 else "plain filler line"
            outcome = 1 if (i < 24 if i < 30 else i % 10 == 0) else 0
            dialogues.append(make_dialogue(f"d{i}", f"c{i}", [text], [("A", outcome)]))
        res = significance_test(("magic", "words"), "A", make_corpus(dialogues))
        assert res.rate_with == pytest.approx(0.8)
        n_pos = 24 + 7  # dialogues 30..99 with i % 10 == 0
        assert res.rate_baseline == pytest.approx(n_pos / 100)
        assert res.p_value < 0.01


class TestSelectSignificant:
    def _corpus_with_planted(self, n=400):
        rng = np.random.default_rng(0)
        dialogues = []
        for i in range(n):
            has_phrase = i % 4 == 0
            text = "golden signal phrase today" if has_phrase else "noise words only today"
            p = 0.8 if has_phrase else 0.2
            outcome = int(rng.random() < p)
            dialogues.append(make_dialogue(f"d{i}", f"c{i}", [text], [("A", outcome)]))
        return make_corpus(dialogues)

    def test_planted_phrase_selected(self):
        c = self._corpus_with_planted()
        cands = generate_candidates(c, max_len=2)
        compute_product_stats(cands, c)
        selected = select_significant(cands, alpha=0.01)
        assert ("golden", "signal") in selected
        assert selected[("golden", "signal")].significant_products == ("A",)

    def test_alpha_boundary(self):
        c = self._corpus_with_planted()
        cands = generate_candidates(c, max_len=1)
        compute_product_stats(cands, c)
        p = cands[("golden",)].per_product["A"].p_value
        selected_tight = select_significant(cands, alpha=p)  # strict inequality
        assert ("golden",) not in selected_tight or p < cands[("golden",)].per_product["A"].p_value
        selected_loose = select_significant(cands, alpha=p * 1.0000001)
        assert ("golden",) in selected_loose

    def test_zero_effect_phrase_dropped(self):
        # "today" appears in every dialogue, so its with-phrase rate equals
        # the baseline exactly and it can never be significant.
        c = self._corpus_with_planted()
        cands = generate_candidates(c, max_len=1)
        compute_product_stats(cands, c)
        selected = select_significant(cands, alpha=0.01)
        assert ("today",) not in selected

    def test_counts_match_scalar_contract(self):
        c = self._corpus_with_planted(n=120)
        cands = generate_candidates(c, max_len=2)
        compute_product_stats(cands, c)
        st_ = cands[("golden", "signal")].per_product["A"]
        res = significance_test(("golden", "signal"), "A", c)
        assert st_.z_stat == pytest.approx(res.z_stat, rel=1e-12)
        assert st_.p_value == pytest.approx(res.p_value, rel=1e-12)

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 3000))
    def test_counts_match_brute_force(self, seed):
        c = random_corpus(seed, n_dialogues=50)
        cands = generate_candidates(c, max_len=2)
        compute_product_stats(cands, c)
        for tokens, cand in list(cands.items())[::7]:
            for pid, stats in cand.per_product.items():
                n = k = 0
                for d in c.dialogues:
                    offer = next((o for o in d.offers if o.product_id == pid), None)
                    if offer is not None and tokens in dialogue_ngrams(d, 2):
                        n += 1
                        k += offer.outcome
                assert (stats.n_with_phrase, stats.k_with_phrase) == (n, k)
                assert stats.k_with_phrase <= stats.n_with_phrase <= cand.support


def test_candidate_table_roundtrip(tmp_path):
    c = random_corpus(3, n_dialogues=30)
    cands = generate_candidates(c, max_len=2)
    compute_product_stats(cands, c)
    select_significant(cands, alpha=0.5)
    path = tmp_path / "cands.tsv"
    write_candidates(cands, path, products=list(c.product_catalog))
    again = read_candidates(path)
    assert set(again) == set(cands)
    for tokens in cands:
        a, b = cands[tokens], again[tokens]
        assert a.support == b.support
        for pid in a.per_product:
            assert a.per_product[pid].n_with_phrase == b.per_product[pid].n_with_phrase
            assert a.per_product[pid].p_value == pytest.approx(b.per_product[pid].p_value, rel=1e-9)
