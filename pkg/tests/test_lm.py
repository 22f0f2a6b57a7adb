import math

import numpy as np
import pytest

from cipherpipe.lm import (ENGLISH_ALPHABET, normalize_text, lm_train,
                           lm_logprob, save_lm, load_lm)


class TestNormalizeText:
    def test_lowercases_and_strips(self):
        assert normalize_text("Ab, C!\nd", ENGLISH_ALPHABET) == "abcd"

    def test_restricted_alphabet(self):
        assert normalize_text("abcabc", ("a", "b")) == "abab"


class TestBigramCounts:
    def test_unsmoothed_conditionals(self):
        lm = lm_train("abab", order=2, delta=0.0, alphabet=("a", "b"))
        assert math.exp(lm.logp[lm.index("a"), lm.index("b")]) == pytest.approx(1.0)
        assert math.exp(lm.logp[lm.index("b"), lm.index("a")]) == pytest.approx(1.0)
        # line start: 'a' is the only observed first letter
        boundary = lm.A
        assert math.exp(lm.logp[boundary, lm.index("a")]) == pytest.approx(1.0)

    def test_additive_smoothing(self):
        lm = lm_train("abab", order=2, delta=1.0, alphabet=("a", "b"))
        # count(a->b) = 2, row total 2, smoothed (2+1)/(2+2)
        assert math.exp(lm.logp[lm.index("a"), lm.index("b")]) == pytest.approx(0.75)
        assert math.exp(lm.logp[lm.index("a"), lm.index("a")]) == pytest.approx(0.25)

    def test_rows_normalize(self):
        lm = lm_train("the quick brown fox jumps over the lazy dog", order=2, delta=0.5)
        sums = np.exp(lm.logp).sum(axis=-1)
        assert np.allclose(sums, 1.0)

    def test_unseen_history_is_uniform_when_unsmoothed(self):
        lm = lm_train("aaa", order=2, delta=0.0, alphabet=("a", "b"))
        row = np.exp(lm.logp[lm.index("b")])
        assert np.allclose(row, 1.0 / 2)


class TestTrigram:
    def test_rows_normalize(self):
        lm = lm_train("banana bandana", order=3, delta=0.1)
        sums = np.exp(lm.logp).sum(axis=-1)
        assert lm.logp.shape == (27, 27, 26)
        assert np.allclose(sums, 1.0)

    def test_conditional_value(self):
        lm = lm_train("banana", order=3, delta=0.0, alphabet=("a", "b", "n"))
        a, n = lm.index("a"), lm.index("n")
        # history "an" -> 'a' both times
        assert math.exp(lm.logp[a, n, a]) == pytest.approx(1.0)

    def test_order_must_be_2_or_3(self):
        with pytest.raises(ValueError):
            lm_train("abc", order=4)


class TestLogprob:
    def test_matches_table_lookups(self):
        lm = lm_train("abab\nba", order=2, delta=0.3, alphabet=("a", "b"))
        a, b, bd = lm.index("a"), lm.index("b"), lm.A
        expect = lm.logp[bd, a] + lm.logp[a, b] + lm.logp[b, b]
        assert lm_logprob(lm, "abb") == pytest.approx(expect)

    def test_empty_sequence_scores_zero(self):
        lm = lm_train("abab", order=2, delta=0.1, alphabet=("a", "b"))
        assert lm_logprob(lm, "") == 0.0

    def test_trigram_fits_training_text_at_least_as_well(self, corpus):
        text = normalize_text(corpus[:20000], ENGLISH_ALPHABET)
        lm2 = lm_train(text, order=2, delta=0.0)
        lm3 = lm_train(text, order=3, delta=0.0)
        assert lm_logprob(lm3, text) >= lm_logprob(lm2, text) - 1e-6

    def test_out_of_alphabet_symbol_raises(self):
        lm = lm_train("abab", order=2, delta=0.1, alphabet=("a", "b"))
        with pytest.raises(ValueError):
            lm_logprob(lm, "abz")


class TestSaveLoad:
    def test_roundtrip(self, tmp_path):
        lm = lm_train("the cat sat on the mat", order=2, delta=0.2)
        path = tmp_path / "lm.json"
        save_lm(lm, path)
        loaded = load_lm(path)
        assert loaded.order == lm.order
        assert loaded.alphabet == lm.alphabet
        assert np.allclose(loaded.logp, lm.logp)

    def test_trigram_roundtrip(self, tmp_path):
        lm = lm_train("banana bandana cabana", order=3, delta=0.1)
        path = tmp_path / "lm3.json"
        save_lm(lm, path)
        assert np.allclose(load_lm(path).logp, lm.logp)
