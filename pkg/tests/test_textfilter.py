"""Discriminative token scoring and the keep-mask construction."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import reference
from conftest import token_sequence, unit
from segros.errors import InputError, ParameterError
from segros.numerics import Rng
from segros.textfilter import (
    TokenSequence,
    filter_text_tokens,
    inter_affinity_scores,
    intra_affinity_scores,
)

E = math.e


def random_pair(seed, n_text=5, n_patches=7, dim=6, n_special=1):
    r = Rng(seed)
    text = token_sequence(r.normal((n_text, dim)), special=range(n_special))
    image = token_sequence(r.normal((n_patches, dim)))
    return text, image


class TestTokenSequence:
    def test_rejects_empty(self):
        with pytest.raises(InputError):
            TokenSequence(np.zeros((0, 3)), np.zeros(0, dtype=bool))

    def test_rejects_flag_length_mismatch(self):
        with pytest.raises(InputError):
            TokenSequence(np.zeros((2, 3)), np.zeros(3, dtype=bool))

    def test_content_indices(self):
        seq = token_sequence(np.eye(4), special=[0, 2])
        np.testing.assert_array_equal(seq.content_indices, [1, 3])


class TestIntraScores:
    def test_single_content_token_scores_one(self):
        seq = token_sequence([[1.0, 2.0], [0.5, 0.5]], special=[0])
        scores = intra_affinity_scores(seq)
        assert scores[1] == pytest.approx(1.0)
        assert scores[0] == -np.inf

    def test_mass_totals_content_count(self):
        text, _ = random_pair(3, n_text=9, n_special=2)
        scores = intra_affinity_scores(text)
        assert scores[text.content_indices].sum() == pytest.approx(7.0, abs=1e-5)

    def test_three_orthonormal_tokens_all_score_one(self):
        seq = token_sequence(np.eye(3, 5))
        scores = intra_affinity_scores(seq)
        np.testing.assert_allclose(scores, np.ones(3), atol=1e-12)

    def test_orthonormal_case_matches_scalar_oracle(self):
        rows = np.eye(3, 5).tolist()
        seq = token_sequence(rows)
        expected = reference.intra_scores(rows, [False] * 3, 1.0)
        np.testing.assert_allclose(intra_affinity_scores(seq)[:3], expected, rtol=1e-12)

    def test_all_special_rejected(self):
        with pytest.raises(InputError):
            intra_affinity_scores(token_sequence(np.eye(2), special=[0, 1]))

    @given(st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=60, deadline=None)
    def test_matches_scalar_oracle_on_random_inputs(self, seed):
        text, _ = random_pair(seed, n_text=4, dim=5)
        got = intra_affinity_scores(text, temperature=0.8)
        expected = reference.intra_scores(
            text.embeddings.tolist(), text.special_flags.tolist(), 0.8
        )
        for j in text.content_indices:
            assert got[j] == pytest.approx(expected[j], rel=1e-10)


class TestInterScores:
    def test_single_content_token_collects_all_patches(self):
        text = token_sequence([[1.0, 0.0], [0.0, 1.0]], special=[0])
        image = token_sequence(Rng(0).normal((6, 2)))
        scores = inter_affinity_scores(text, image)
        assert scores[1] == pytest.approx(6.0)

    def test_identical_tokens_split_mass_evenly(self):
        text = token_sequence([[0.3, 0.4], [0.3, 0.4]])
        image = token_sequence(Rng(1).normal((10, 2)))
        scores = inter_affinity_scores(text, image)
        np.testing.assert_allclose(scores, [5.0, 5.0], atol=1e-10)

    def test_planted_eight_of_ten_patches_exact(self):
        # t0 = e0 matches 8 patches exactly; t1 = e1 orthogonal to every
        # patch; the 2 remaining patches e2 are orthogonal to both tokens.
        # Matching patch rows softmax to [e/(e+1), 1/(e+1)], neutral rows to
        # [1/2, 1/2], so s(t0) = 8e/(e+1) + 1 and s(t1) = 8/(e+1) + 1.
        dim = 4
        text = token_sequence([unit(dim, 3), unit(dim, 0), unit(dim, 1)], special=[0])
        image = token_sequence([unit(dim, 0)] * 8 + [unit(dim, 2)] * 2)
        scores = inter_affinity_scores(text, image)
        assert scores[1] == pytest.approx(8 * E / (E + 1) + 1, rel=1e-12)
        assert scores[2] == pytest.approx(8 / (E + 1) + 1, rel=1e-12)
        assert scores[1] > scores[2]

    def test_mass_totals_patch_count(self):
        text, image = random_pair(17)
        scores = inter_affinity_scores(text, image)
        assert scores[text.content_indices].sum() == pytest.approx(7.0, abs=1e-4)

    def test_dim_mismatch_rejected(self):
        with pytest.raises(InputError):
            inter_affinity_scores(token_sequence(np.eye(2)), token_sequence(np.eye(3)))

    @given(st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=60, deadline=None)
    def test_matches_scalar_oracle_on_random_inputs(self, seed):
        text, image = random_pair(seed, n_text=4, n_patches=5, dim=5)
        got = inter_affinity_scores(text, image, temperature=1.3)
        expected = reference.inter_scores(
            text.embeddings.tolist(), text.special_flags.tolist(), image.embeddings.tolist(), 1.3
        )
        for j in text.content_indices:
            assert got[j] == pytest.approx(expected[j], rel=1e-10)


class TestFilterTextTokens:
    def test_keep_count_examples(self):
        text, image = random_pair(0, n_text=6, n_special=1)  # L_eff = 5
        assert filter_text_tokens(text, image, keep_ratio=0.4).keep_count == 2
        small, _ = random_pair(0, n_text=3, n_special=1)  # L_eff = 2
        assert filter_text_tokens(small, image, keep_ratio=0.4).keep_count == 1

    def test_keep_count_formula(self):
        for seed in range(10):
            text, image = random_pair(seed, n_text=8, n_special=2)
            res = filter_text_tokens(text, image, keep_ratio=0.5)
            assert res.keep_count == max(1, math.floor(0.5 * 6 + 1e-9))
            assert res.kept_indices.size == res.keep_count
            assert res.mask.sum() == res.keep_count

    def test_planted_token_kept_and_orthogonal_dropped(self):
        # equal intra scores by symmetry, so the inter margin decides
        dim = 4
        text = token_sequence([unit(dim, 3), unit(dim, 0), unit(dim, 1)], special=[0])
        image = token_sequence([unit(dim, 0)] * 8 + [unit(dim, 2)] * 2)
        res = filter_text_tokens(text, image, keep_ratio=0.5)
        np.testing.assert_array_equal(res.kept_indices, [1])
        assert not res.mask[2]

    def test_specials_never_kept(self):
        for seed in range(20):
            text, image = random_pair(seed, n_text=6, n_special=2)
            res = filter_text_tokens(text, image, keep_ratio=1.0)
            assert not res.mask[text.special_flags].any()

    def test_scale_robustness(self):
        text, image = random_pair(5)
        base = filter_text_tokens(text, image, keep_ratio=0.6)
        scaled_text = TokenSequence(37.5 * text.embeddings, text.special_flags.copy())
        scaled = filter_text_tokens(scaled_text, image, keep_ratio=0.6)
        np.testing.assert_array_equal(base.kept_indices, scaled.kept_indices)

    def test_monotone_selection(self):
        for seed in range(20):
            text, image = random_pair(seed, n_text=7)
            res = filter_text_tokens(text, image, keep_ratio=0.5)
            dropped = np.setdiff1d(text.content_indices, res.kept_indices)
            if dropped.size and res.kept_indices.size:
                assert res.unified_scores[res.kept_indices].min() >= res.unified_scores[dropped].max()

    def test_mask_matches_kept_indices(self):
        text, image = random_pair(8)
        res = filter_text_tokens(text, image)
        np.testing.assert_array_equal(np.flatnonzero(res.mask), res.kept_indices)

    @pytest.mark.parametrize("rho", [0.0, -0.1, 1.5])
    def test_bad_keep_ratio_rejected(self, rho):
        text, image = random_pair(0)
        with pytest.raises(ParameterError):
            filter_text_tokens(text, image, keep_ratio=rho)

    @given(st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=40, deadline=None)
    def test_full_pipeline_matches_scalar_oracle(self, seed):
        text, image = random_pair(seed, n_text=5, n_patches=6, dim=5)
        res = filter_text_tokens(text, image, keep_ratio=0.5, temperature=1.1)
        expected = reference.kept_indices(
            text.embeddings.tolist(),
            text.special_flags.tolist(),
            image.embeddings.tolist(),
            0.5,
            1.1,
        )
        assert res.kept_indices.tolist() == expected
