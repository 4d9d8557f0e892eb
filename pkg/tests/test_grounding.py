"""Patch grounding maps: aggregation, normalization, noise perturbation."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import reference
from conftest import token_sequence, unit
from segros.errors import InputError, ParameterError
from segros.grounding import GroundingMap, grounding_map, perturb
from segros.numerics import Rng
from segros.textfilter import TextFilterResult, filter_text_tokens

E = math.e


def zero_mask_result(n_text):
    z = np.zeros(n_text)
    return TextFilterResult(
        intra_scores=z,
        inter_scores=z,
        unified_scores=z,
        mask=np.zeros(n_text, dtype=bool),
        kept_indices=np.array([], dtype=np.int64),
        keep_count=0,
    )


def random_case(seed, n_text=5, n_patches=8, dim=6):
    r = Rng(seed)
    text = token_sequence(r.normal((n_text, dim)), special=[0])
    image = token_sequence(r.normal((n_patches, dim)))
    filt = filter_text_tokens(text, image, keep_ratio=0.5)
    return text, image, filt


class TestGroundingMap:
    def test_single_token_identical_patches_uniform_then_degenerate(self):
        text = token_sequence([[0.0, 1.0], [1.0, 0.0]], special=[0])
        image = token_sequence([[0.6, 0.8]] * 5)
        filt = filter_text_tokens(text, image, keep_ratio=1.0)
        gmap = grounding_map(text, image, filt)
        np.testing.assert_allclose(gmap.raw, np.full(5, 0.2), atol=1e-12)
        np.testing.assert_array_equal(gmap.normalized, np.zeros(5))

    def test_zero_mask_gives_zero_map(self):
        text = token_sequence(np.eye(3))
        image = token_sequence(Rng(0).normal((4, 3)))
        gmap = grounding_map(text, image, zero_mask_result(3))
        np.testing.assert_array_equal(gmap.raw, np.zeros(4))
        np.testing.assert_array_equal(gmap.normalized, np.zeros(4))

    def test_planted_patches_dominate(self):
        # one kept token t = e0; patches 2 and 5 equal t, the rest e1. The
        # kept row softmaxes to e/(2e+6) on the matches and 1/(2e+6) elsewhere.
        dim = 3
        rows = [unit(dim, 1)] * 8
        rows[2] = unit(dim, 0)
        rows[5] = unit(dim, 0)
        text = token_sequence([unit(dim, 2), unit(dim, 0)], special=[0])
        image = token_sequence(rows)
        filt = filter_text_tokens(text, image, keep_ratio=1.0)
        gmap = grounding_map(text, image, filt)
        assert int(np.argmax(gmap.normalized)) in (2, 5)
        hot = E / (2 * E + 6)
        cold = 1 / (2 * E + 6)
        np.testing.assert_allclose(gmap.raw[[2, 5]], hot, rtol=1e-12)
        np.testing.assert_allclose(np.delete(gmap.raw, [2, 5]), cold, rtol=1e-12)
        others = np.delete(gmap.normalized, [2, 5])
        assert gmap.normalized[[2, 5]].min() > others.max()

    def test_mass_conservation(self):
        for seed in range(25):
            text, image, filt = random_case(seed)
            gmap = grounding_map(text, image, filt)
            assert gmap.raw.sum() == pytest.approx(filt.keep_count, abs=1e-4)
            assert (gmap.raw >= 0).all()

    def test_normalized_in_unit_interval(self):
        text, image, filt = random_case(42)
        gmap = grounding_map(text, image, filt)
        assert gmap.normalized.min() >= 0.0 and gmap.normalized.max() <= 1.0

    def test_grid_shape_passthrough(self):
        text, image, filt = random_case(1, n_patches=8)
        gmap = grounding_map(text, image, filt, grid_rows=2, grid_cols=4)
        assert (gmap.grid_rows, gmap.grid_cols) == (2, 4)
        assert gmap.n_patches == 8

    def test_dim_mismatch_rejected(self):
        text, image, filt = random_case(0)
        bad = token_sequence(np.eye(4))
        with pytest.raises(InputError):
            grounding_map(text, bad, filt)

    def test_mask_length_mismatch_rejected(self):
        text, image, filt = random_case(0)
        with pytest.raises(InputError):
            grounding_map(token_sequence(np.eye(6)[:, : text.dim]), image, filt)

    def test_monotone_in_patch_similarity(self):
        # sweep patch 0's cosine to the single kept token upward; its mass
        # must never decrease while the other patches stay fixed
        text = token_sequence([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]], special=[0])
        filt_mass = []
        for theta in np.linspace(np.pi / 2, 0.0, 9):
            rows = [[math.cos(theta), math.sin(theta), 0.0]] + [[0.0, 1.0, 0.0]] * 4
            image = token_sequence(rows)
            filt = filter_text_tokens(text, image, keep_ratio=1.0)
            gmap = grounding_map(text, image, filt)
            filt_mass.append(gmap.raw[0])
        assert np.all(np.diff(filt_mass) > 0)

    @given(st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=40, deadline=None)
    def test_matches_scalar_oracle(self, seed):
        text, image, filt = random_case(seed, n_text=4, n_patches=5, dim=5)
        gmap = grounding_map(text, image, filt, temperature=0.9)
        expected = reference.grounding_raw(
            text.embeddings.tolist(),
            image.embeddings.tolist(),
            filt.kept_indices.tolist(),
            0.9,
        )
        np.testing.assert_allclose(gmap.raw, expected, rtol=1e-10, atol=1e-12)


class TestPerturb:
    def test_zero_noise_is_exact_identity(self):
        text, image, filt = random_case(3)
        gmap = grounding_map(text, image, filt)
        out = perturb(gmap, 0.0, Rng(99))
        np.testing.assert_array_equal(out.perturbed, gmap.normalized)

    def test_fixed_seed_reproducible(self):
        text, image, filt = random_case(4)
        gmap = grounding_map(text, image, filt)
        a = perturb(gmap, 0.5, Rng(7))
        b = perturb(gmap, 0.5, Rng(7))
        np.testing.assert_array_equal(a.perturbed, b.perturbed)
        assert a.rng_seed == Rng(7).seed

    def test_noise_redrawn_per_call(self):
        text, image, filt = random_case(4)
        gmap = grounding_map(text, image, filt)
        rng = Rng(7)
        a = perturb(gmap, 0.5, rng)
        b = perturb(gmap, 0.5, rng)
        assert not np.array_equal(a.perturbed, b.perturbed)

    def test_bounded_perturbation(self):
        text, image, filt = random_case(5)
        gmap = grounding_map(text, image, filt)
        for seed in range(30):
            out = perturb(gmap, 0.5, Rng(seed))
            shift = out.perturbed - gmap.normalized
            assert (shift >= 0.0).all() and (shift < 0.5).all()

    def test_input_map_untouched(self):
        text, image, filt = random_case(6)
        gmap = grounding_map(text, image, filt)
        before = gmap.normalized.copy()
        perturb(gmap, 0.5, Rng(0))
        assert gmap.perturbed is None
        np.testing.assert_array_equal(gmap.normalized, before)

    def test_negative_noise_rejected(self):
        text, image, filt = random_case(0)
        gmap = grounding_map(text, image, filt)
        with pytest.raises(ParameterError):
            perturb(gmap, -0.1, Rng(0))

    def test_wide_gap_order_never_flips(self):
        gmap = GroundingMap(raw=np.array([0.8, 0.2]), normalized=np.array([0.8, 0.2]))
        flips = 0
        for seed in range(10_000):
            out = perturb(gmap, 0.5, Rng(seed))
            if out.perturbed[1] > out.perturbed[0]:
                flips += 1
        assert flips == 0

    def test_narrow_gap_order_flips_sometimes(self):
        gmap = GroundingMap(raw=np.array([0.55, 0.45]), normalized=np.array([0.55, 0.45]))
        flips = 0
        for seed in range(10_000):
            out = perturb(gmap, 0.5, Rng(seed))
            if out.perturbed[1] > out.perturbed[0]:
                flips += 1
        # analytic flip probability is P(xi1 - xi0 > 0.1) = 0.32 for
        # xi ~ U[0,0.5)^2; demand well clear of zero without pinning it
        assert flips > 1000
