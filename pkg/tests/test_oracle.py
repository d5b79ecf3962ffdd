import math

import numpy as np
import pytest

import reference
from glyphhmm import dataset as ds
from glyphhmm import hmm, oracle

RNG = np.random.default_rng(7)


class TestEnumeratePaths:
    def test_single_state_has_one_path(self):
        model = reference.random_model(RNG, 1, 2, 1)
        obs = RNG.normal(size=(4, 2))
        total, best, path = oracle.enumerate_paths(model, obs)
        assert total == pytest.approx(best, abs=1e-12)
        assert (path == 0).all()

    def test_two_state_three_frame_combinatorics(self):
        model = reference.random_model(RNG, 2, 2, 1)
        obs = RNG.normal(size=(3, 2))
        paths = list(oracle._legal_paths(2, 3))
        assert len(paths) == 2
        assert sorted(tuple(p) for p in paths) == [(0, 0, 1), (0, 1, 1)]

    def test_path_count_is_binomial(self):
        assert len(list(oracle._legal_paths(3, 7))) == math.comb(6, 2)

    def test_guard_on_huge_instances(self):
        model = reference.random_model(RNG, 10, 1, 1)
        obs = RNG.normal(size=(200, 1))
        with pytest.raises(oracle.TooLarge):
            oracle.enumerate_paths(model, obs, limit=1000)

    def test_impossible_when_too_short(self):
        model = reference.random_model(RNG, 3, 2, 1)
        total, best, path = oracle.enumerate_paths(model, RNG.normal(size=(2, 2)))
        assert total == -math.inf and best == -math.inf


class TestSampleSequence:
    def test_zero_self_probability_forces_minimal_path(self):
        mixes = [
            hmm.GaussianMixture(np.ones(1), np.array([[float(s)]]), np.ones((1, 1)))
            for s in range(4)
        ]
        model = hmm.ClassHMM("m", mixes, np.zeros(4))
        frames, path = oracle.sample_sequence(model, seed=0)
        assert (path == np.arange(4)).all()
        assert frames.shape == (4, 1)

    def test_concentrated_emissions_track_means(self):
        mixes = [
            hmm.GaussianMixture(np.ones(1), np.array([[10.0 * s]]), np.full((1, 1), 1e-6))
            for s in range(3)
        ]
        model = hmm.ClassHMM("m", mixes, np.full(3, 0.5))
        frames, path = oracle.sample_sequence(model, seed=3)
        for frame, state in zip(frames, path):
            assert abs(frame[0] - 10.0 * state) <= 3e-3

    def test_bit_reproducible_per_seed(self):
        model = reference.random_model(RNG, 3, 2, 2)
        a = oracle.sample_sequence(model, seed=42)
        b = oracle.sample_sequence(model, seed=42)
        assert (a[0] == b[0]).all() and (a[1] == b[1]).all()
        c = oracle.sample_sequence(model, seed=43)
        assert a[0].shape != c[0].shape or not (a[0] == c[0]).all()

    def test_state_durations_follow_geometric_law(self):
        self_p = 0.6
        mixes = [hmm.GaussianMixture(np.ones(1), np.zeros((1, 1)), np.ones((1, 1)))]
        model = hmm.ClassHMM("m", mixes, np.array([self_p]))
        durations = [
            oracle.sample_sequence(model, seed=s)[0].shape[0] for s in range(10_000)
        ]
        expected = 1.0 / (1.0 - self_p)
        assert abs(np.mean(durations) - expected) <= 0.05 * expected


class TestComposeGlyph:
    def test_single_shape_is_identity(self):
        spec = oracle.SyntheticGlyphSpec(composition=("ring",), seed=0)
        image, boundaries = oracle.compose_glyph(spec)
        assert boundaries == ()
        assert (image.pixels == oracle.PRIMITIVE_SHAPES["ring"]).all()

    def test_zero_jitter_boundary_arithmetic(self):
        spec = oracle.SyntheticGlyphSpec(
            composition=("ring", "gate"), jitter=(0, 0), seed=0
        )
        image, boundaries = oracle.compose_glyph(spec)
        w = oracle.PRIMITIVE_SHAPES["ring"].shape[1]
        assert boundaries == ((w, w),)
        assert image.width == w + oracle.PRIMITIVE_SHAPES["gate"].shape[1]

    def test_jitter_brackets_junction(self):
        for seed in range(20):
            spec = oracle.SyntheticGlyphSpec(
                composition=("corner", "trough"), jitter=(0, 3), seed=seed
            )
            image, boundaries = oracle.compose_glyph(spec)
            (end1, start2) = boundaries[0]
            assert 0 <= start2 - end1 <= 3
            assert image.width == 32 + (start2 - end1)

    def test_stamps_fill_their_boxes(self):
        # tight stamps keep junction truth well defined
        for shape in oracle.PRIMITIVE_SHAPES.values():
            assert shape[:, 0].any() and shape[:, -1].any()
            assert shape[0, :].any() and shape[-1, :].any()


class TestEmitCorpus:
    def test_layout_is_loadable(self, synthetic_root):
        data = ds.load_dataset(synthetic_root)
        assert len(data) == 3
        assert all(len(v) == 8 for v in data.values())

    def test_truth_sidecars_present(self, synthetic_root):
        import json

        for char_dir in sorted(p for p in synthetic_root.iterdir() if p.is_dir()):
            truth = json.loads((char_dir / "truth.json").read_text())
            assert len(truth) == 8
            for pair_list in truth.values():
                assert len(pair_list) == 1 and len(pair_list[0]) == 2

    def test_schema_sidecar_parses_relaxed(self, synthetic_root):
        schema = ds.load_schema(synthetic_root / "schema.tsv", strict=False)
        assert len(schema.entries) == 3
