"""Generator invariants: determinism, domain alignment, shift arithmetic."""

import numpy as np
import pytest

from afrseg import synthdata
from afrseg.synthdata import DomainShift, SceneSpec

SPEC = SceneSpec()
PLAIN = DomainShift(color_offset=(0.0, 0.0, 0.0), brightness=1.0,
                    noise_sigma=0.0, stripe_amplitude=0.0)


class TestDeterminism:
    def test_same_arguments_bitwise_identical(self):
        for domain in ("source", "target"):
            a_img, a_lab = synthdata.generate(SPEC, domain, 7)
            b_img, b_lab = synthdata.generate(SPEC, domain, 7)
            np.testing.assert_array_equal(a_img.data, b_img.data)
            np.testing.assert_array_equal(a_lab, b_lab)

    def test_indices_differ(self):
        a, _ = synthdata.generate(SPEC, "source", 0)
        b, _ = synthdata.generate(SPEC, "source", 1)
        assert not np.array_equal(a.data, b.data)

    def test_seed_changes_content(self):
        a, _ = synthdata.generate(SPEC, "source", 0)
        b, _ = synthdata.generate(SceneSpec(seed=1), "source", 0)
        assert not np.array_equal(a.data, b.data)

    def test_unknown_domain_rejected(self):
        with pytest.raises(ValueError, match="domain"):
            synthdata.generate(SPEC, "test", 0)


class TestLabels:
    def test_labels_shared_across_domains(self):
        # the shift touches pixels only; annotation must not move
        for i in range(10):
            _, src = synthdata.generate(SPEC, "source", i)
            _, tgt = synthdata.generate(SPEC, "target", i)
            np.testing.assert_array_equal(src, tgt)

    def test_label_range(self):
        for i in range(10):
            _, lab = synthdata.generate(SPEC, "source", i)
            assert lab.shape == (SPEC.height, SPEC.width)
            assert lab.dtype == np.int64
            assert lab.min() >= 0 and lab.max() < synthdata.NUM_CLASSES

    def test_every_class_appears_in_a_batch(self):
        seen = set()
        for i in range(100):
            _, lab = synthdata.generate(SPEC, "source", i)
            seen.update(np.unique(lab).tolist())
        assert seen == set(range(synthdata.NUM_CLASSES))

    def test_thin_bar_is_common(self):
        # the minority class is deliberately over-sampled so IoU tables
        # for it stay meaningful
        with_bar = sum(
            3 in np.unique(synthdata.generate(SPEC, "source", i)[1])
            for i in range(100))
        assert with_bar >= 30

    def test_background_dominates(self):
        _, lab = synthdata.generate(SceneSpec(shapes_min=1, shapes_max=1), "source", 3)
        assert (lab == 0).mean() > 0.5


class TestImages:
    def test_range_and_shape(self):
        for domain in ("source", "target"):
            img, _ = synthdata.generate(SPEC, domain, 5)
            assert img.data.shape == (3, SPEC.height, SPEC.width)
            assert img.data.min() >= 0.0 and img.data.max() <= 1.0

    def test_source_pixels_constant_within_a_class(self):
        img, lab = synthdata.generate(SPEC, "source", 2)
        for cls in np.unique(lab):
            region = img.data[:, lab == cls]
            assert np.ptp(region, axis=1).max() == 0.0

    def test_identity_shift_is_identity(self):
        src, _ = synthdata.generate(SPEC, "source", 4)
        tgt, _ = synthdata.generate(SPEC, "target", 4, PLAIN)
        np.testing.assert_array_equal(src.data, tgt.data)

    def test_noise_free_shift_matches_direct_arithmetic(self):
        shift = DomainShift(color_offset=(0.15, 0.0, -0.15), brightness=0.8,
                            noise_sigma=0.0, stripe_amplitude=0.05)
        src, _ = synthdata.generate(SPEC, "source", 9)
        tgt, _ = synthdata.generate(SPEC, "target", 9, shift)
        rows = np.arange(SPEC.height)
        want = (src.data + np.array(shift.color_offset)[:, None, None]) * 0.8
        want = want + (0.05 * np.sin(2 * np.pi * rows / shift.stripe_period))[None, :, None]
        np.testing.assert_allclose(tgt.data, np.clip(want, 0.0, 1.0), atol=1e-15)

    def test_noise_level(self):
        shift = DomainShift(color_offset=(0.0, 0.0, 0.0), brightness=1.0,
                            noise_sigma=0.05, stripe_amplitude=0.0)
        stds = []
        for i in range(5):
            src, _ = synthdata.generate(SPEC, "source", i)
            tgt, _ = synthdata.generate(SPEC, "target", i, shift)
            stds.append((tgt.data - src.data).std())
        # palette colors sit well inside [0,1], so clipping is negligible
        assert abs(np.mean(stds) - 0.05) < 0.005

    def test_noise_differs_per_index(self):
        shift = DomainShift(color_offset=(0.0, 0.0, 0.0), brightness=1.0,
                            noise_sigma=0.05, stripe_amplitude=0.0)
        a = synthdata.generate(SPEC, "target", 0, shift)[0].data
        b = synthdata.generate(SPEC, "target", 1, shift)[0].data
        src0 = synthdata.generate(SPEC, "source", 0)[0].data
        src1 = synthdata.generate(SPEC, "source", 1)[0].data
        assert not np.array_equal(a - src0, b - src1)


class TestDatasetMean:
    def test_matches_per_image_means(self):
        want = np.mean([synthdata.generate(SPEC, "target", i)[0].data.mean(axis=(1, 2))
                        for i in range(6)], axis=0)
        np.testing.assert_allclose(synthdata.dataset_mean(SPEC, "target", 6), want,
                                   atol=1e-12)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            synthdata.dataset_mean(SPEC, "source", 0)

    def test_shift_moves_the_mean(self):
        src = synthdata.dataset_mean(SPEC, "source", 20)
        tgt = synthdata.dataset_mean(SPEC, "target", 20)
        # blue: (b - 0.15) * 0.8 sits strictly below b for every pixel
        assert src[2] > tgt[2]
        assert not np.allclose(src, tgt)
