import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from augrf.errors import InvalidArgumentError, MalformedImageError
from augrf.image_ops import (
    NON_IDENTITY,
    Degradation,
    DegradationSpec,
    Manipulation,
    apply_manipulation,
    box_kernel,
    convolve2d,
    degrade,
    fractional_motion_kernel,
    from_uint8,
    hsv_to_rgb,
    motion_blur_kernel,
    read_png,
    rgb_to_hsv,
    to_uint8,
    write_png,
)

images = arrays(
    np.float64,
    st.tuples(st.integers(1, 8), st.integers(1, 8), st.just(3)),
    elements=st.floats(0.0, 1.0),
)


def brute_convolve(image, kernel):
    h, w, _ = image.shape
    k = kernel.shape[0]
    r = k // 2
    out = np.zeros_like(image)
    for i in range(h):
        for j in range(w):
            for u in range(k):
                for v in range(k):
                    ii = min(max(i - (u - r), 0), h - 1)
                    jj = min(max(j - (v - r), 0), w - 1)
                    out[i, j] += kernel[u, v] * image[ii, jj]
    return out


class TestManipulations:
    @pytest.mark.parametrize("kind", list(Manipulation))
    def test_zero_intensity_is_identity(self, kind):
        img = np.random.default_rng(3).random((7, 9, 3))
        out = apply_manipulation(img, kind, 0.0)
        assert np.array_equal(out, img)
        assert out is not img

    def test_identity_ignores_intensity(self):
        img = np.random.default_rng(4).random((4, 4, 3))
        assert np.array_equal(apply_manipulation(img, "identity", 0.7), img)

    def test_brightness_multiplies(self):
        img = np.array([[[0.2, 0.4, 0.6]]])
        out = apply_manipulation(img, Manipulation.BRIGHTNESS, 0.5)
        np.testing.assert_allclose(out[0, 0], [0.3, 0.6, 0.9], atol=1e-15)

    def test_contrast_fixes_constant_image(self):
        img = np.full((5, 5, 3), 0.5)
        np.testing.assert_allclose(apply_manipulation(img, "contrast", 0.5), img, atol=1e-15)

    def test_contrast_about_gray_mean(self):
        img = np.random.default_rng(0).random((6, 6, 3)) * 0.5 + 0.25
        mean = (img @ np.array([0.299, 0.587, 0.114])).mean()
        out = apply_manipulation(img, "contrast", -0.5)
        np.testing.assert_allclose(out, mean + 0.5 * (img - mean), atol=1e-15)

    def test_saturation_full_desaturation_gives_gray(self):
        img = np.random.default_rng(1).random((4, 4, 3))
        out = apply_manipulation(img, "saturation", -1.0)
        gray = img @ np.array([0.299, 0.587, 0.114])
        np.testing.assert_allclose(out, np.repeat(gray[..., None], 3, axis=2), atol=1e-12)

    def test_sharpness_matches_unsharp_formula(self):
        img = np.random.default_rng(2).random((6, 5, 3)) * 0.4 + 0.3
        out = apply_manipulation(img, "sharpness", 0.3)
        blur = brute_convolve(img, np.full((3, 3), 1 / 9))
        np.testing.assert_allclose(out, np.clip(img + 0.3 * (img - blur), 0, 1), atol=1e-12)

    def test_hue_half_turn_of_red_is_cyan(self):
        out = apply_manipulation(np.array([[[1.0, 0.0, 0.0]]]), "hue", 0.5)
        np.testing.assert_allclose(out[0, 0], [0.0, 1.0, 1.0], atol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(images, st.floats(-1.0, 1.0))
    def test_hue_periodicity(self, img, p):
        back = apply_manipulation(apply_manipulation(img, "hue", p), "hue", -p)
        np.testing.assert_allclose(back, img, atol=1e-5)

    @settings(max_examples=60, deadline=None)
    @given(images, st.sampled_from(NON_IDENTITY), st.floats(-1.0, 1.0))
    def test_output_range_and_shape(self, img, kind, p):
        out = apply_manipulation(img, kind, p)
        assert out.shape == img.shape
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_non_finite_intensity_rejected(self):
        with pytest.raises(InvalidArgumentError):
            apply_manipulation(np.zeros((2, 2, 3)), "hue", math.nan)

    def test_malformed_image_rejected(self):
        with pytest.raises(MalformedImageError):
            apply_manipulation(np.zeros((2, 2)), "hue", 0.1)
        with pytest.raises(MalformedImageError):
            apply_manipulation(np.zeros((2, 2, 4)), "hue", 0.1)

    def test_unknown_kind_rejected(self):
        with pytest.raises(InvalidArgumentError):
            apply_manipulation(np.zeros((2, 2, 3)), "gamma", 0.1)

    def test_six_kinds_identity_first(self):
        assert len(Manipulation) == 6 and len(NON_IDENTITY) == 5
        assert Manipulation.IDENTITY.row == 0


class TestKernels:
    def test_unit_kernel(self):
        assert np.array_equal(motion_blur_kernel(1, 0.0), [[1.0]])

    def test_horizontal_five(self):
        k = motion_blur_kernel(5, 0.0)
        expected = np.zeros((5, 5))
        expected[2] = 0.2
        np.testing.assert_allclose(k, expected, atol=1e-15)

    @pytest.mark.parametrize("k", range(1, 32, 2))
    @pytest.mark.parametrize("phi", [0.0, 0.3, math.pi / 4, 1.2, math.pi / 2])
    def test_normalized(self, k, phi):
        assert abs(motion_blur_kernel(k, phi).sum() - 1.0) <= 1e-12

    @pytest.mark.parametrize("k", [0, 2, 4, -1, 3.5])
    def test_bad_size(self, k):
        with pytest.raises(InvalidArgumentError):
            motion_blur_kernel(k, 0.0)

    def test_fractional_length(self):
        k = fractional_motion_kernel(2.5)
        expected = np.zeros((3, 3))
        expected[1] = [0.25, 0.5, 0.25]
        np.testing.assert_allclose(k, expected, atol=1e-15)
        np.testing.assert_allclose(fractional_motion_kernel(5.0), motion_blur_kernel(5))

    def test_motion_blur_fixes_horizontally_constant_image(self):
        col = np.random.default_rng(0).random((6, 1, 3))
        img = np.repeat(col, 7, axis=1)
        np.testing.assert_allclose(convolve2d(img, motion_blur_kernel(3, 0.0)), img, atol=1e-15)


class TestConvolve:
    def test_identity_kernel(self):
        img = np.random.default_rng(0).random((4, 6, 3))
        assert np.array_equal(convolve2d(img, [[1.0]]), img)

    def test_constant_image(self):
        img = np.full((3, 3, 3), 0.5)
        np.testing.assert_allclose(convolve2d(img, box_kernel(3)), img, atol=1e-15)

    def test_impulse_matches_brute_force(self):
        img = np.zeros((3, 3, 3))
        img[1, 1] = 1.0
        out = convolve2d(img, box_kernel(3))
        np.testing.assert_allclose(out, brute_convolve(img, box_kernel(3)), atol=1e-15)
        # Every output pixel's 3x3 neighborhood contains the impulse exactly once.
        np.testing.assert_allclose(out, np.full((3, 3, 3), 1 / 9), atol=1e-15)

    def test_asymmetric_kernel_matches_brute_force(self):
        rng = np.random.default_rng(5)
        img = rng.random((7, 5, 3))
        kernel = rng.random((5, 5))
        kernel /= kernel.sum()
        np.testing.assert_allclose(convolve2d(img, kernel), brute_convolve(img, kernel), atol=1e-13)

    def test_even_kernel_rejected(self):
        with pytest.raises(InvalidArgumentError):
            convolve2d(np.zeros((4, 4, 3)), np.ones((2, 2)) / 4)


class TestHSV:
    def test_known_values(self):
        np.testing.assert_allclose(rgb_to_hsv((1, 0, 0)), (0, 1, 1))
        np.testing.assert_allclose(rgb_to_hsv((0.5, 0.5, 0.5)), (0, 0, 0.5))
        np.testing.assert_allclose(rgb_to_hsv((0, 1, 0)), (1 / 3, 1, 1), atol=1e-15)
        np.testing.assert_allclose(rgb_to_hsv((0, 0, 1)), (2 / 3, 1, 1), atol=1e-15)

    @given(arrays(np.float64, 3, elements=st.floats(0.0, 1.0)))
    def test_round_trip(self, rgb):
        np.testing.assert_allclose(hsv_to_rgb(rgb_to_hsv(rgb)), rgb, atol=1e-6)

    def test_hue_range(self):
        hsv = rgb_to_hsv(np.random.default_rng(0).random((1000, 3)))
        assert hsv[:, 0].min() >= 0.0 and hsv[:, 0].max() < 1.0


class TestDegrade:
    def test_deterministic(self):
        img = np.random.default_rng(0).random((16, 16, 3))
        for kind, q in [("gaussian", 0.1), ("poisson", 10), ("salt_pepper", 0.05), ("speckle", 0.4)]:
            spec = DegradationSpec(kind, q, seed=7)
            a, b = degrade(img, spec, index=3), degrade(img, spec, index=3)
            assert np.array_equal(a, b)
            assert not np.array_equal(a, degrade(img, spec, index=4))

    @pytest.mark.parametrize("kind,q", [("gaussian", 0.1), ("poisson", 10), ("salt_pepper", 0.05),
                                        ("speckle", 0.4), ("motion_blur", 5), ("motion_blur", 2.5)])
    def test_range_and_shape(self, kind, q):
        img = np.random.default_rng(1).random((12, 10, 3))
        out = degrade(img, DegradationSpec(kind, q, seed=1))
        assert out.shape == img.shape
        assert out.min() >= 0 and out.max() <= 1

    def test_speckle_fixes_zero(self):
        img = np.zeros((32, 32, 3))
        assert np.array_equal(degrade(img, DegradationSpec("speckle", 0.4, seed=2)), img)

    def test_gaussian_zero_sigma_is_identity(self):
        img = np.random.default_rng(2).random((5, 5, 3))
        assert np.array_equal(degrade(img, DegradationSpec("gaussian", 0.0)), img)

    def test_motion_blur_matches_convolution(self):
        img = np.random.default_rng(3).random((9, 9, 3))
        out = degrade(img, DegradationSpec("motion_blur", 5))
        np.testing.assert_allclose(out, brute_convolve(img, motion_blur_kernel(5)), atol=1e-13)

    def test_gaussian_statistics(self):
        img = np.full((256, 256, 3), 0.5)
        resid = degrade(img, DegradationSpec("gaussian", 0.1, seed=11)) - 0.5
        n = resid.size
        assert abs(resid.mean()) < 3 * 0.1 / math.sqrt(n)
        assert abs(resid.std() - 0.1) < 0.005

    def test_salt_pepper_statistics(self):
        out = degrade(np.full((256, 256, 3), 0.5), DegradationSpec("salt_pepper", 0.05, seed=3))
        salt, pepper = np.mean(out == 1.0), np.mean(out == 0.0)
        assert abs(salt - 0.05) < 0.0025 and abs(pepper - 0.05) < 0.0025
        assert set(np.unique(out)) == {0.0, 0.5, 1.0}

    def test_poisson_values_on_lattice(self):
        out = degrade(np.full((8, 8, 3), 0.3), DegradationSpec("poisson", 10, seed=0))
        np.testing.assert_allclose(out * 10, np.round(out * 10), atol=1e-12)

    @pytest.mark.parametrize("kind,q", [("motion_blur", 4), ("motion_blur", 0), ("poisson", 0),
                                        ("gaussian", -0.1), ("salt_pepper", 0.6), ("gaussian", math.inf)])
    def test_invalid_specs(self, kind, q):
        with pytest.raises(InvalidArgumentError):
            DegradationSpec(kind, q)

    def test_unknown_kind_lists_choices(self):
        with pytest.raises(InvalidArgumentError, match="gaussian.*speckle"):
            DegradationSpec("pink", 0.1)

    def test_spec_dict_round_trip(self):
        spec = DegradationSpec(Degradation.SPECKLE, 0.4, seed=9)
        assert DegradationSpec.from_dict(spec.to_dict()) == spec


class TestPNG:
    def test_quantization_rounds_half_to_even(self):
        vals = np.array([0.5, 1.5, 2.5, 254.5, 300.0, -3.0]) / 255.0
        assert to_uint8(vals).tolist() == [0, 2, 2, 254, 255, 0]

    def test_round_trip(self, tmp_path):
        img = from_uint8(np.random.default_rng(0).integers(0, 256, (6, 7, 3)))
        write_png(tmp_path / "a.png", img)
        assert np.array_equal(read_png(tmp_path / "a.png"), img)

    def test_alpha_composited_on_background(self, tmp_path):
        from PIL import Image

        rgba = np.zeros((2, 2, 4), dtype=np.uint8)
        rgba[..., 0] = 255
        rgba[..., 3] = [[0, 255], [51, 255]]
        Image.fromarray(rgba).save(tmp_path / "a.png")
        img = read_png(tmp_path / "a.png", background=(0.0, 0.0, 1.0))
        np.testing.assert_allclose(img[0, 0], [0, 0, 1])
        np.testing.assert_allclose(img[0, 1], [1, 0, 0])
        np.testing.assert_allclose(img[1, 0], [0.2, 0, 0.8])
