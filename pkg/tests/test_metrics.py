import numpy as np
import pytest

from ermv.metrics import (
    PSNR_CAP,
    MetricReport,
    ShapeMismatch,
    TooSmall,
    masked_psnr,
    psnr,
    report,
    ssim,
)


def checkerboard(h=32, w=32, lo=0.3, hi=0.7, cell=4):
    yy, xx = np.mgrid[0:h, 0:w]
    board = ((yy // cell + xx // cell) % 2).astype(np.float64)
    return lo + (hi - lo) * board


class TestPsnr:
    def test_identical_capped(self):
        img = np.random.default_rng(0).uniform(size=(16, 16, 3))
        assert psnr(img, img) == PSNR_CAP

    def test_zero_vs_one(self):
        a = np.zeros((8, 8, 3))
        b = np.ones((8, 8, 3))
        assert psnr(a, b) == pytest.approx(0.0, abs=1e-12)

    def test_uniform_offset_is_20db(self):
        # MSE = 0.01 -> 10*log10(1/0.01) = 20
        a = np.full((8, 8, 3), 0.4)
        b = a + 0.1
        assert psnr(a, b) == pytest.approx(20.0, abs=1e-9)

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        a = rng.uniform(size=(12, 12, 3))
        b = rng.uniform(size=(12, 12, 3))
        assert psnr(a, b) == psnr(b, a)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            psnr(np.zeros((4, 4)), np.zeros((5, 4)))

    def test_monotone_in_noise_amplitude(self):
        rng = np.random.default_rng(2)
        a = rng.uniform(0.2, 0.8, size=(32, 32, 3))
        noise = rng.uniform(-1, 1, size=a.shape)
        values = [psnr(a, a + amp * noise) for amp in (0.01, 0.02, 0.05, 0.1, 0.2)]
        assert all(x > y for x, y in zip(values, values[1:]))


class TestSsim:
    def test_identical_is_exactly_one(self):
        img = np.random.default_rng(3).uniform(size=(24, 24, 3))
        assert ssim(img, img) == 1.0

    def test_identical_constants(self):
        a = np.full((16, 16), 0.5)
        assert ssim(a, a.copy()) == 1.0

    def test_inverted_checkerboard_negative(self):
        a = checkerboard()
        assert ssim(a, 1.0 - a) < 0.0

    def test_symmetry(self):
        rng = np.random.default_rng(4)
        a = rng.uniform(size=(20, 20))
        b = rng.uniform(size=(20, 20))
        assert ssim(a, b) == ssim(b, a)

    def test_bounded(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            a = rng.uniform(size=(16, 16))
            b = rng.uniform(size=(16, 16))
            val = ssim(a, b)
            assert -1.0 <= val <= 1.0

    def test_too_small(self):
        with pytest.raises(TooSmall):
            ssim(np.zeros((10, 64)), np.zeros((10, 64)))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            ssim(np.zeros((16, 16)), np.zeros((16, 17)))


class TestMaskedPsnr:
    def test_only_masked_pixels_count(self):
        a = np.zeros((8, 8, 3))
        b = np.zeros((8, 8, 3))
        b[0, 0] = 1.0  # damage outside the mask
        mask = np.zeros((8, 8), dtype=bool)
        mask[4:, 4:] = True
        assert masked_psnr(a, b, mask) == PSNR_CAP

    def test_empty_mask_raises(self):
        with pytest.raises(ValueError):
            masked_psnr(np.zeros((4, 4, 3)), np.zeros((4, 4, 3)), np.zeros((4, 4)))


def test_report_aggregates():
    rng = np.random.default_rng(6)
    imgs = [rng.uniform(size=(16, 16, 3)) for _ in range(3)]
    rep = report((im, im) for im in imgs)
    assert isinstance(rep, MetricReport)
    assert rep.n_images == 3
    assert rep.ssim == 1.0
    assert rep.psnr == PSNR_CAP
