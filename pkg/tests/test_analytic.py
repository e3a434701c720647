import math

import numpy as np
import pytest
from scipy import integrate

from delaymdn import mixture as mx
from delaymdn.analytic import HolPredictor, conditional_mean, conditional_variance, normal_approx
from delaymdn.arrivals import DeterministicOnOff, HomogeneousPoisson, SinusoidalNHPP

MMC = HolPredictor(HomogeneousPoisson(19.0), mu=1.0, c=20)
NHPP = HolPredictor(SinusoidalNHPP(19.0, 0.5, 144.0), mu=1.0, c=20)


class TestConditionalMean:
    def test_homogeneous(self):
        assert conditional_mean(MMC, 10.0, 1.0) == pytest.approx(1.05, rel=1e-14)

    def test_empty_window(self):
        assert conditional_mean(MMC, 10.0, 0.0) == pytest.approx(0.1, rel=1e-14)

    def test_sinusoidal(self):
        quad, _ = integrate.quad(NHPP.arrival.intensity, 0.0, 36.0, epsabs=1e-12)
        assert conditional_mean(NHPP, 36.0, 36.0) == pytest.approx((quad + 2) / 20, abs=1e-9)
        assert conditional_mean(NHPP, 36.0, 36.0) == pytest.approx(45.186, abs=1e-3)

    def test_affine_in_hol(self):
        for w in np.linspace(0, 30, 13):
            assert conditional_mean(MMC, 50.0, w) == pytest.approx((19 * w + 2) / 20, rel=1e-13)

    def test_rejects_negative_hol(self):
        with pytest.raises(ValueError):
            conditional_mean(MMC, 5.0, -0.1)

    def test_rejects_window_before_origin(self):
        with pytest.raises(ValueError):
            conditional_mean(MMC, 1.0, 2.0)


class TestConditionalVariance:
    def test_homogeneous(self):
        assert conditional_variance(MMC, 10.0, 1.0) == pytest.approx(0.1, rel=1e-14)

    def test_empty_window(self):
        assert conditional_variance(MMC, 10.0, 0.0) == pytest.approx(2 / 400, rel=1e-14)

    def test_nondecreasing(self):
        for t in (40.0, 100.0, 200.0):
            v = [conditional_variance(NHPP, t, w) for w in np.linspace(0, 40, 41)]
            assert all(a <= b for a, b in zip(v, v[1:]))

    def test_onoff_rejected(self):
        p = HolPredictor(DeterministicOnOff(24.0, 0.75, 25.0), mu=1.0, c=20)
        with pytest.raises(ValueError, match="Poisson"):
            conditional_variance(p, 10.0, 1.0)
        # the mean only needs the integrated rate
        assert conditional_mean(p, 10.0, 1.0) == pytest.approx(27 / 20)


class TestNormalApprox:
    def test_parameters(self):
        m = normal_approx(MMC, 10.0, 1.0)
        assert m.weights == (1.0,)
        assert m.means[0] == pytest.approx(1.05, rel=1e-14)
        assert m.stds[0] == pytest.approx(math.sqrt(0.1), rel=1e-14)

    def test_confidence_interval(self):
        x = mx.confidence_interval(normal_approx(MMC, 10.0, 1.0), 0.95)
        assert x == pytest.approx(1.959964 * math.sqrt(0.1), abs=1e-6)
        assert x == pytest.approx(0.6198, abs=1e-4)

    def test_zero_hol(self):
        assert mx.mean(normal_approx(MMC, 10.0, 0.0)) == pytest.approx(0.1)

    def test_interval_widens_with_hol(self):
        widths = [mx.confidence_interval(normal_approx(NHPP, 300.0, w), 0.95) for w in (0.0, 1.0, 5.0, 20.0)]
        assert all(a < b for a, b in zip(widths, widths[1:]))

    def test_invalid_predictor(self):
        with pytest.raises(ValueError):
            HolPredictor(HomogeneousPoisson(1.0), mu=0.0, c=1)
