import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from quasicontact import dispersal
from quasicontact.dispersal import GaussianKernel, UniformBallKernel, UniformBoxKernel

KERNELS = [
    GaussianKernel([[1.0]]),
    GaussianKernel([[4.0]], mean=[2.0]),
    GaussianKernel([[1.0, 0.3], [0.3, 0.5]], mean=[0.2, -0.1]),
    UniformBallKernel(1, 1.0),
    UniformBallKernel(2, 0.7),
    UniformBallKernel(3, 1.2),
    UniformBoxKernel([0.5]),
    UniformBoxKernel([1.0, 0.25]),
]
IDS = ["gauss1", "gauss1-shift", "gauss2", "ball1", "ball2", "ball3", "box1", "box2"]


class TestDensity:
    def test_standard_normal_peak(self):
        assert dispersal.density(GaussianKernel([[1.0]]), 0.0) == pytest.approx(
            1 / math.sqrt(2 * math.pi), abs=1e-15)

    def test_uniform_ball_inside_and_outside(self):
        k = UniformBallKernel(1, 1.0)
        assert dispersal.density(k, 0.5) == pytest.approx(0.5)
        assert dispersal.density(k, 1.5) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            dispersal.density(GaussianKernel(np.eye(2)), [0.0, 0.0, 0.0])

    @pytest.mark.parametrize("kernel", [k for k in KERNELS if k.dim == 1],
                             ids=[i for i, k in zip(IDS, KERNELS) if k.dim == 1])
    def test_unit_mass_1d(self, kernel):
        x = np.linspace(-40, 40, 800_001)
        mass = integrate.simpson(kernel.density(x), x=x)
        # discontinuous families converge only to O(h)
        tol = 1e-8 if isinstance(kernel, GaussianKernel) else 1e-4
        assert mass == pytest.approx(1.0, abs=tol)

    def test_unit_mass_2d_gaussian(self):
        k = KERNELS[2]
        g = np.linspace(-12, 12, 1201)
        x, y = np.meshgrid(g, g, indexing="ij")
        vals = k.density(np.stack([x, y], -1))
        mass = integrate.simpson(integrate.simpson(vals, x=g), x=g)
        assert mass == pytest.approx(1.0, abs=1e-8)


class TestCharFn:
    @pytest.mark.parametrize("kernel", KERNELS, ids=IDS)
    def test_unit_at_origin(self, kernel):
        assert kernel.char_fn(np.zeros(kernel.dim)) == 1.0

    def test_gaussian_value(self):
        assert GaussianKernel([[1.0]]).char_fn(1.0) == pytest.approx(math.exp(-0.5), abs=1e-15)

    def test_uniform_ball_zero_at_pi(self):
        assert abs(UniformBallKernel(1, 1.0).char_fn(np.pi)) < 1e-15

    @pytest.mark.parametrize("kernel", [k for k in KERNELS if k.dim == 1],
                             ids=[i for i, k in zip(IDS, KERNELS) if k.dim == 1])
    @pytest.mark.parametrize("p", [0.3, 1.0, 2.7])
    def test_matches_quadrature(self, kernel, p):
        lo, hi = -30.0, 30.0
        pts = [-1.0, -0.5, 0.5, 1.0]
        re = integrate.quad(lambda u: math.cos(p * u) * kernel.density(u)[()], lo, hi,
                            points=pts, limit=400)[0]
        im = integrate.quad(lambda u: math.sin(p * u) * kernel.density(u)[()], lo, hi,
                            points=pts, limit=400)[0]
        assert kernel.char_fn(p) == pytest.approx(re + 1j * im, abs=1e-9)

    def test_ball_matches_quadrature_in_3d(self):
        # radial quadrature of the 3-d ball: sin(pr)/(pr) averaged over the ball
        k = UniformBallKernel(3, 1.2)
        p = 2.1
        vol = 4 / 3 * math.pi * 1.2 ** 3
        val = integrate.quad(lambda r: 4 * math.pi * r * r * math.sin(p * r) / (p * r), 0, 1.2)[0]
        assert k.char_fn([p, 0.0, 0.0]).real == pytest.approx(val / vol, abs=1e-12)

    @pytest.mark.parametrize("kernel", KERNELS, ids=IDS)
    def test_strictly_below_one_away_from_origin(self, kernel):
        rng = np.random.default_rng(0)
        p = rng.normal(size=(500, kernel.dim)) * 5
        assert np.all(np.abs(kernel.char_fn(p)) < 1)

    @given(st.floats(-50, 50))
    def test_gaussian_hermitian(self, p):
        k = GaussianKernel([[2.0]], mean=[0.7])
        assert k.char_fn(-p) == pytest.approx(np.conj(k.char_fn(p)), abs=1e-15)


class TestMoments:
    def test_standard_gaussian_2d(self):
        m, c = dispersal.moments(GaussianKernel(np.eye(2)))
        np.testing.assert_array_equal(m, [0, 0])
        np.testing.assert_array_equal(c, np.eye(2))

    def test_uniform_ball_variance(self):
        m, c = dispersal.moments(UniformBallKernel(1, 1.0))
        oracle = integrate.quad(lambda u: u * u * 0.5, -1, 1)[0]
        assert m[0] == 0 and c[0, 0] == pytest.approx(oracle, abs=1e-14)

    def test_shifted_gaussian(self):
        m, c = dispersal.moments(GaussianKernel([[4.0]], mean=[2.0]))
        assert m[0] == 2.0 and c[0, 0] == 4.0

    @pytest.mark.parametrize("make", [lambda: UniformBallKernel(1, 0.0),
                                      lambda: UniformBoxKernel([1.0, 0.0]),
                                      lambda: GaussianKernel([[1.0, 1.0], [1.0, 1.0]])])
    def test_degenerate_rejected(self, make):
        with pytest.raises(ValueError):
            make()

    def test_length_scale(self):
        assert GaussianKernel([[4.0, 0], [0, 1.0]]).length_scale == pytest.approx(2.0)
        assert UniformBallKernel(1, 1.0).length_scale == pytest.approx(1 / math.sqrt(3))


class TestSample:
    def test_uniform_ball_variance(self):
        k = UniformBallKernel(1, 1.0)
        x = dispersal.sample(k, np.random.default_rng(1), 1_000_000)[:, 0]
        var = x.var()
        # standard error of the sample variance: sqrt((mu4 - sigma^4) / n), mu4 = 1/5
        se = math.sqrt((1 / 5 - 1 / 9) / x.size)
        assert abs(var - 1 / 3) < 3 * se

    def test_gaussian_covariance(self):
        k = GaussianKernel(np.eye(2))
        x = dispersal.sample(k, np.random.default_rng(2), 1_000_000)
        cov = np.cov(x.T)
        se_diag, se_off = math.sqrt(2 / x.shape[0]), math.sqrt(1 / x.shape[0])
        assert abs(cov[0, 0] - 1) < 3 * se_diag and abs(cov[1, 1] - 1) < 3 * se_diag
        assert abs(cov[0, 1]) < 3 * se_off

    @pytest.mark.parametrize("kernel", KERNELS, ids=IDS)
    def test_shape_and_finite(self, kernel):
        rng = np.random.default_rng(5)
        one = kernel.sample(rng)
        many = kernel.sample(rng, 100)
        assert one.shape == (kernel.dim,) and many.shape == (100, kernel.dim)
        assert np.all(np.isfinite(many))

    @pytest.mark.parametrize("kernel", KERNELS, ids=IDS)
    def test_empirical_char_fn(self, kernel):
        x = kernel.sample(np.random.default_rng(9), 200_000)
        p = np.full(kernel.dim, 0.8)
        z = np.exp(1j * x @ p)
        emp = z.mean()
        se = math.sqrt(z.real.var() / z.size) + math.sqrt(z.imag.var() / z.size)
        assert abs(emp - kernel.char_fn(p)) < 4 * se + 1e-12

    @pytest.mark.parametrize("kernel", [k for k in KERNELS if k.dim == 2],
                             ids=[i for i, k in zip(IDS, KERNELS) if k.dim == 2])
    def test_sample_moments(self, kernel):
        x = kernel.sample(np.random.default_rng(4), 400_000)
        m, c = kernel.moments()
        se = np.sqrt(np.diag(c) / x.shape[0])
        assert np.all(np.abs(x.mean(0) - m) < 4 * se)


class TestWrappedDensity:
    def test_ball_no_wrap(self):
        assert dispersal.wrapped_density(UniformBallKernel(1, 1.0), 0.0, 10.0) == 0.5

    def test_gaussian_negligible_wrap(self):
        k = GaussianKernel([[1.0]])
        assert abs(dispersal.wrapped_density(k, 0.0, 100.0) - k.density(0.0)) < 1e-15

    def test_ball_wraps_on_small_box(self):
        assert dispersal.wrapped_density(UniformBallKernel(1, 1.0), 0.6, 1.5) == pytest.approx(1.0)

    def test_lattice_sum_oracle(self):
        k = GaussianKernel([[1.0]], mean=[0.3])
        u, box = 0.9, 3.0
        direct = sum(k.density(u + box * j)[()] for j in range(-50, 51))
        assert k.wrapped_density(u, box) == pytest.approx(direct, abs=1e-15)

    @pytest.mark.parametrize("kernel,box", [(GaussianKernel([[1.0]]), 4.0),
                                            (GaussianKernel([[1.0]], mean=[1.3]), 5.0),
                                            (UniformBallKernel(1, 1.0), 1.5),
                                            (UniformBoxKernel([0.8]), 1.0)])
    def test_integrates_to_one_1d(self, kernel, box):
        u = np.linspace(0, box, 400_001)
        mass = integrate.simpson(kernel.wrapped_density(u, box), x=u)
        tol = 1e-10 if isinstance(kernel, GaussianKernel) else 1e-4
        assert mass == pytest.approx(1.0, abs=tol)

    def test_integrates_to_one_2d(self):
        k = GaussianKernel([[1.0, 0.2], [0.2, 0.6]])
        box = 5.0
        g = np.linspace(0, box, 801)
        x, y = np.meshgrid(g, g, indexing="ij")
        vals = k.wrapped_density(np.stack([x, y], -1), box)
        mass = integrate.simpson(integrate.simpson(vals, x=g), x=g)
        assert mass == pytest.approx(1.0, abs=1e-10)

    def test_rejects_bad_box(self):
        with pytest.raises(ValueError):
            UniformBallKernel(1, 1.0).wrapped_density(0.0, 0.0)


class TestConfigDicts:
    @pytest.mark.parametrize("kernel", KERNELS, ids=IDS)
    def test_round_trip(self, kernel):
        back = dispersal.from_dict(dispersal.to_dict(kernel), kernel.dim)
        p = np.linspace(-3, 3, 7 * kernel.dim).reshape(7, kernel.dim)
        np.testing.assert_array_equal(back.char_fn(p), kernel.char_fn(p))

    def test_unknown_family(self):
        with pytest.raises(ValueError):
            dispersal.from_dict({"family": "cauchy"}, 1)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            dispersal.from_dict({"family": "gaussian", "cov": [[1.0]]}, 2)
