import math

import numpy as np
import pytest

from tkcla.model import (
    DegenerateDriftError,
    InvalidModelError,
    ModelParams,
    adjoint_generator_apply,
    constant_function,
    coordinate_function,
    covariance,
    derive_params,
    drift,
    gaussian_function,
    generator_apply,
    generator_values,
    lyapunov,
    lyapunov_drift_identities,
    lyapunov_function,
    noise_matrix,
    reflection,
    bump_function,
)

D64 = 1 / 64


def p2(**kw):
    base = dict(d=2, V=64, kappa_p=1.0, lambda_p=D64, delta_p=D64)
    base.update(kw)
    return ModelParams(**base)


def p3(**kw):
    base = dict(d=3, V=64, kappa_p=1.0, lambda_p=D64, delta_p=D64)
    base.update(kw)
    return ModelParams(**base)


class TestParams:
    def test_figure_one_raw_rates(self):
        p = derive_params(2, 16, 1.0, 1 / 64, 1 / 64)
        assert (p.kappa, p.lambda_, p.delta) == (1 / 16, 1 / 4, 1 / 64)

    def test_identity_scaling(self):
        p = derive_params(2, 1, 1, 1, 1)
        assert (p.kappa, p.lambda_, p.delta) == (1, 1, 1)

    def test_six_species(self):
        p = derive_params(6, 64, 1.0, 1 / 256, 1 / 256)
        assert (p.kappa, p.lambda_, p.delta) == (1 / 64, 1 / 4, 1 / 256)
        assert p.kappa * p.V == p.kappa_p and p.lambda_ / p.V == p.lambda_p

    @pytest.mark.parametrize(
        "kw",
        [dict(d=1), dict(d=2.5), dict(V=0), dict(kappa_p=-1), dict(lambda_p=0), dict(delta_p=float("nan"))],
    )
    def test_rejects_invalid(self, kw):
        with pytest.raises(InvalidModelError):
            p2(**kw)


class TestDrift:
    def test_symmetric_point(self):
        assert np.allclose(drift(p3(), [1, 1, 1]), 0.0)

    @pytest.mark.parametrize("d", [2, 3, 5])
    def test_origin(self, d):
        p = ModelParams(d, 10, 2.0, 0.3, 0.1)
        assert np.allclose(drift(p, np.zeros(d)), 0.3)

    def test_two_species_no_autocatalysis(self):
        assert np.allclose(drift(p2(), [3, 1]), [-1 / 32, 0.0])

    def test_wrong_shape(self):
        with pytest.raises(ValueError):
            drift(p2(), [1, 2, 3])


class TestCovariance:
    def test_origin(self):
        assert np.allclose(covariance(p3(), np.zeros(3)), D64 * np.eye(3))

    def test_two_species_unit_point(self):
        g = covariance(p2(), [1, 1])
        assert g[0, 0] == pytest.approx(2 + 1 / 32)
        assert g[0, 1] == pytest.approx(-2.0)
        assert np.linalg.eigvalsh(g).min() == pytest.approx(1 / 32)

    def test_three_species_single_mass(self):
        g = covariance(p3(), [1, 0, 0])
        assert np.allclose(g, np.diag([1 / 32, 1 / 64, 1 / 64]))


class TestReflection:
    def test_origin(self):
        assert np.allclose(reflection(p3(), np.zeros(3)), np.ones(3) / math.sqrt(3))

    def test_degenerate(self):
        with pytest.raises(DegenerateDriftError):
            reflection(p3(), [1, 1, 1])

    def test_face(self):
        assert np.allclose(reflection(p2(), [3, 0]), np.array([-2, 1]) / math.sqrt(5))


class TestNoiseMatrix:
    def test_two_species_display(self):
        s = noise_matrix(p2(), [1, 1])
        r = math.sqrt(1 / 32)
        expected = np.array([[math.sqrt(2), r, 0], [-math.sqrt(2), 0, r]])
        assert np.allclose(s, expected)

    @pytest.mark.parametrize("d", [2, 3, 6])
    def test_origin(self, d):
        p = ModelParams(d, 64, 1.0, D64, D64)
        s = noise_matrix(p, np.zeros(d))
        assert s.shape == (d, p.n_noise)
        assert np.allclose(s @ s.T, D64 * np.eye(d))

    @pytest.mark.parametrize("d", [3, 4, 7])
    def test_factorization(self, d):
        p = ModelParams(d, 64, 1.3, 0.02, 0.05)
        x = np.random.default_rng(d).uniform(0, 5, d)
        s = noise_matrix(p, x)
        assert np.allclose(s @ s.T, covariance(p, x), rtol=0, atol=1e-12)


class TestLyapunov:
    def test_zero_on_level(self):
        assert lyapunov(p2(), [1.5, 0.5]) == 0.0

    def test_origin(self):
        assert lyapunov(p2(), [0, 0]) == pytest.approx(4.0)

    def test_value(self):
        assert lyapunov(p2(), [3, 1]) == pytest.approx(4.0)

    def test_identities_on_level(self):
        p = p2()
        dot_b, gen = lyapunov_drift_identities(p, [1.0, 1.0])
        assert dot_b == 0.0
        assert gen == pytest.approx(2 * 2 * D64 / 64)

    def test_identities_at_origin(self):
        p = p2()
        dot_b, gen = lyapunov_drift_identities(p, [0.0, 0.0])
        dl = 2 * D64
        assert dot_b == pytest.approx(-(2 / D64) * dl**2)
        assert gen == pytest.approx(dl / 64 - 2 * D64 * (dl / D64) ** 2)

    @pytest.mark.parametrize("p_exp", [1, 2, 3])
    def test_dot_b_matches_gradient(self, p_exp):
        p = p3(kappa_p=0.7, lambda_p=0.05, delta_p=0.02)
        f = lyapunov_function(p, p_exp)
        for x in np.random.default_rng(1).uniform(0, 20, (10, 3)):
            dot_b, _ = lyapunov_drift_identities(p, x, p_exp)
            direct = f.gradient(x) @ drift(p, x)
            assert dot_b == pytest.approx(direct, rel=1e-12, abs=1e-12)
            assert dot_b <= 0

    @pytest.mark.parametrize("p_exp", [1, 2])
    def test_generator_matches_closed_form(self, p_exp):
        p = p3()
        f = lyapunov_function(p, p_exp)
        for x in np.random.default_rng(2).uniform(0, 10, (10, 3)):
            _, gen = lyapunov_drift_identities(p, x, p_exp)
            assert generator_apply(p, f, x) == pytest.approx(gen, rel=1e-12)


class TestGenerator:
    def test_constant(self):
        assert generator_apply(p3(), constant_function(4.0, 3), [0.3, 2, 1]) == 0.0

    def test_coordinate(self):
        x = np.array([0.3, 2.0, 1.0])
        for i in range(3):
            assert generator_apply(p3(), coordinate_function(i, 3), x) == pytest.approx(drift(p3(), x)[i])

    def test_batch_matches_pointwise(self):
        p = p2(delta_p=1 / 16, lambda_p=1 / 16)
        f = bump_function([1.0, 1.0], 0.5)
        X = np.random.default_rng(3).uniform(0.4, 1.6, (50, 2))
        assert np.allclose(generator_values(p, f, X), [generator_apply(p, f, x) for x in X], rtol=1e-12, atol=1e-14)


class TestAdjoint:
    def test_zero(self):
        assert adjoint_generator_apply(p3(), constant_function(0.0, 3), [1, 2, 3]) == 0.0

    def test_one(self):
        p = ModelParams(2, 1, 1.0, 1.0, 1 / 64)
        assert adjoint_generator_apply(p, constant_function(1.0, 2), [0.4, 0.7]) == pytest.approx(-1.96875)

    def test_finite_difference(self):
        p = p3(kappa_p=0.8, lambda_p=0.1, delta_p=0.05, V=4)
        g = gaussian_function([1.0, 0.8, 1.2], 0.6)
        x0 = np.array([0.9, 1.1, 1.0])
        h = 1e-4

        def q(i, j, x):  # Gamma_ij * p
            return covariance(p, x)[i, j] * g.value(x)

        def r(i, x):
            return drift(p, x)[i] * g.value(x)

        E = np.eye(3) * h
        second = 0.0
        for i in range(3):
            for j in range(3):
                second += (
                    q(i, j, x0 + E[i] + E[j]) - q(i, j, x0 + E[i] - E[j]) - q(i, j, x0 - E[i] + E[j]) + q(i, j, x0 - E[i] - E[j])
                ) / (4 * h * h)
        first = sum((r(i, x0 + E[i]) - r(i, x0 - E[i])) / (2 * h) for i in range(3))
        fd = second / (2 * p.V) - first
        assert adjoint_generator_apply(p, g, x0) == pytest.approx(fd, rel=1e-5)
