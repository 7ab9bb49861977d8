import numpy as np
import pytest

from nlslab.errors import (
    DimensionTooSmall,
    EmptyPerturbation,
    ExponentOutOfRange,
    NonincreasingExponents,
    NonpositiveCoefficient,
)
from nlslab.nonlinearity import (
    NonlinearitySpec,
    consistency_chain,
    eval_D2F,
    eval_DF,
    eval_DF_minus_cF,
    eval_F,
    eval_f,
    potential_density,
    potential_density_prime,
    potential_density_quotient,
    validate,
    wirtinger_residual,
)


def test_validate_accepts_d5_quadratic():
    spec = NonlinearitySpec.from_terms(5, [(1.0, 2.0)])
    report = validate(spec)

    assert report.valid
    assert report.eps0 == pytest.approx(0.2)
    assert report.p1 == report.p2 == 2.0
    assert "p>=2" in report.growth_branch
    assert any("DF = sum_k" in fact for fact in report.facts)


def test_validate_rejections():
    # p = 2 sits on the mass-critical boundary when d = 4
    with pytest.raises(ExponentOutOfRange, match="outside the open interval"):
        NonlinearitySpec.from_terms(4, [(1.0, 2.0), (0.5, 2.5)])

    with pytest.raises(ExponentOutOfRange):
        NonlinearitySpec.from_terms(5, [(1.0, 7.0 / 3.0)])

    with pytest.raises(NonpositiveCoefficient):
        NonlinearitySpec.from_terms(5, [(-1.0, 2.0)])

    with pytest.raises(NonincreasingExponents):
        NonlinearitySpec.from_terms(5, [(1.0, 2.2), (1.0, 2.0)])

    with pytest.raises(DimensionTooSmall):
        NonlinearitySpec.from_terms(2, [(1.0, 3.5)])

    # All validation errors are ValueErrors
    with pytest.raises(ValueError):
        NonlinearitySpec.from_terms(5, [(0.0, 2.0)])


def test_empty_perturbation_only_in_diagnostic_mode():
    with pytest.raises(EmptyPerturbation):
        NonlinearitySpec.from_terms(5, [])

    spec = NonlinearitySpec.from_terms(5, [], diagnostic=True)
    report = validate(spec)
    assert report.valid and report.diagnostic
    assert report.eps0 is None
    with pytest.raises(EmptyPerturbation):
        spec.require_terms()


def test_monomial_values(spec_d5):
    assert eval_f(spec_d5, 1.0) == pytest.approx(1.0)
    assert eval_F(spec_d5, 1.0) == pytest.approx(2.0 / 3.0)
    assert eval_DF_minus_cF(spec_d5, 1.0, 2.0) == pytest.approx(2.0 / 3.0)

    assert eval_f(spec_d5, 2.0) == pytest.approx(4.0)
    assert eval_F(spec_d5, 2.0) == pytest.approx(16.0 / 3.0)
    assert eval_DF(spec_d5, 2.0) == pytest.approx(16.0)
    assert eval_D2F(spec_d5, 2.0) == pytest.approx(48.0)

    assert eval_f(spec_d5, 0.0) == 0
    assert eval_F(spec_d5, 0.0) == 0


def test_gauge_covariance(spec_d5):
    rng = np.random.default_rng(3)
    z = rng.normal(size=50) + 1j * rng.normal(size=50)
    theta = rng.uniform(0, 2 * np.pi, size=50)
    rotated = eval_f(spec_d5, np.exp(1j * theta) * z)
    assert np.allclose(rotated, np.exp(1j * theta) * eval_f(spec_d5, z), rtol=1e-14, atol=0)

    on_circle = np.exp(1j * theta)
    f = eval_f(spec_d5, on_circle)
    assert np.allclose(np.abs(f), 1.0)
    assert np.allclose((np.conj(on_circle) * f).imag, 0.0, atol=1e-15)


def test_vectorized_shapes():
    spec = NonlinearitySpec.from_terms(5, [(1.0, 2.0), (0.5, 2.2)])
    z = np.linspace(0, 3, 7) + 0.5j
    assert eval_F(spec, z).shape == (7,)
    assert isinstance(eval_F(spec, 1.5), float)
    assert isinstance(eval_f(spec, 1.5), complex)


def test_consistency_chain_on_random_samples():
    spec = NonlinearitySpec.from_terms(5, [(1.0, 2.0), (0.3, 2.25)])
    rng = np.random.default_rng(0)
    z = rng.normal(scale=2.0, size=500) + 1j * rng.normal(scale=2.0, size=500)
    assert consistency_chain(spec, z)


def test_wirtinger_derivative_matches_f():
    spec = NonlinearitySpec.from_terms(4, [(1.0, 2.5), (2.0, 2.8)])
    rng = np.random.default_rng(1)
    for _ in range(20):
        z = complex(rng.uniform(0.3, 2.0) * np.exp(1j * rng.uniform(0, 2 * np.pi)))
        assert wirtinger_residual(spec, z) < 1e-6


def test_potential_density_derivative(spec_d5):
    s = np.linspace(0.1, 4.0, 40)
    h = 1e-6
    numeric = (potential_density(spec_d5, s + h) - potential_density(spec_d5, s - h)) / (2 * h)
    assert np.allclose(numeric, potential_density_prime(spec_d5, s), rtol=1e-7)

    # 2 Phi'(|z|^2) z reproduces f(z) + |z|^(2^*-2) z
    z = np.sqrt(s)
    source = eval_f(spec_d5, z) + np.abs(z) ** (spec_d5.energy_critical - 2) * z
    assert np.allclose(2 * potential_density_prime(spec_d5, s) * z, source)

    linear_only = potential_density(spec_d5, s, critical=False)
    assert np.allclose(2 * linear_only, eval_F(spec_d5, z))


def test_potential_density_quotient(spec_d5):
    rng = np.random.default_rng(3)
    s_old = rng.uniform(0.0, 50.0, size=200)
    s_new = s_old + rng.uniform(0.5, 5.0, size=200)
    plain = (potential_density(spec_d5, s_new) - potential_density(spec_d5, s_old)) / (s_new - s_old)
    assert np.allclose(potential_density_quotient(spec_d5, s_new, s_old), plain, rtol=1e-12)
    assert np.allclose(potential_density_quotient(spec_d5, s_old, s_new), plain, rtol=1e-12)

    # Peak of a ground state: s ~ 1.4e3 moving by a few ulps
    s = np.full(5, 1354.0)
    ds = s * np.array([0.0, 1e-15, 1e-13, 1e-11, 1e-9])
    quotient = potential_density_quotient(spec_d5, s + ds, s)
    assert np.allclose(quotient, potential_density_prime(spec_d5, s + ds / 2), rtol=1e-13, atol=0)

    zero = np.zeros(2)
    edge = potential_density_quotient(spec_d5, np.array([0.0, 2.0]), zero)
    assert edge[0] == 0.0
    assert edge[1] == pytest.approx(float(potential_density(spec_d5, 2.0)) / 2.0, rel=1e-13)
