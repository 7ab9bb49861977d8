import numpy as np
import pytest

from nlslab.errors import (
    BracketFailure,
    DimensionTooSmall,
    EmptyPerturbation,
    NoBracket,
    NonconvergedODE,
    ZeroField,
)
from nlslab.field import RadialGrid, gaussian, zeros
from nlslab.functionals import bubble_W, report, scaled_report
from nlslab.nonlinearity import NonlinearitySpec
from nlslab.variational import (
    ShootingConfig,
    bubble_family,
    gaussian_family,
    lambda_star,
    lambda_star_of,
    m_omega_upper_bounds,
    m_omega_upper_bounds_of_reports,
    rescaled_family,
    scan,
    shoot_ground_state,
    sweep_ground_states,
)


@pytest.fixture
def base_report(spec_d5):
    grid = RadialGrid.uniform(5, 2001, 20.0)
    return report(spec_d5, 1.0, gaussian(grid, amplitude=0.5))


def test_lambda_star_zeroes_K(base_report):
    lam = lambda_star_of(base_report)
    at_root = scaled_report(base_report, lam)
    assert abs(at_root.K) <= 1e-9 * at_root.kinetic
    assert scaled_report(base_report, 0.5 * lam).K > 0
    assert scaled_report(base_report, 2.0 * lam).K < 0


def test_lambda_star_is_scaling_covariant(base_report):
    lam = lambda_star_of(base_report)
    for mu in (0.1, 0.5, 3.0, 40.0):
        assert lambda_star_of(scaled_report(base_report, mu)) == pytest.approx(lam / mu, rel=1e-9)


def test_lambda_star_of_field(spec_d5):
    grid = RadialGrid.uniform(5, 2001, 20.0)
    u = gaussian(grid, amplitude=0.5)
    assert lambda_star(spec_d5, 1.0, u) == pytest.approx(lambda_star_of(report(spec_d5, 1.0, u)))
    with pytest.raises(ZeroField):
        lambda_star(spec_d5, 1.0, zeros(grid))


def test_lambda_star_bracket_failure(spec_d5):
    grid = RadialGrid.uniform(5, 2001, 20.0)
    # A field so large that K stays negative down to lambda = 1e-9
    rep = report(spec_d5, 1.0, gaussian(grid, amplitude=1e12))
    with pytest.raises(BracketFailure):
        lambda_star_of(rep)


@pytest.mark.parametrize("d, terms", [(4, [(1.0, 2.5)]), (5, [(1.0, 2.0)])])
def test_scan_certificates_on_random_mixtures(d, terms):
    spec = NonlinearitySpec.from_terms(d, terms)
    grid = RadialGrid.uniform(d, 2001, 25.0)
    fields = gaussian_family(grid, seed=0, count=100)
    assert len(fields) == 100
    for u in fields:
        result = scan(spec, 1.0, u)
        assert result.passed, result.certificates
        assert result.sign_changes == 1
        assert len(result.lambdas) == 200
        assert result.lambdas[0] == pytest.approx(result.lambda_star / 20)


def test_scan_respects_range(spec_d4):
    grid = RadialGrid.uniform(4, 2001, 20.0)
    result = scan(spec_d4, 0.5, gaussian(grid), lambda_range=(0.01, 100.0), n_points=50)
    assert len(result.K_vals) == 50
    assert result.lambdas[-1] == pytest.approx(100.0)
    assert result.passed, result.certificates


def test_ground_state(ground_d5):
    Q = ground_d5.Q.values.real
    assert ground_d5.K_residual < 1e-4
    assert ground_d5.pde_residual < 1e-2
    assert np.all(Q > 0)
    assert np.all(np.diff(Q) <= 1e-12 * Q[0])
    assert Q[0] == pytest.approx(ground_d5.a0)
    assert ground_d5.m_omega == pytest.approx(ground_d5.report.S_omega)
    assert ground_d5.gap == pytest.approx(ground_d5.sigma_threshold - ground_d5.m_omega)
    assert ground_d5.gap > 0
    assert lambda_star_of(ground_d5.report) == pytest.approx(1.0, abs=1e-2)


def test_ground_state_d4(ground_d4):
    Q = ground_d4.Q.values.real
    assert ground_d4.K_residual < 1e-4
    assert ground_d4.Q.grid.n == 8192
    assert np.all(Q > 0)
    assert Q[0] == pytest.approx(ground_d4.a0)
    assert ground_d4.gap > 0
    assert lambda_star_of(ground_d4.report) == pytest.approx(1.0, abs=1e-2)


def test_ground_state_rejects_loose_matches(spec_d4):
    coarse = RadialGrid.graded(4, 1024, 200.0, r_core=10.0)
    with pytest.raises(NonconvergedODE, match="Nehari"):
        shoot_ground_state(spec_d4, 1.0, grid=coarse)
    loose = shoot_ground_state(spec_d4, 1.0, ShootingConfig(K_tolerance=1.0), grid=coarse)
    assert loose.K_residual > 1e-4


async def test_sweep_orders_by_omega(spec_d5, grid_d5, ground_d5):
    (result,) = await sweep_ground_states(spec_d5, [2.0], grid=grid_d5, max_workers=1)
    assert result.omega == 2.0
    assert result.m_omega > ground_d5.m_omega
    assert result.a0 > ground_d5.a0


def test_ground_state_errors(spec_d5):
    with pytest.raises(DimensionTooSmall):
        shoot_ground_state(NonlinearitySpec.from_terms(3, [(1.0, 3.0)]), 1.0)
    with pytest.raises(EmptyPerturbation):
        shoot_ground_state(NonlinearitySpec.from_terms(5, [], diagnostic=True), 1.0)
    with pytest.raises(ValueError, match="positive"):
        shoot_ground_state(spec_d5, 0.0)
    with pytest.raises(NoBracket):
        shoot_ground_state(spec_d5, 1.0, ShootingConfig(sweep_points=3, sweep_factor=1.0001))


def test_rescaled_ground_states_project_back(ground_d5):
    trials = rescaled_family(ground_d5.report, [0.25, 0.5, 2.0, 4.0])
    bounds = m_omega_upper_bounds_of_reports(trials, m_omega=ground_d5.m_omega, sigma_threshold=ground_d5.sigma_threshold)

    assert len(bounds.values) == 4
    assert np.allclose(bounds.values, bounds.values[0], rtol=1e-10)
    assert bounds.above_m_omega
    assert bounds.below_threshold
    assert bounds.relative_excess < 1e-4
    assert bounds.nehari_identity_error < 1e-9


async def test_gaussian_trials_bound_m_omega(spec_d5, grid_d5, ground_d5):
    fields = gaussian_family(grid_d5, seed=1, count=8)
    bounds = await m_omega_upper_bounds(
        spec_d5, 1.0, fields, m_omega=ground_d5.m_omega, sigma_threshold=ground_d5.sigma_threshold
    )
    assert bounds.above_m_omega
    assert bounds.minimum == min(bounds.values)
    assert bounds.values[bounds.argmin] == bounds.minimum
    assert bounds.nehari_identity_error < 1e-9


def test_bounds_without_reference(base_report):
    bounds = m_omega_upper_bounds_of_reports([base_report])
    assert bounds.above_m_omega is None
    assert bounds.relative_excess is None
    with pytest.raises(ValueError, match="empty"):
        m_omega_upper_bounds_of_reports([])


def test_bubble_family_concentrates():
    grid = RadialGrid.graded(5, 2048, 20.0, r_core=4.0)
    W0 = bubble_W(grid).values[0].real
    fields = bubble_family(grid, [0.5, 0.1])
    for eps, u in zip([0.5, 0.1], fields):
        assert u.values[0].real == pytest.approx(W0 * eps**-1.5, rel=1e-6)
        assert np.max(np.abs(u.values[grid.r >= 2.0])) < 1e-20
