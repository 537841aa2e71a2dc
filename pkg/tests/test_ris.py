import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cellfree_ris.channel import SystemDims, stacked_channels
from cellfree_ris.checks import random_channel_set
from cellfree_ris.combining import mmse_combiners
from cellfree_ris.metrics import weighted_sum_mse
from cellfree_ris.precoding import initial_precoder
from cellfree_ris.ris import (
    PhaseShifts,
    RisWorkspace,
    build_ris_workspace,
    lipschitz_estimate,
    p3_objective,
    project_unit_disc,
    random_phases,
    round_unit_modulus,
    solve_p3,
)


def _setup(rng, L=2, K=2, R=2, M=3, Nt=2, Nr=2):
    dims = SystemDims(L=L, K=K, R=R, M=M, Nt=Nt, Nr=Nr)
    cs = random_channel_set(dims, rng)
    phases = random_phases(dims, rng)
    F = initial_precoder(L, K, Nt, 1.0, rng)
    noise = rng.uniform(0.2, 1.0, K)
    weights = rng.uniform(0.5, 2.0, K)
    U = mmse_combiners(stacked_channels(cs, phases), F.matrix, noise)
    return dims, cs, phases, F, U, noise, weights


complex_arrays = st.lists(
    st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False), min_size=1, max_size=12
)


@settings(max_examples=100, deadline=None)
@given(values=complex_arrays)
def test_projection_closed_form(values):
    z = np.array(values)
    p = project_unit_disc(z)
    assert np.all(np.abs(p) <= 1 + 1e-15)
    for zi, pi in zip(z, p):
        expected = zi if abs(zi) <= 1 else zi / abs(zi)
        assert pi == pytest.approx(expected, abs=1e-15)
        # no other point of the disc is closer
        for angle in np.linspace(0, 2 * np.pi, 16, endpoint=False):
            for r in (0.0, 0.5, 1.0):
                assert abs(zi - pi) <= abs(zi - r * np.exp(1j * angle)) + 1e-12


def test_phase_shift_container():
    ph = PhaseShifts([1, 1j, 0.5, -1])
    assert ph.RM == 4 and ph.row.shape == (1, 4)
    np.testing.assert_array_equal(ph.theta, np.diag(ph.phi))
    assert ph.per_ris(2).shape == (2, 2)
    with pytest.raises(ValueError):
        PhaseShifts([1.5])
    np.testing.assert_allclose(np.abs(round_unit_modulus(ph).phi), 1.0)
    np.testing.assert_array_equal(round_unit_modulus(PhaseShifts.zeros(2)).phi, [1, 1])


def test_coupling_identity(rng):
    for _ in range(10):
        dims, cs, phases, F, U, noise, weights = _setup(rng)
        ws = build_ris_workspace(cs, U, F, weights)
        other = PhaseShifts(project_unit_disc(2 * (rng.random(dims.RM) - 0.5) + 1j * rng.random(dims.RM)))
        d_p1 = (weighted_sum_mse(cs, other, F, U, weights, noise).weighted_sum_mse
                - weighted_sum_mse(cs, phases, F, U, weights, noise).weighted_sum_mse)
        assert p3_objective(other, ws) - p3_objective(phases, ws) == pytest.approx(d_p1, abs=1e-10)


def test_sigma_is_hermitian_psd(rng):
    _, cs, _, F, U, _, weights = _setup(rng)
    ws = build_ris_workspace(cs, U, F, weights)
    np.testing.assert_allclose(ws.sigma, ws.sigma.conj().T)
    assert np.linalg.eigvalsh(ws.sigma).min() > -1e-10


def test_combined_channel_identity(rng):
    _, cs, phases, F, U, _, weights = _setup(rng)
    ws = build_ris_workspace(cs, U, F, weights)
    from cellfree_ris.channel import effective_channel

    for l in range(2):
        for k in range(2):
            expected = U.u[k].conj() @ effective_channel(cs, phases, l, k).conj().T
            np.testing.assert_allclose(ws.combined_channel(phases, l, k), expected, atol=1e-12)


def test_separable_case_is_projection(rng):
    u = (rng.standard_normal(6) + 1j * rng.standard_normal(6)) * 1.5
    ws = RisWorkspace.from_quadratic(np.eye(6), u)
    sol = solve_p3(ws, np.zeros(6), max_iters=2000, tol=0)
    np.testing.assert_allclose(sol.phases.phi, project_unit_disc(-u), atol=1e-8)


def test_linear_objective_goes_to_boundary(rng):
    u = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    sol = solve_p3(RisWorkspace.from_quadratic(np.zeros((4, 4)), u), np.zeros(4))
    np.testing.assert_allclose(sol.phases.phi, -u / np.abs(u))


def test_history_monotone_and_feasible(rng):
    for _ in range(10):
        _, cs, phases, F, U, _, weights = _setup(rng, M=8)
        ws = build_ris_workspace(cs, U, F, weights)
        sol = solve_p3(ws, phases)
        assert np.all(np.diff(sol.history) <= 1e-12 * np.abs(sol.history[:-1]))
        assert np.all(np.abs(sol.phases.phi) <= 1 + 1e-12)
        assert sol.objective == pytest.approx(p3_objective(sol.phases, ws))


def test_lipschitz_estimate(rng):
    A = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
    S = A @ A.conj().T
    assert lipschitz_estimate(S, iters=200) == pytest.approx(np.linalg.eigvalsh(S).max(), rel=1e-6)
    assert lipschitz_estimate(np.zeros((3, 3))) == 0.0


def test_random_phases_unit_modulus(rng):
    ph = random_phases(SystemDims(L=1, K=1, R=3, M=4, Nt=1, Nr=1), rng)
    assert ph.RM == 12
    np.testing.assert_allclose(np.abs(ph.phi), 1.0)


def test_stop_rule_certifies_gap(rng):
    # rank-deficient Sigma: slow directions that a relative-change stop misses
    for _ in range(5):
        A = rng.standard_normal((6, 2)) + 1j * rng.standard_normal((6, 2))
        u = 2 * (rng.standard_normal(6) + 1j * rng.standard_normal(6))
        ws = RisWorkspace.from_quadratic(A @ A.conj().T, u)
        sol = solve_p3(ws, np.zeros(6), max_iters=100_000, tol=1e-8)
        ref = solve_p3(ws, sol.phases.phi, max_iters=100_000, tol=1e-13)
        assert -1e-12 <= sol.objective - ref.objective <= 1e-8
