import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cellfree_ris.channel import stacked_channels
from cellfree_ris.combining import build_wk, initial_combiners, mmse_combiner, mmse_combiners
from cellfree_ris.metrics import analytic_mse, sinr


def _cn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def test_closed_form(rng):
    H, F = _cn(rng, 6, 3), _cn(rng, 6, 4)
    W, a = build_wk(H, F, 2)
    np.testing.assert_allclose(W, H.conj().T @ F @ F.conj().T @ H, atol=1e-12)
    np.testing.assert_allclose(a, H.conj().T @ F[:, 2])
    u = mmse_combiner(W, a, 0.7)
    np.testing.assert_allclose(u, np.linalg.solve(W + 0.7 * np.eye(3), a), rtol=1e-10)


def test_combiner_minimizes_mse(rng):
    H, F = _cn(rng, 4, 2), _cn(rng, 4, 2)
    W, a = build_wk(H, F, 0)
    u = mmse_combiner(W, a, 0.5)
    best = analytic_mse(H, F, u, 0.5, 0)
    for _ in range(50):
        v = u + 1e-3 * _cn(rng, 2)
        assert analytic_mse(H, F, v, 0.5, 0) >= best - 1e-15


@settings(max_examples=60, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    n=st.integers(1, 9),
    Nr=st.integers(1, 3),
    K=st.integers(1, 4),
    s2=st.floats(1e-3, 10.0),
)
def test_mmse_identity(seed, n, Nr, K, s2):
    rng = np.random.default_rng(seed)
    H, F = _cn(rng, n, Nr), _cn(rng, n, K)
    k = int(rng.integers(K))
    W, a = build_wk(H, F, k)
    u = mmse_combiner(W, a, s2)
    if np.linalg.norm(u) == 0:
        return
    assert abs(analytic_mse(H, F, u, s2, k) - 1 / (1 + sinr(H, F, u, s2, k))) <= 1e-9


def test_noise_must_be_positive():
    with pytest.raises(ValueError):
        mmse_combiner(np.eye(2), np.ones(2), 0.0)


def test_set_helpers(small_instance):
    dims, cs, phases, F, noise, _ = small_instance
    Hs = stacked_channels(cs, phases)
    U = mmse_combiners(Hs, F.matrix, noise)
    assert U.u.shape == (dims.K, dims.Nr) and U.K == dims.K
    for k in range(dims.K):
        W, a = build_wk(Hs[k], F.matrix, k)
        np.testing.assert_allclose(U.u[k], mmse_combiner(W, a, noise[k]))
    np.testing.assert_array_equal(initial_combiners(3, 2).u, np.ones((3, 2)))
