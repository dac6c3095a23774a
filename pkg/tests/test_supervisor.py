import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rmpiscn.supervisor import (
    ResidualState,
    check_per_output,
    classic_gain,
    fast_residual_sq,
    omega_init,
    omega_pool,
    project_p,
    r_schedule,
    scn1_step_residual,
    score_candidate,
    score_pool_rmpi,
    xi_classic,
    xi_rmpi,
)

from conftest import full_rank, lstsq_residual_sq


def instance(rng, N=12, L=3, m=1, mix=None):
    """Random (state, h, Y); ``mix`` blends h towards the residual to cover accept and reject."""
    H = full_rank(rng, N, L)
    Y = rng.standard_normal((N, m))
    state = ResidualState.from_pinv(H, np.linalg.pinv(H), Y)
    a = rng.uniform() if mix is None else mix
    h = a * state.e[:, 0] / (np.linalg.norm(state.e[:, 0]) or 1) + (1 - a) * rng.standard_normal(N) / 3
    return state, h, Y


def test_state_matches_lstsq(rng):
    state, _, Y = instance(rng, m=2)
    assert state.residual_sq == pytest.approx(lstsq_residual_sq(state.H, Y), rel=1e-12)
    empty = ResidualState.empty(Y)
    assert empty.n_nodes == 0 and empty.residual_sq == pytest.approx(float(np.sum(Y * Y)))


def test_project_p_is_orthogonal(rng):
    state, h, _ = instance(rng)
    p = project_p(h, state)
    assert np.abs(state.H.T @ p).max() < 1e-12
    assert np.allclose(h - p, state.H @ np.linalg.lstsq(state.H, h, rcond=None)[0])
    with pytest.raises(ValueError, match="length"):
        project_p(np.ones(3), state)


@pytest.mark.parametrize("m", [1, 3])
def test_fast_residual_matches_lstsq(rng, m):
    for _ in range(50):
        state, h, Y = instance(rng, m=m)
        p = project_p(h, state)
        direct = lstsq_residual_sq(np.column_stack([state.H, h]), Y)
        assert fast_residual_sq(state, p, Y) == pytest.approx(direct, rel=1e-9)


def test_fast_residual_from_empty_network(rng):
    Y = rng.standard_normal((8, 2))
    h = rng.standard_normal(8)
    state = ResidualState.empty(Y)
    assert fast_residual_sq(state, project_p(h, state), Y) == pytest.approx(
        lstsq_residual_sq(h[:, None], Y), rel=1e-12)


def test_fast_residual_rejects_null_direction(rng):
    state, _, Y = instance(rng)
    with pytest.raises(ValueError, match="no new direction"):
        fast_residual_sq(state, np.zeros(12), Y)


def test_xi_rmpi_sign(rng):
    agree = 0
    for _ in range(200):
        state, h, Y = instance(rng)
        r = rng.uniform(0.05, 0.99)
        p = project_p(h, state)
        xi = xi_rmpi(state, p, Y, r)
        new = fast_residual_sq(state, p, Y)
        assert (xi <= 0) == (new <= r * state.residual_sq)
        ratio = lstsq_residual_sq(np.column_stack([state.H, h]), Y) / state.residual_sq
        if abs(ratio - r) > 1e-9:
            assert (xi <= 0) == (ratio <= r)
            agree += 1
    assert agree > 150


def test_xi_rmpi_domain(rng):
    state, h, Y = instance(rng)
    for r in (0.0, 1.0):
        with pytest.raises(ValueError, match="r_star"):
            xi_rmpi(state, project_p(h, state), Y, r)


def test_single_weight_step_matches_scalar_lstsq(rng):
    e = rng.standard_normal((10, 2))
    h = rng.standard_normal(10)
    beta, e_new = scn1_step_residual(e, h)
    oracle = np.linalg.lstsq(h[:, None], e, rcond=None)[0][0]
    assert np.allclose(beta, oracle)
    assert np.allclose(e_new, e - np.outer(h, oracle))
    with pytest.raises(ValueError, match="nonzero"):
        scn1_step_residual(e, np.zeros(10))


def test_xi_classic_hand_value():
    e = np.array([1.0, 0.0])
    h = np.array([1.0, 1.0])
    # <e,h>^2/||h||^2 = 1/2; (1 - r)||e||^2 = 0.1
    assert xi_classic(e, h, 0.9) == pytest.approx(0.4)
    with pytest.raises(ValueError):
        xi_classic(e, h, 1.0)
    with pytest.raises(ValueError):
        xi_classic(e, np.zeros(2), 0.5)


def test_classic_sign_iff_single_weight_contraction(rng):
    for _ in range(300):
        e = rng.standard_normal(15)
        h = rng.uniform() * e + rng.standard_normal(15)
        r = rng.uniform(0.05, 0.99)
        beta = (e @ h) / (h @ h)
        margin = r * (e @ e) - np.sum((e - beta * h) ** 2)
        if abs(margin) > 1e-9:
            assert (xi_classic(e, h, r) >= 0) == (margin >= 0)


def test_full_refit_never_worse_than_single_weight(rng):
    for _ in range(100):
        state, h, Y = instance(rng, m=2)
        p = project_p(h, state)
        _, e1 = scn1_step_residual(state.e, h)
        r = rng.uniform(0.05, 0.99)
        assert fast_residual_sq(state, p, Y) <= np.sum(e1 * e1) + 1e-10
        assert xi_classic(state.e, h, r) <= r * state.residual_sq - fast_residual_sq(state, p, Y) + 1e-9


@pytest.mark.parametrize("m", [1, 3])
def test_per_output_conditions_iff(rng, m):
    checked = 0
    for _ in range(300):
        state, h, Y = instance(rng, m=m)
        r = rng.uniform(0.3, 0.99)
        p = project_p(h, state)
        chk = check_per_output(state, p, Y, r, h)
        Hl = np.column_stack([state.H, h])
        ratios = [lstsq_residual_sq(Hl, Y[:, [q]]) / state.e_sq_norms[q] for q in range(m)]
        if all(abs(x - r) > 1e-9 for x in ratios):
            assert chk.feasible == all(x <= r for x in ratios)
            assert np.array_equal(chk.energy, np.array(ratios) <= r)
            checked += 1
    assert checked > 250


def test_per_output_null_direction(rng):
    state, _, Y = instance(rng)
    h = state.H[:, 0] * 2.0
    chk = check_per_output(state, project_p(h, state), Y, 0.9, h)
    assert not chk.feasible and not chk.p_nonzero


class TestSchedule:
    def test_values(self):
        assert r_schedule(0.9, 0.7, 1) == pytest.approx(0.9 ** 1.4)
        assert r_schedule(0.9, 0.7, 1, literal=True) == pytest.approx(0.9 ** (2 ** 0.7))
        assert r_schedule(0.5, 1.0, 4) == pytest.approx(0.5 ** 1.25)

    def test_limits(self):
        assert r_schedule(0.9, 0.7, 10**9) == pytest.approx(0.9 ** 0.7)
        assert r_schedule(0.9, 0.7, 10**9, literal=True) == pytest.approx(0.9)

    def test_monotone_and_bounded(self):
        for r in (0.5, 0.9, 0.99):
            for a in (0.1, 0.5, 0.9, 1.0):
                vals = [r_schedule(r, a, L) for L in range(1, 2001)]
                assert all(x < y for x, y in zip(vals, vals[1:]))
                assert vals[-1] < r ** a

    @pytest.mark.parametrize("args", [(1.0, 0.5, 1), (0.0, 0.5, 1), (0.9, 0.0, 1), (0.9, 0.5, 0)])
    def test_domain(self, args):
        with pytest.raises(ValueError):
            r_schedule(*args)


class TestOmega:
    def test_proportional(self):
        Y = np.array([[1.0], [2.0], [3.0]])
        assert omega_init(Y[:, 0] * 4, Y) == pytest.approx(0.0, abs=1e-15)

    def test_orthogonal(self):
        Y = np.array([[1.0], [0.0]])
        assert omega_init(np.array([0.0, 5.0]), Y) == pytest.approx(1.0)

    def test_matches_scalar_lstsq(self, rng):
        Y = rng.standard_normal((9, 2))
        h = rng.standard_normal(9)
        oracle = sum(np.linalg.norm(Y[:, q] - h * np.linalg.lstsq(h[:, None], Y[:, q], rcond=None)[0][0])
                     for q in range(2))
        assert omega_init(h, Y) == pytest.approx(oracle)
        pool = np.column_stack([h, 2 * h, np.zeros(9)])
        om = omega_pool(pool, Y)
        assert om[0] == pytest.approx(oracle) and om[1] == pytest.approx(oracle)
        assert om[2] == math.inf


def test_pool_scores_match_single_candidate(rng):
    state, _, Y = instance(rng, m=2)
    C = rng.standard_normal((12, 6))
    C[:, 2] = state.H[:, 1]          # no new direction
    scores = score_pool_rmpi(state, C, Y, 0.8, tau_rank=1e-8)
    for j in range(6):
        one = score_candidate(C[:, j], state, Y, 0.8, tau_rank=1e-8)
        assert scores.feasible[j] == one.feasible
        if one.feasible:
            assert scores.xi[j] == pytest.approx(one.xi, rel=1e-10, abs=1e-12)
            assert scores.new_residual_sq[j] == pytest.approx(
                lstsq_residual_sq(np.column_stack([state.H, C[:, j]]), Y), rel=1e-9)
    assert not scores.feasible[2] and scores.xi[2] == math.inf


def test_classic_gain(rng):
    e = rng.standard_normal((7, 2))
    C = rng.standard_normal((7, 3))
    C[:, 1] = 0
    g = classic_gain(e, C)
    assert g[0] == pytest.approx(float(np.sum((e.T @ C[:, 0]) ** 2) / (C[:, 0] @ C[:, 0])))
    assert g[1] == -math.inf


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(4, 20), st.integers(1, 3))
def test_identity_property(seed, N, m):
    rng = np.random.default_rng(seed)
    L = int(rng.integers(1, N - 1))
    state, h, Y = instance(rng, N=N, L=L, m=m)
    p = project_p(h, state)
    if np.linalg.norm(p) < 1e-6:
        return
    assert fast_residual_sq(state, p, Y) == pytest.approx(
        lstsq_residual_sq(np.column_stack([state.H, h]), Y), rel=1e-9, abs=1e-12)
