import math
import warnings

import numpy as np
import pytest

from pacforest.bound_math import kl_divergence
from pacforest.bounds import lambda_gibbs_bound
from pacforest.errors import InfeasibleMomentError
from pacforest.forest import TreeConfig, train_forest
from pacforest.optimize import (
    AlignedPosterior,
    best_candidate,
    golden_section_min,
    gibbs_posterior,
    lambda_closed_form,
    moment_range,
    optimize_cbound,
    optimize_lambda,
    select_mu,
    self_complement,
    solve_moment_qp,
    sweep_mu,
)
from pacforest.stats import EvalMode, compute_statistics, gather_evidence, oob_vote_loss

from . import oracles
from .conftest import separable


class _Voters:
    """Stand-in for a self-complemented set when only its size matters."""

    def __init__(self, m):
        self.m = m


def _shared(P, y):
    P = np.asarray(P)
    return compute_statistics(P, np.ones(P.shape, bool), np.asarray(y), EvalMode.VAL_ONLY)


def _loss_stats(losses, n):
    """Statistics with the given per-voter losses, each on n shared rows."""
    losses = np.asarray(losses)
    m = len(losses)
    P = np.ones((m, n), int)
    for i, l in enumerate(losses):
        P[i, : int(round(l * n))] = -1
    return _shared(P, np.ones(n, int))


# --- lambda ---------------------------------------------------------------------


def test_golden_section_finds_minimum():
    assert golden_section_min(lambda x: (x - 0.3) ** 2, 0, 2) == pytest.approx(0.3, abs=1e-8)


def test_equal_losses_keep_uniform():
    s = _loss_stats([0.2, 0.2, 0.2, 0.2], 100)
    rho, _ = optimize_lambda(s)
    np.testing.assert_allclose(rho.weights, 0.25, atol=1e-12)


def test_two_voters_mass_goes_to_the_good_one():
    s = _loss_stats([0.0, 0.5], 2000)
    rho, rep = optimize_lambda(s)
    assert rho.weights[0] > 0.9
    assert rho.provenance.value == "lambda_opt"
    assert 0 < rho.lambda_star < 2


def test_bound_nonincreasing_and_converges():
    rng = np.random.default_rng(0)
    for _ in range(20):
        s = _loss_stats(rng.uniform(0.05, 0.45, size=15), int(rng.integers(50, 800)))
        rho, rep = optimize_lambda(s)
        h = rep.extra["history"]
        assert all(b <= a + 1e-12 for a, b in zip(h, h[1:]))
        assert rep.extra["converged"]
        assert rep.gibbs_bound == pytest.approx(h[-1], abs=1e-12)
        assert np.argmax(rho.weights) == np.argmin(s.per_tree_loss)


def test_lambda_step_matches_closed_form():
    rng = np.random.default_rng(1)
    for _ in range(50):
        g, n, k = rng.uniform(0.01, 0.4), int(rng.integers(20, 5000)), rng.exponential(1)
        lam = golden_section_min(lambda t: lambda_gibbs_bound(g, n, k, 0.05, t), 1e-12, 2 - 1e-12)
        assert lam == pytest.approx(lambda_closed_form(g, n, k, 0.05), abs=1e-6)


@pytest.mark.parametrize("m", [2, 3])
def test_rho_step_is_exact_minimiser(m):
    rng = np.random.default_rng(m)
    losses = rng.uniform(0.05, 0.4, size=m)
    n, lam, delta = 60, 0.7, 0.05
    pi = np.full(m, 1 / m)

    def f(rho):
        return lambda_gibbs_bound(float(rho @ losses), n, kl_divergence(rho, pi), delta, lam)

    step = f(gibbs_posterior(losses, pi, lam, n))
    grid = min(f(r) for r in oracles.simplex_grid(m, 400 if m == 2 else 150))
    assert step <= grid + 1e-12
    assert grid - step <= 1e-4


def test_nonconvergence_warns():
    s = _loss_stats([0.1, 0.3, 0.2], 100)
    with pytest.warns(UserWarning, match="without converging"):
        optimize_lambda(s, max_iter=1, tol=0.0)


# --- self-complemented sets and the aligned QP -------------------------------------


def test_self_complement_negates(toy):
    ens = train_forest(toy, 3, TreeConfig(2), seed=0)
    scs = self_complement(ens)
    P = scs.predict_matrix(toy.features)
    assert scs.n_voters == 6
    np.testing.assert_array_equal(P[3:], -P[:3])


def test_single_tree_pair_and_uniform_gibbs(toy):
    ens = train_forest(toy, 1, TreeConfig(2), seed=0)
    P = self_complement(ens).predict_matrix(toy.features)
    assert set(P[:, 0]) == {-1, 1}
    s = _shared(P, toy.labels)
    assert float(np.full(2, 0.5) @ s.per_tree_loss) == 0.5
    assert s.disagreement[0, 1] == 1.0


def test_aligned_posterior_views():
    a = AlignedPosterior(np.array([0.5, 0.0]), 0.5)
    np.testing.assert_allclose(a.rho, [0.5, 0.0, 0.0, 0.5])
    np.testing.assert_allclose(a.signed_weights, [0.5, -0.5])
    assert a.complement_mass == 0.5 and a.alignment_error() == 0.0


def _toy_pair():
    # two voters on eight shared rows, all labels +1
    P = np.array([[1, 1, 1, 1, 1, 1, -1, -1], [1, 1, 1, -1, -1, 1, 1, -1]])
    return P, _shared(P, np.ones(8, int))


def test_two_voter_optimum_matches_grid():
    P, s = _toy_pair()
    a = 1 - 2 * s.per_tree_loss
    A = s.second_moment_matrix
    hi = moment_range(s)[1]
    for mu in (0.05, 0.3 * hi, 0.7 * hi, 0.95 * hi, hi):
        post, rep = optimize_cbound(_Voters(2), s, mu)
        w = post.signed_weights
        best = math.inf
        # walk the feasible segment {a.w = mu} inside the box
        for w1 in np.linspace(-0.5, 0.5, 10_000):
            w2 = (mu - a[0] * w1) / a[1]
            if abs(w2) <= 0.5:
                v = np.array([w1, w2])
                best = min(best, float(v @ A @ v))
        assert float(w @ A @ w) == pytest.approx(best, abs=1e-3)
        assert float(a @ w) == pytest.approx(mu, abs=1e-9)


def test_qp_matches_cvxopt():
    cvxopt = pytest.importorskip("cvxopt")
    cvxopt.solvers.options["show_progress"] = False
    rng = np.random.default_rng(4)
    P = rng.choice([-1, 1], size=(12, 80), p=[0.3, 0.7])
    s = _shared(P, np.ones(80, int))
    a = 1 - 2 * s.per_tree_loss
    A = s.second_moment_matrix
    m = 12
    for frac in (0.2, 0.6, 0.9):
        mu = frac * np.abs(a).sum() / m
        res = solve_moment_qp(A, a, mu, 1 / m)
        G = np.vstack([np.eye(m), -np.eye(m)])
        h = np.full(2 * m, 1 / m)
        sol = cvxopt.solvers.qp(
            cvxopt.matrix(2 * A), cvxopt.matrix(np.zeros(m)), cvxopt.matrix(G), cvxopt.matrix(h),
            cvxopt.matrix(a[None, :]), cvxopt.matrix(np.array([mu])),
        )
        w_ref = np.array(sol["x"]).ravel()
        assert res.objective == pytest.approx(float(w_ref @ A @ w_ref), abs=1e-6)
        assert res.kkt_residual <= 1e-6


def test_alignment_at_every_iterate():
    rng = np.random.default_rng(5)
    P = rng.choice([-1, 1], size=(8, 50), p=[0.35, 0.65])
    s = _shared(P, np.ones(50, int))
    errors = []
    optimize_cbound(_Voters(8), s, 0.2, callback=lambda it, post: errors.append(post.alignment_error()))
    assert errors and max(errors) <= 1e-9
    assert all(np.all((p >= 0) & (p <= 1 / 8)) for p in [AlignedPosterior(np.zeros(8), 1 / 8).q])


def test_exchangeable_voters_give_uniform_q():
    # three voters, each wrong on its own four rows: same loss, same pairwise disagreement
    P = np.ones((3, 12), int)
    for i in range(3):
        P[i, 4 * i: 4 * i + 4] = -1
    s = _shared(P, np.ones(12, int))
    post, _ = optimize_cbound(_Voters(3), s, 0.2)
    np.testing.assert_allclose(post.q, post.q.mean(), atol=1e-6)


def test_objective_not_above_uniform_feasible_point():
    rng = np.random.default_rng(6)
    P = rng.choice([-1, 1], size=(10, 60), p=[0.3, 0.7])
    s = _shared(P, np.ones(60, int))
    a = 1 - 2 * s.per_tree_loss
    A = s.second_moment_matrix
    c = 0.05
    w0 = np.full(10, c)
    mu = float(a @ w0)
    post, rep = optimize_cbound(_Voters(10), s, mu)
    assert rep.extra["second_moment"] <= float(w0 @ A @ w0) + 1e-12


def test_first_moment_identity_for_aligned_posterior():
    P, s = _toy_pair()
    post, rep = optimize_cbound(_Voters(2), s, 0.3)
    rho = post.rho
    P2 = np.vstack([P, -P])
    margins = rho @ P2  # labels are all +1
    L2 = float(rho @ np.mean(P2 != 1, axis=1))
    assert margins.mean() == pytest.approx(1 - 2 * L2, abs=1e-12)
    assert margins.mean() == pytest.approx(rep.extra["first_moment"], abs=1e-12)


def test_infeasible_mu_names_range():
    P, s = _toy_pair()
    lo, hi = moment_range(s)
    with pytest.raises(InfeasibleMomentError, match="feasible range"):
        optimize_cbound(_Voters(2), s, hi + 0.1)


def test_aligned_report_uses_pair_size():
    P, s = _toy_pair()
    _, rep = optimize_cbound(_Voters(2), s, 0.3)
    assert rep.ingredients.n_pair == s.n_pair
    assert rep.bound_name.value == "c_aligned"


# --- mu selection ---------------------------------------------------------------


def _monotone_toy():
    rng = np.random.default_rng(139)
    P = rng.choice([-1, 1], size=(3, 12))
    y = np.ones(12, int)
    W = rng.uniform(size=(3, 12)) < 0.6
    W[:, :2] = True
    return P, W, y, compute_statistics(P, W, y, EvalMode.OOB_ONLY)


def test_monotone_toy_picks_smallest_mu():
    P, W, y, s = _monotone_toy()
    hi = moment_range(s)[1]
    grid = [hi * 0.2, hi * 0.5, hi * 0.9]
    losses = [oob_vote_loss(P, W, y, optimize_cbound(_Voters(3), s, mu)[0].signed_weights) for mu in grid]
    assert losses[0] < losses[1] < losses[2]
    assert select_mu(_Voters(3), s, P, W, y, grid) == grid[0]


def test_single_point_grid():
    P, W, y, s = _monotone_toy()
    assert select_mu(_Voters(3), s, P, W, y, [0.1]) == 0.1


def test_infeasible_point_skipped_then_all_infeasible_fails():
    P, W, y, s = _monotone_toy()
    hi = moment_range(s)[1]
    with pytest.warns(UserWarning, match="skipping"):
        assert select_mu(_Voters(3), s, P, W, y, [hi * 0.5, hi + 1]) == hi * 0.5
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(InfeasibleMomentError):
            select_mu(_Voters(3), s, P, W, y, [hi + 1, hi + 2])
    with pytest.raises(ValueError):
        select_mu(_Voters(3), s, P, W, y, [])


def test_strong_forest_keeps_mass_on_original_trees():
    data = separable(1200, seed=11)
    ens = train_forest(data, 40, TreeConfig(None), seed=0)
    ev = gather_evidence(ens, data)
    s = ev.statistics()
    cands = sweep_mu(self_complement(ens), s, ev.train_predictions, ev.oob_mask, ev.train_labels)
    best = best_candidate(cands)
    assert best.posterior.complement_mass < 1e-3
