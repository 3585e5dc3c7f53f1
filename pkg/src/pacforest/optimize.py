"""Posterior optimisation: the lambda bound and the aligned C-bound.

The aligned C-bound works on a self-complemented voter set {h_1..h_m,
-h_1..-h_m} with a uniform prior, so each pair (h_i, -h_i) carries mass
1/m. A posterior aligned on that prior is fixed by q_i = rho(h_i) in
[0, 1/m]. It is convenient to optimise the signed weight
w_i = rho(h_i) - rho(-h_i) = 2 q_i - 1/m, since the vote and both margin
moments are linear/quadratic in w:

    first moment   = sum_i w_i (1 - 2 L_i)
    second moment  = w^T A w,    A_ij = 1 - 2 d_ij.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .bound_math import XiMode, kl_divergence
from .bounds import BoundReport, aligned_cbound, lambda_bound, lambda_gibbs_bound
from .errors import InfeasibleMomentError, NumericError
from .forest import Ensemble
from .posterior import PosteriorWeights, Provenance
from .stats import OobStatistics, oob_vote_loss

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


# --- lambda bound ---------------------------------------------------------------


def golden_section_min(f, a, b, tol=1e-9, max_iter=200):
    """Minimiser of a unimodal ``f`` on [a, b]."""
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return c if fc <= fd else d


def lambda_closed_form(gibbs_emp, n, kl_div, delta):
    """Stationary point of the lambda bound in lambda for fixed rho."""
    c = kl_div + math.log(2.0 * math.sqrt(n) / delta)
    return 2.0 / (math.sqrt(2.0 * n * gibbs_emp / c + 1.0) + 1.0)


def best_lambda_bound(gibbs_emp, n, kl_div, delta=0.05) -> BoundReport:
    """Lambda bound for a fixed posterior at its best lambda."""
    lam = golden_section_min(lambda t: lambda_gibbs_bound(gibbs_emp, n, kl_div, delta, t), 1e-12, 2.0 - 1e-12)
    return lambda_bound(gibbs_emp, n, kl_div, delta, lam)


def gibbs_posterior(losses, prior, lam, n):
    """rho_i proportional to prior_i * exp(-lam * n * loss_i), computed stably."""
    logits = np.log(prior) - lam * n * np.asarray(losses, dtype=float)
    logits -= logits.max()
    rho = np.exp(logits)
    return rho / rho.sum()


def optimize_lambda(stats: OobStatistics, delta=0.05, prior=None, max_iter=200, tol=1e-9):
    """Alternate exact rho-steps and lambda-steps on the lambda bound.

    The rho-step is the Gibbs posterior for the current lambda; the
    lambda-step is a golden-section search on (0, 2). Each step minimises
    the bound in its own block, so the bound never increases; this is
    asserted on every iteration.

    Returns ``(PosteriorWeights, BoundReport)``. The report's ``extra`` holds
    the bound history and whether the tolerance was reached.
    """
    losses = np.asarray(stats.per_tree_loss, dtype=float)
    n = stats.n_gibbs
    m = len(losses)
    pi = np.full(m, 1.0 / m) if prior is None else np.asarray(prior, dtype=float)

    def bound_at(rho, lam):
        return lambda_gibbs_bound(float(rho @ losses), n, kl_divergence(rho, pi), delta, lam)

    def lambda_step(rho, lam_old):
        lam = golden_section_min(lambda t: bound_at(rho, t), 1e-12, 2.0 - 1e-12)
        return lam if bound_at(rho, lam) <= bound_at(rho, lam_old) else lam_old

    rho = pi.copy()
    lam = lambda_step(rho, 1.0)
    best = bound_at(rho, lam)
    history = [best]
    converged = False
    for _ in range(max_iter):
        rho_new = gibbs_posterior(losses, pi, lam, n)
        # the Gibbs step is exact; guard only against round-off
        if bound_at(rho_new, lam) <= bound_at(rho, lam):
            rho = rho_new
        lam = lambda_step(rho, lam)
        value = bound_at(rho, lam)
        if value > best + 1e-12:
            raise NumericError(f"lambda bound increased from {best} to {value}")
        history.append(value)
        done = best - value < tol
        best = min(best, value)
        if done:
            converged = True
            break
    if not converged:
        warnings.warn(f"lambda-bound optimisation stopped after {max_iter} iterations without converging")

    kl_div = kl_divergence(rho, pi)
    report = lambda_bound(float(rho @ losses), n, kl_div, delta, lam)
    report.extra.update({"iterations": len(history) - 1, "converged": converged, "history": history})
    return PosteriorWeights(rho, Provenance.LAMBDA_OPT, lambda_star=lam), report


# --- self-complemented sets and aligned posteriors ---------------------------------


@dataclass(frozen=True)
class SelfComplementedSet:
    """A forest plus the negation of each of its trees; voter m+i is -h_i."""

    base: Ensemble

    @property
    def m(self):
        return len(self.base)

    @property
    def n_voters(self):
        return 2 * self.m

    def predict_matrix(self, X):
        P = self.base.predict_matrix(X)
        return np.vstack([P, -P])

    @property
    def oob_mask(self):
        mask = self.base.oob_mask
        return np.vstack([mask, mask])


def self_complement(ens: Ensemble) -> SelfComplementedSet:
    return SelfComplementedSet(ens)


@dataclass(frozen=True)
class AlignedPosterior:
    """q_i = rho(h_i); the complement -h_i gets pair_mass - q_i."""

    q: np.ndarray
    pair_mass: float

    @property
    def rho(self):
        return np.concatenate([self.q, self.pair_mass - self.q])

    @property
    def signed_weights(self):
        return 2.0 * self.q - self.pair_mass

    @property
    def complement_mass(self):
        return float(np.sum(self.pair_mass - self.q))

    def alignment_error(self):
        rho = self.rho
        m = len(self.q)
        return float(np.max(np.abs(rho[:m] + rho[m:] - self.pair_mass)))

    def to_posterior(self) -> PosteriorWeights:
        rho = np.clip(self.rho, 0.0, None)
        return PosteriorWeights(rho / rho.sum(), Provenance.C_OPT)


def moment_range(stats: OobStatistics):
    """Interval of first margin moments reachable by aligned posteriors."""
    a = 1.0 - 2.0 * np.asarray(stats.per_tree_loss, dtype=float)
    top = float(np.abs(a).sum() / len(a))
    return -top, top


def _project(z, a, mu, bound):
    """Euclidean projection of z onto {w : |w_i| <= bound, a.w = mu}."""
    if not np.any(a):
        return np.clip(z, -bound, bound)

    def g(tau):
        return float(a @ np.clip(z - tau * a, -bound, bound))

    # g(tau) is nonincreasing and piecewise linear with kinks at the
    # breakpoints, so bisect over the sorted breakpoints and interpolate.
    nz = a != 0
    brk = np.unique(np.concatenate([(z[nz] - bound) / a[nz], (z[nz] + bound) / a[nz]]))
    lo_i, hi_i = 0, len(brk) - 1
    if g(brk[0]) <= mu:
        return np.clip(z - brk[0] * a, -bound, bound)
    if g(brk[-1]) >= mu:
        return np.clip(z - brk[-1] * a, -bound, bound)
    while hi_i - lo_i > 1:
        mid = (lo_i + hi_i) // 2
        if g(brk[mid]) > mu:
            lo_i = mid
        else:
            hi_i = mid
    lo, hi = brk[lo_i], brk[hi_i]
    w_lo = np.clip(z - lo * a, -bound, bound)
    w_hi = np.clip(z - hi * a, -bound, bound)
    g_lo, g_hi = float(a @ w_lo), float(a @ w_hi)
    if g_lo == g_hi:
        return w_lo
    t = (g_lo - mu) / (g_lo - g_hi)
    return (1.0 - t) * w_lo + t * w_hi


def _largest_eigenvalue(A, iters=500, seed=0):
    v = np.random.default_rng(seed).standard_normal(A.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        u = A @ v
        norm = np.linalg.norm(u)
        if norm == 0:
            return 0.0
        v = u / norm
        if abs(norm - lam) <= 1e-10 * norm:
            lam = norm
            break
        lam = norm
    return lam


@dataclass
class QPResult:
    w: np.ndarray
    objective: float
    kkt_residual: float
    iterations: int
    history: list = field(default_factory=list)


def solve_moment_qp(A, a, mu, bound, max_iter=10_000, tol=1e-6, callback=None) -> QPResult:
    """min w^T A w  subject to  a.w = mu,  |w_i| <= bound.

    Accelerated projected gradient with a constant 1/L step and
    function-value restarts; every iterate is feasible. Stops when the
    gradient-mapping norm falls below ``tol``.

    A built from pairwise estimates on different row sets can be
    indefinite; the result is then a stationary point, not a certified
    global minimum.
    """
    A = np.asarray(A, dtype=float)
    a = np.asarray(a, dtype=float)
    lip = 2.0 * max(_largest_eigenvalue(A), 1e-12) * 1.01
    step = 1.0 / lip

    def f(w):
        return float(w @ A @ w)

    top = float(np.abs(a).sum()) * bound
    w = _project(np.sign(a) * bound * (mu / top if top > 0 else 0.0), a, mu, bound)
    y, t = w.copy(), 1.0
    fw = f(w)
    residual = math.inf
    history = [fw]
    it = 0
    for it in range(1, max_iter + 1):
        w_new = _project(y - step * 2.0 * (A @ y), a, mu, bound)
        f_new = f(w_new)
        if f_new > fw:
            # restart momentum from the last accepted point
            y, t = w.copy(), 1.0
            w_new = _project(w - step * 2.0 * (A @ w), a, mu, bound)
            f_new = f(w_new)
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = w_new + ((t - 1.0) / t_new) * (w_new - w)
        w, fw, t = w_new, f_new, t_new
        history.append(fw)
        if callback is not None:
            callback(it, w)
        residual = lip * float(np.linalg.norm(w - _project(w - step * 2.0 * (A @ w), a, mu, bound)))
        if residual <= tol:
            break
    return QPResult(w, fw, residual, it, history)


def _signed_to_aligned(w, m):
    pair = 1.0 / m
    q = np.clip(0.5 * (w + pair), 0.0, pair)
    return AlignedPosterior(q, pair)


def optimize_cbound(scs: SelfComplementedSet, stats: OobStatistics, mu, delta=0.05,
                    xi_mode=XiMode.XI, callback=None, max_iter=10_000):
    """Aligned posterior minimising the second margin moment at first moment ``mu``.

    ``stats`` are the base forest's statistics (m voters). The returned
    report is the aligned C-bound at the optimum with n = n_pair.
    ``callback(iteration, AlignedPosterior)`` is invoked on every iterate.
    """
    m = stats.m
    if scs.m != m:
        raise ValueError("statistics and voter set sizes differ")
    low, high = moment_range(stats)
    if not low - 1e-12 <= mu <= high + 1e-12:
        raise InfeasibleMomentError(mu, low, high)
    mu = min(max(mu, low), high)
    a = 1.0 - 2.0 * np.asarray(stats.per_tree_loss, dtype=float)
    A = stats.second_moment_matrix
    cb = None if callback is None else (lambda it, w: callback(it, _signed_to_aligned(w, m)))
    res = solve_moment_qp(A, a, mu, 1.0 / m, max_iter=max_iter, callback=cb)
    post = _signed_to_aligned(res.w, m)
    w = post.signed_weights
    first = float(a @ w)
    second = float(w @ A @ w)
    gibbs = 0.5 * (1.0 - first)
    dis = 0.5 * (1.0 - second)
    report = aligned_cbound(gibbs, dis, stats.n_pair, delta, xi_mode)
    report.extra.update({
        "mu": float(mu),
        "first_moment": first,
        "second_moment": second,
        "kkt_residual": res.kkt_residual,
        "qp_iterations": res.iterations,
    })
    return post, report


def default_mu_grid(stats: OobStatistics, size=20):
    """Log-spaced first moments from 1% of the largest reachable one up to it."""
    _, high = moment_range(stats)
    if high <= 0:
        raise InfeasibleMomentError(0.0, -high, high)
    return np.geomspace(high / 100.0, high, size)


@dataclass
class MuCandidate:
    mu: float
    oob_loss: float
    bound: float
    posterior: AlignedPosterior
    report: BoundReport


def sweep_mu(scs, stats, train_predictions, oob_mask, train_labels, mu_grid=None, delta=0.05,
             xi_mode=XiMode.XI) -> list[MuCandidate]:
    """Run the aligned optimisation for each mu and record its out-of-bag vote loss.

    Infeasible grid points are skipped with a warning.
    """
    grid = default_mu_grid(stats) if mu_grid is None else np.asarray(mu_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("mu grid is empty")
    out = []
    for mu in grid:
        try:
            post, report = optimize_cbound(scs, stats, float(mu), delta, xi_mode)
        except InfeasibleMomentError as exc:
            warnings.warn(f"skipping mu={mu:.6g}: {exc}")
            continue
        loss = oob_vote_loss(train_predictions, oob_mask, train_labels, post.signed_weights)
        out.append(MuCandidate(float(mu), loss, report.mv_bound, post, report))
    if not out:
        raise InfeasibleMomentError(float(grid[0]), *moment_range(stats))
    return out


def best_candidate(candidates: list[MuCandidate]) -> MuCandidate:
    """Lowest OOB loss; ties go to the lower bound, then to the smaller mu."""
    return min(candidates, key=lambda c: (round(c.oob_loss, 12), round(c.bound, 12), c.mu))


def select_mu(scs, stats, train_predictions, oob_mask, train_labels, mu_grid=None, delta=0.05,
              xi_mode=XiMode.XI) -> float:
    cands = sweep_mu(scs, stats, train_predictions, oob_mask, train_labels, mu_grid, delta, xi_mode)
    return best_candidate(cands).mu
