"""Numeric primitives shared by every bound: kl divergences, xi(n) and kl inversions."""

from __future__ import annotations

import enum
import math
from functools import lru_cache

import numpy as np
from scipy.special import gammaln, xlogy

# Largest n for which xi(n) is summed exactly; beyond it 2*sqrt(n) is used.
XI_EXACT_MAX_N = 100_000
# Bisection stops once the bracket stops shrinking in floating point or after this many halvings.
_MAX_BISECT = 200


class XiMode(enum.Enum):
    XI = "xi"
    TWO_SQRT_N = "two_sqrt_n"


def kl_bernoulli(p: float, q: float) -> float:
    """kl(p || q) between Bernoulli distributions, with 0 ln 0 = 0.

    Returns ``inf`` when q puts zero mass on an outcome that p supports.
    """
    if (p > 0.0 and q <= 0.0) or (p < 1.0 and q >= 1.0):
        return math.inf
    out = 0.0
    if p > 0.0:
        out += p * math.log(p / q)
    if p < 1.0:
        out += (1.0 - p) * math.log((1.0 - p) / (1.0 - q))
    return max(out, 0.0)


def kl_trivalent(p1: float, p2: float, q1: float, q2: float) -> float:
    """KL divergence between (p1, p2, 1-p1-p2) and (q1, q2, 1-q1-q2)."""
    ps = (p1, p2, 1.0 - p1 - p2)
    qs = (q1, q2, 1.0 - q1 - q2)
    out = 0.0
    for p, q in zip(ps, qs):
        if p <= 0.0:
            continue
        if q <= 0.0:
            return math.inf
        out += p * math.log(p / q)
    return max(out, 0.0)


def kl_divergence(rho, pi) -> float:
    """KL(rho || pi) for discrete distributions given as arrays."""
    rho = np.asarray(rho, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if np.any((rho > 0) & (pi <= 0)):
        return math.inf
    mask = rho > 0
    return float(max(np.sum(rho[mask] * np.log(rho[mask] / pi[mask])), 0.0))


@lru_cache(maxsize=4096)
def _xi_exact(n: int) -> float:
    k = np.arange(n + 1, dtype=float)
    log_terms = (
        gammaln(n + 1.0)
        - gammaln(k + 1.0)
        - gammaln(n - k + 1.0)
        + xlogy(k, k / n)
        + xlogy(n - k, 1.0 - k / n)
    )
    top = log_terms.max()
    return float(math.exp(top) * np.sum(np.exp(log_terms - top)))


def xi(n: int) -> float:
    """sum_k C(n,k) (k/n)^k (1-k/n)^(n-k), which lies in [sqrt(n), 2 sqrt(n)].

    Terms are combined in the log domain. For n above ``XI_EXACT_MAX_N`` the
    upper bracket 2*sqrt(n) is returned instead.
    """
    n = int(n)
    if n < 1:
        raise ValueError(f"xi(n) requires n >= 1, got {n}")
    if n > XI_EXACT_MAX_N:
        return 2.0 * math.sqrt(n)
    return _xi_exact(n)


def complexity_constant(n: int, mode: XiMode = XiMode.XI) -> float:
    """xi(n) or 2*sqrt(n), whichever ``mode`` selects."""
    if mode is XiMode.TWO_SQRT_N:
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        return 2.0 * math.sqrt(n)
    return xi(n)


def kl_inv_upper(p_hat: float, rhs: float) -> float:
    """Largest q in [p_hat, 1] with kl(p_hat || q) <= rhs.

    Bisection is run until the bracket cannot shrink further; the upper end
    of the bracket is returned so the result never undershoots the root.
    """
    p_hat = min(max(float(p_hat), 0.0), 1.0)
    if rhs < 0:
        raise ValueError(f"rhs must be nonnegative, got {rhs}")
    if p_hat >= 1.0 or math.isinf(rhs):
        return 1.0
    if rhs == 0.0:
        return p_hat
    lo, hi = p_hat, 1.0
    for _ in range(_MAX_BISECT):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if kl_bernoulli(p_hat, mid) > rhs:
            hi = mid
        else:
            lo = mid
    return hi


def kl_inv_lower(p_hat: float, rhs: float) -> float:
    """Smallest q in [0, p_hat] with kl(p_hat || q) <= rhs (mirror of kl_inv_upper)."""
    p_hat = min(max(float(p_hat), 0.0), 1.0)
    if rhs < 0:
        raise ValueError(f"rhs must be nonnegative, got {rhs}")
    if p_hat <= 0.0 or math.isinf(rhs):
        return 0.0
    if rhs == 0.0:
        return p_hat
    lo, hi = 0.0, p_hat
    for _ in range(_MAX_BISECT):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if kl_bernoulli(p_hat, mid) > rhs:
            lo = mid
        else:
            hi = mid
    return lo


# --- trivalent C-bound supremum -------------------------------------------------


def _cbound_value(d, e):
    """1 - (1 - (2e + d))^2 / (1 - 2d), vectorised."""
    d = np.asarray(d, dtype=float)
    e = np.asarray(e, dtype=float)
    denom = 1.0 - 2.0 * d
    with np.errstate(divide="ignore", invalid="ignore"):
        val = 1.0 - (1.0 - 2.0 * e - d) ** 2 / denom
    return np.where(denom > 0, val, 1.0)


def _trivalent_kl_vec(p1, p2, d, e):
    p3 = 1.0 - p1 - p2
    q3 = 1.0 - d - e
    with np.errstate(divide="ignore", invalid="ignore"):
        out = xlogy(p1, p1) - xlogy(p1, d) + xlogy(p2, p2) - xlogy(p2, e) + xlogy(p3, p3) - xlogy(p3, q3)
    bad = ((p1 > 0) & (d <= 0)) | ((p2 > 0) & (e <= 0)) | ((p3 > 0) & (q3 <= 0))
    return np.where(bad, np.inf, out)


def _d_interval(d_hat, e_hat, rhs, e):
    """For each e, the interval of d in [0, 1-e] with kl(d_hat, e_hat || d, e) <= rhs.

    Returns (lo, hi, ok); ``ok`` is False where no d qualifies.
    """
    e = np.asarray(e, dtype=float)
    p3 = 1.0 - d_hat - e_hat
    # The minimiser over d has a closed form; its kl value equals kl(e_hat || e).
    if d_hat + p3 > 0:
        d_star = d_hat * (1.0 - e) / (d_hat + p3)
    else:
        d_star = np.zeros_like(e)
    k_star = _trivalent_kl_vec(d_hat, e_hat, d_star, e)
    ok = k_star <= rhs

    # left end: kl decreasing on [0, d_star]
    lo_a = np.zeros_like(e)
    lo_b = d_star.copy()
    left_free = _trivalent_kl_vec(d_hat, e_hat, lo_a, e) <= rhs
    # right end: kl increasing on [d_star, 1 - e]
    hi_a = d_star.copy()
    hi_b = 1.0 - e
    right_free = _trivalent_kl_vec(d_hat, e_hat, hi_b, e) <= rhs
    for _ in range(64):
        mid = 0.5 * (lo_a + lo_b)
        inside = _trivalent_kl_vec(d_hat, e_hat, mid, e) <= rhs
        lo_b = np.where(inside, mid, lo_b)
        lo_a = np.where(inside, lo_a, mid)
        mid = 0.5 * (hi_a + hi_b)
        inside = _trivalent_kl_vec(d_hat, e_hat, mid, e) <= rhs
        hi_a = np.where(inside, mid, hi_a)
        hi_b = np.where(inside, hi_b, mid)
    lo = np.where(left_free, 0.0, lo_b)
    hi = np.where(right_free, 1.0 - e, hi_a)
    return lo, hi, ok


def _best_over_d(d_hat, e_hat, rhs, e):
    """Max over admissible d of the C-bound value, per e (-inf where infeasible)."""
    e = np.atleast_1d(np.asarray(e, dtype=float))
    lo, hi, ok = _d_interval(d_hat, e_hat, rhs, e)
    cap = np.minimum(2.0 * (np.sqrt(e) - e), 1.0 - 2.0 * e)
    hi = np.minimum(hi, cap)
    lo = np.maximum(lo, 0.0)
    ok = ok & (lo <= hi) & (2.0 * e + lo < 1.0)
    # The value increases in d below d = 2e and decreases above it.
    d_opt = np.clip(2.0 * e, lo, hi)
    val = _cbound_value(d_opt, e)
    return np.where(ok, val, -np.inf)


def trivalent_cbound_sup(d_hat: float, e_hat: float, rhs: float, grid_size: int = 10_000) -> float | None:
    """Supremum of 1 - (1-(2e+d))^2/(1-2d) over the trivalent kl ball around (d_hat, e_hat).

    The feasible set also requires d <= 2(sqrt(e) - e) and 2e + d < 1.
    Returns ``None`` when no admissible (d, e) exists; callers read that as
    the trivial bound 1.

    The search is a grid over e followed by golden-section refinement around
    the best cell; for each e the best d is found in closed form once the
    kl level set has been bracketed by bisection.
    """
    if d_hat + e_hat > 1.0 + 1e-12:
        raise ValueError(f"d_hat + e_hat must be <= 1, got {d_hat} + {e_hat}")
    if rhs < 0:
        raise ValueError(f"rhs must be nonnegative, got {rhs}")
    d_hat = float(min(max(d_hat, 0.0), 1.0))
    e_hat = float(min(max(e_hat, 0.0), 1.0 - d_hat))

    if rhs == 0.0:
        if d_hat <= 2.0 * (math.sqrt(e_hat) - e_hat) and 2.0 * e_hat + d_hat < 1.0:
            return float(_cbound_value(d_hat, e_hat))
        return None

    # Projection of the kl ball onto e is the Bernoulli kl ball around e_hat.
    e_lo = kl_inv_lower(e_hat, rhs)
    e_hi = min(kl_inv_upper(e_hat, rhs), 0.5)
    if e_lo > e_hi:
        return None
    grid = np.linspace(e_lo, e_hi, grid_size)
    vals = _best_over_d(d_hat, e_hat, rhs, grid)
    k = int(np.argmax(vals))
    best = float(vals[k])
    if not np.isfinite(best):
        return None

    a = grid[max(k - 1, 0)]
    b = grid[min(k + 1, grid_size - 1)]
    phi = lambda t: float(_best_over_d(d_hat, e_hat, rhs, t)[0])  # noqa: E731
    inv_golden = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - inv_golden * (b - a)
    dd = a + inv_golden * (b - a)
    fc, fd = phi(c), phi(dd)
    for _ in range(60):
        if b - a < 1e-13:
            break
        if fc >= fd:
            b, dd, fd = dd, c, fc
            c = b - inv_golden * (b - a)
            fc = phi(c)
        else:
            a, c, fc = c, dd, fd
            dd = a + inv_golden * (b - a)
            fd = phi(dd)
    best = max(best, fc, fd)
    return min(best, 1.0)
