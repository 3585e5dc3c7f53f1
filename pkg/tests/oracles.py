"""Reference implementations that share no code with the package.

They are slow and straightforward on purpose: scipy root finding instead of
hand-written bisection, explicit loops instead of matrix products, dense
grids instead of nested searches.
"""

import itertools
import math

import numpy as np
from scipy.optimize import brentq
from scipy.stats import entropy


def kl(p, q):
    """Bernoulli kl through scipy's relative entropy."""
    if q <= 0.0:
        return 0.0 if p == 0.0 else math.inf
    if q >= 1.0:
        return 0.0 if p == 1.0 else math.inf
    return float(entropy([p, 1.0 - p], [q, 1.0 - q]))


def kl3(p1, p2, q1, q2):
    p = np.array([p1, p2, 1.0 - p1 - p2])
    q = np.array([q1, q2, 1.0 - q1 - q2])
    if np.any((q <= 0) & (p > 0)):
        return math.inf
    return float(entropy(p, q))


def kl_upper(p_hat, rhs):
    if p_hat >= 1.0:
        return 1.0
    if kl(p_hat, 1.0 - 1e-15) <= rhs:
        return 1.0
    if rhs == 0:
        return p_hat
    return brentq(lambda q: kl(p_hat, q) - rhs, p_hat, 1.0 - 1e-15, xtol=1e-15, rtol=1e-15, maxiter=500)


def kl_lower(p_hat, rhs):
    if p_hat <= 0.0:
        return 0.0
    if kl(p_hat, 1e-15) <= rhs:
        return 0.0
    if rhs == 0:
        return p_hat
    return brentq(lambda q: kl(p_hat, q) - rhs, 1e-15, p_hat, xtol=1e-15, rtol=1e-15, maxiter=500)


def xi_direct(n):
    """Plain sum with math.comb, exact rationals avoided only by float conversion."""
    total = 0.0
    for k in range(n + 1):
        t = math.comb(n, k) * (k / n) ** k * (1 - k / n) ** (n - k)
        total += t
    return total


def trivalent_sup_grid(d_hat, e_hat, rhs, size=2000):
    """Max of the C-bound expression over a size x size grid covering the kl ball.

    The box is the product of the two Bernoulli kl balls around d_hat and
    e_hat, which contains the trivalent ball (marginalisation never raises
    kl). Returns None when no grid point is admissible.
    """
    d_lo, d_hi = kl_lower(d_hat, rhs), kl_upper(d_hat, rhs)
    e_lo, e_hi = kl_lower(e_hat, rhs), min(kl_upper(e_hat, rhs), 0.5)
    d = np.linspace(d_lo, d_hi, size)[:, None]
    e = np.linspace(e_lo, e_hi, size)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        s = 1.0 - d - e
        terms = []
        for p, q in ((d_hat, d), (e_hat, e), (1.0 - d_hat - e_hat, s)):
            terms.append(np.where(p > 0, p * np.log(p / q), 0.0))
        div = terms[0] + terms[1] + terms[2]
        div = np.where(s < 0, np.inf, div)
        ok = (div <= rhs) & (d <= 2 * (np.sqrt(e) - e)) & (2 * e + d < 1) & (s >= 0)
        val = 1.0 - (1.0 - (2 * e + d)) ** 2 / (1.0 - 2 * d)
    if not ok.any():
        return None
    return float(np.max(np.where(ok, val, -np.inf)))


def pairwise_by_loops(P, member, y):
    """Disagreement, joint error and counts pair by pair."""
    m, n = P.shape
    D = np.zeros((m, m))
    E = np.zeros((m, m))
    C = np.zeros((m, m), dtype=int)
    for i, j in itertools.product(range(m), range(m)):
        rows = [k for k in range(n) if member[i, k] and member[j, k]]
        C[i, j] = len(rows)
        if rows and i != j:
            D[i, j] = sum(P[i, k] != P[j, k] for k in rows) / len(rows)
        if rows:
            E[i, j] = sum(P[i, k] != y[k] and P[j, k] != y[k] for k in rows) / len(rows)
    return D, E, C


def oob_vote_by_loops(P, oob, y, w):
    errors, covered = 0, 0
    for k in range(P.shape[1]):
        voters = [i for i in range(P.shape[0]) if oob[i, k]]
        if not voters:
            continue
        covered += 1
        s = sum(w[i] * P[i, k] for i in voters)
        errors += y[k] * s <= 0
    return errors / covered


def simplex_grid(m, steps):
    """All probability vectors of length m with coordinates on a 1/steps lattice."""
    for c in itertools.product(range(steps + 1), repeat=m - 1):
        if sum(c) <= steps:
            yield np.array(list(c) + [steps - sum(c)], dtype=float) / steps
