"""Upper bounds on the majority-vote loss, each returned with its ingredients.

Each function returns a :class:`BoundReport` that carries the bound and
every ingredient needed to recompute it.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field

from .bound_math import (
    XiMode,
    complexity_constant,
    kl_inv_lower,
    kl_inv_upper,
    trivalent_cbound_sup,
)

TRIVIAL_LEVEL = 0.5


class BoundName(enum.Enum):
    PBKL = "pbkl"
    SH = "sh"
    C1 = "c1"
    C2 = "c2"
    LAMBDA = "lambda"
    C_ORACLE = "c_oracle"
    C_ALIGNED = "c_aligned"


@dataclass
class Ingredients:
    gibbs_emp: float | None = None
    d_emp: float | None = None
    e_emp: float | None = None
    mv_emp: float | None = None
    kl_div: float = 0.0
    n_gibbs: int | None = None
    n_pair: int | None = None
    delta: float = 0.05
    lam: float | None = None
    xi_mode: str = XiMode.XI.value
    # Confidence spent on each simultaneously-held sub-bound; sums to delta.
    delta_shares: dict = field(default_factory=dict)


@dataclass
class BoundReport:
    bound_name: BoundName
    mv_bound: float
    ingredients: Ingredients
    gibbs_bound: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def trivial(self) -> bool:
        return self.mv_bound >= TRIVIAL_LEVEL

    def to_dict(self) -> dict:
        """Flat JSON-ready record; ingredient keys sit next to the bound value."""
        out = {
            "bound_name": self.bound_name.value,
            "mv_bound": self.mv_bound,
            "gibbs_bound": self.gibbs_bound,
            "trivial_flag": self.trivial,
        }
        ing = asdict(self.ingredients)
        shares = ing.pop("delta_shares")
        ing["lambda"] = ing.pop("lam")
        out.update(ing)
        for k, v in shares.items():
            out[f"delta_share_{k}"] = v
        for k, v in self.extra.items():
            out[k] = v
        return out


def _check_delta(delta):
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")


def _check_n(n, what="n"):
    if n is None or n < 1:
        raise ValueError(f"{what} must be >= 1, got {n}")


def pbkl(gibbs_emp, n, kl_div, delta=0.05, xi_mode=XiMode.XI) -> BoundReport:
    """kl-inverted bound on the Gibbs loss, doubled for the majority vote."""
    _check_delta(delta)
    _check_n(n)
    rhs = (kl_div + math.log(complexity_constant(n, xi_mode) / delta)) / n
    g = kl_inv_upper(gibbs_emp, rhs)
    return BoundReport(
        BoundName.PBKL,
        mv_bound=2.0 * g,
        gibbs_bound=g,
        ingredients=Ingredients(
            gibbs_emp=gibbs_emp, kl_div=kl_div, n_gibbs=int(n), delta=delta,
            xi_mode=xi_mode.value, delta_shares={"gibbs": delta},
        ),
    )


def sh_bound(mv_emp_on_val, n_val, delta=0.05, xi_mode=XiMode.XI) -> BoundReport:
    """kl bound for the final vote as a single hypothesis on held-out data."""
    _check_delta(delta)
    if n_val is None or n_val < 1:
        raise ValueError("single-hypothesis bound needs a nonempty validation set")
    rhs = math.log(complexity_constant(n_val, xi_mode) / delta) / n_val
    b = kl_inv_upper(mv_emp_on_val, rhs)
    return BoundReport(
        BoundName.SH,
        mv_bound=b,
        ingredients=Ingredients(
            mv_emp=mv_emp_on_val, n_gibbs=int(n_val), delta=delta,
            xi_mode=xi_mode.value, delta_shares={"mv": delta},
        ),
    )


def cbound_oracle(m1, m2) -> float:
    """1 - m1^2 / m2 from the first two margin moments."""
    if m1 <= 0:
        raise ValueError("oracle C-bound requires positive first moment")
    if m2 <= 0:
        raise ValueError("second margin moment must be positive")
    return 1.0 - m1 * m1 / m2


def cbound_from_ingredients(b, d):
    """C-bound from a Gibbs-loss upper bound b and a disagreement lower bound d.

    Returns the trivial 1 when b >= 1/2 or 1 - 2d <= 0; negative values clamp to 0.
    """
    if b >= 0.5 or 1.0 - 2.0 * d <= 0.0:
        return 1.0
    return max(0.0, 1.0 - (1.0 - 2.0 * b) ** 2 / (1.0 - 2.0 * d))


def c1_bound(gibbs_emp, n_gibbs, d_emp, n_pair, kl_div, delta=0.05, xi_mode=XiMode.XI) -> BoundReport:
    """C-bound from an upper bound on the Gibbs loss and a lower bound on the disagreement.

    Both sub-bounds must hold at once, so each gets delta/2.
    """
    _check_delta(delta)
    _check_n(n_gibbs, "n_gibbs")
    _check_n(n_pair, "n_pair")
    half = delta / 2.0
    b = kl_inv_upper(gibbs_emp, (kl_div + math.log(complexity_constant(n_gibbs, xi_mode) / half)) / n_gibbs)
    d = kl_inv_lower(d_emp, (2.0 * kl_div + math.log(complexity_constant(n_pair, xi_mode) / half)) / n_pair)
    return BoundReport(
        BoundName.C1,
        mv_bound=cbound_from_ingredients(b, d),
        gibbs_bound=b,
        ingredients=Ingredients(
            gibbs_emp=gibbs_emp, d_emp=d_emp, kl_div=kl_div, n_gibbs=int(n_gibbs), n_pair=int(n_pair),
            delta=delta, xi_mode=xi_mode.value, delta_shares={"gibbs": half, "disagreement": half},
        ),
        extra={"gibbs_upper": b, "disagreement_lower": d},
    )


def c2_bound(d_emp, e_emp, n_pair, kl_div, delta=0.05, xi_mode=XiMode.XI) -> BoundReport:
    """Supremum of the C-bound over the trivalent kl ball around (d_emp, e_emp)."""
    _check_delta(delta)
    _check_n(n_pair, "n_pair")
    rhs = (2.0 * kl_div + math.log((complexity_constant(n_pair, xi_mode) + n_pair) / delta)) / n_pair
    sup = trivalent_cbound_sup(d_emp, e_emp, rhs)
    value = 1.0 if sup is None else max(0.0, sup)
    return BoundReport(
        BoundName.C2,
        mv_bound=value,
        ingredients=Ingredients(
            d_emp=d_emp, e_emp=e_emp, kl_div=kl_div, n_pair=int(n_pair), delta=delta,
            xi_mode=xi_mode.value, delta_shares={"trivalent": delta},
        ),
        extra={"feasible": sup is not None},
    )


def lambda_gibbs_bound(gibbs_emp, n, kl_div, delta, lam) -> float:
    if not 0.0 < lam < 2.0:
        raise ValueError(f"lambda must lie in (0, 2), got {lam}")
    c = kl_div + math.log(2.0 * math.sqrt(n) / delta)
    return gibbs_emp / (1.0 - lam / 2.0) + c / (lam * (1.0 - lam / 2.0) * n)


def lambda_bound(gibbs_emp, n, kl_div, delta, lam) -> BoundReport:
    """Pinsker-relaxed bound on the Gibbs loss at a fixed lambda in (0, 2), doubled for the vote."""
    _check_delta(delta)
    _check_n(n)
    g = lambda_gibbs_bound(gibbs_emp, n, kl_div, delta, lam)
    return BoundReport(
        BoundName.LAMBDA,
        mv_bound=2.0 * g,
        gibbs_bound=g,
        ingredients=Ingredients(
            gibbs_emp=gibbs_emp, kl_div=kl_div, n_gibbs=int(n), delta=delta, lam=lam,
            xi_mode=XiMode.TWO_SQRT_N.value, delta_shares={"gibbs": delta},
        ),
    )


def aligned_cbound(gibbs_emp, d_emp, n, delta=0.05, xi_mode=XiMode.XI) -> BoundReport:
    """C-bound for posteriors aligned on the prior over a self-complemented voter set.

    Uses Hoeffding-style deviations for both the Gibbs loss and the
    disagreement; no KL term appears.
    """
    _check_delta(delta)
    _check_n(n)
    eps = math.sqrt(math.log(2.0 * complexity_constant(n, xi_mode) / delta) / (2.0 * n))
    r = min(0.5, gibbs_emp + eps)
    d = max(0.0, d_emp - eps)
    return BoundReport(
        BoundName.C_ALIGNED,
        mv_bound=cbound_from_ingredients(r, d),
        gibbs_bound=r,
        ingredients=Ingredients(
            gibbs_emp=gibbs_emp, d_emp=d_emp, n_pair=int(n), delta=delta,
            xi_mode=xi_mode.value, delta_shares={"joint": delta},
        ),
        extra={"gibbs_upper": r, "disagreement_lower": d},
    )
