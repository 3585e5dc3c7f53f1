from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class Provenance(enum.Enum):
    UNIFORM = "uniform"
    LAMBDA_OPT = "lambda_opt"
    C_OPT = "c_opt"


@dataclass(frozen=True)
class PosteriorWeights:
    """A probability vector over voters plus where it came from."""

    weights: np.ndarray
    provenance: Provenance = Provenance.UNIFORM
    lambda_star: float | None = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a nonempty vector")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be nonnegative and sum to 1")
        if self.lambda_star is not None and not 0.0 < self.lambda_star < 2.0:
            raise ValueError(f"lambda must lie in (0, 2), got {self.lambda_star}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, m: int) -> "PosteriorWeights":
        return cls(np.full(m, 1.0 / m), Provenance.UNIFORM)

    def __len__(self):
        return len(self.weights)

    def to_dict(self):
        return {
            "provenance": self.provenance.value,
            "lambda_star": self.lambda_star,
            "weights": [float(x) for x in self.weights],
        }
