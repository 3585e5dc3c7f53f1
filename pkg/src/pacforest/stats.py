"""Out-of-bag bookkeeping and the empirical quantities the bounds consume.

Every estimator works from three arrays: a (m, n) matrix of +-1 voter
predictions, a boolean (m, n) membership matrix saying which rows count as
evaluation data for which voter, and the true labels. The three evaluation
modes only differ in how the membership matrix is assembled.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .forest import TIE_TOL, Dataset, Ensemble


class EvalMode(enum.Enum):
    OOB_ONLY = "oob"
    OOB_PLUS_VAL = "oob+val"
    VAL_ONLY = "val"


@dataclass(frozen=True)
class OobStatistics:
    per_tree_loss: np.ndarray
    per_tree_count: np.ndarray
    disagreement: np.ndarray
    joint_error: np.ndarray
    pair_count: np.ndarray
    n_gibbs: int
    n_pair: int
    mode: EvalMode
    oob_mv_loss: float | None = None

    @property
    def m(self):
        return len(self.per_tree_loss)

    @property
    def second_moment_matrix(self):
        """Empirical E[h_i h_j] on the pairwise evaluation sets, i.e. 1 - 2 d_ij."""
        return 1.0 - 2.0 * self.disagreement


def oob_sets(ens: Ensemble) -> list[np.ndarray]:
    """V_i = training rows that tree i never saw."""
    mask = ens.oob_mask
    sets = [np.flatnonzero(row) for row in mask]
    for i, s in enumerate(sets):
        if s.size == 0:
            raise ConfigurationError(f"tree {i} has an empty out-of-bag set; bounds cannot be evaluated")
    return sets


def membership(oob_mask, n_val: int, mode: EvalMode) -> np.ndarray:
    """Evaluation-set membership over [training rows | validation rows]."""
    oob_mask = np.asarray(oob_mask, dtype=bool)
    m = oob_mask.shape[0]
    if mode is EvalMode.OOB_ONLY:
        if n_val:
            raise ConfigurationError("OOB_ONLY mode takes no validation set")
        return oob_mask
    if n_val == 0:
        raise ConfigurationError(f"{mode.name} mode needs a nonempty validation set")
    val = np.ones((m, n_val), dtype=bool)
    if mode is EvalMode.VAL_ONLY:
        return np.hstack([np.zeros_like(oob_mask), val])
    return np.hstack([oob_mask, val])


def pairwise_matrices(predictions, member, labels):
    """Disagreement, joint error and sample counts for every voter pair.

    Entry (i, j) is computed on the rows that belong to both evaluation
    sets. The diagonal holds per-voter quantities on the voter's own set.
    """
    P = np.asarray(predictions, dtype=float)
    W = np.asarray(member, dtype=float)
    y = np.asarray(labels, dtype=float)
    WP = W * P
    WE = W * (P != y)
    counts = W @ W.T
    m = counts.shape[0]
    if np.any(counts <= 0):
        i, j = np.argwhere(counts <= 0)[0]
        raise ConfigurationError(f"voters {i} and {j} share no evaluation rows")
    agree = WP @ WP.T
    disagreement = (counts - agree) / (2.0 * counts)
    joint = (WE @ WE.T) / counts
    disagreement[np.diag_indices(m)] = 0.0
    return disagreement, joint, counts


def compute_statistics(predictions, member, labels, mode: EvalMode, oob_mv_loss=None) -> OobStatistics:
    """All estimators for the given membership matrix."""
    P = np.asarray(predictions)
    W = np.asarray(member, dtype=bool)
    per_count = W.sum(axis=1)
    if np.any(per_count == 0):
        i = int(np.argmin(per_count))
        raise ConfigurationError(f"voter {i} has an empty evaluation set")
    per_loss = ((P != labels) & W).sum(axis=1) / per_count
    d, e, counts = pairwise_matrices(P, W, labels)
    m = P.shape[0]
    if m > 1:
        off = ~np.eye(m, dtype=bool)
        n_pair = int(counts[off].min())
    else:
        n_pair = int(per_count[0])
    return OobStatistics(
        per_tree_loss=per_loss,
        per_tree_count=per_count,
        disagreement=d,
        joint_error=e,
        pair_count=counts.astype(np.int64),
        n_gibbs=int(per_count.min()),
        n_pair=n_pair,
        mode=mode,
        oob_mv_loss=oob_mv_loss,
    )


@dataclass(frozen=True)
class VoterEvidence:
    """Predictions and evaluation-set membership for a fixed voter set.

    Columns are training rows followed by validation rows (if any).
    """

    predictions: np.ndarray
    member: np.ndarray
    labels: np.ndarray
    oob_mask: np.ndarray
    mode: EvalMode

    @property
    def n_train(self):
        return self.oob_mask.shape[1]

    @property
    def train_predictions(self):
        return self.predictions[:, : self.n_train]

    @property
    def train_labels(self):
        return self.labels[: self.n_train]

    def complemented(self) -> "VoterEvidence":
        """Evidence for the voter set extended by the negation of every voter."""
        return VoterEvidence(
            predictions=np.vstack([self.predictions, -self.predictions]),
            member=np.vstack([self.member, self.member]),
            labels=self.labels,
            oob_mask=np.vstack([self.oob_mask, self.oob_mask]),
            mode=self.mode,
        )

    def statistics(self, weights=None) -> OobStatistics:
        m = self.predictions.shape[0]
        w = np.full(m, 1.0 / m) if weights is None else weights
        oob = oob_vote_loss(self.train_predictions, self.oob_mask, self.train_labels, w)
        return compute_statistics(self.predictions, self.member, self.labels, self.mode, oob_mv_loss=oob)


def gather_evidence(
    ens: Ensemble, train: Dataset, mode: EvalMode = EvalMode.OOB_ONLY, validation: Dataset | None = None
) -> VoterEvidence:
    """Predict every tree on the training (and validation) rows.

    ``validation`` must be given exactly when ``mode`` is not OOB_ONLY.
    """
    if (validation is None) != (mode is EvalMode.OOB_ONLY):
        raise ConfigurationError(f"{mode.name} mode and the validation set disagree")
    if ens.n_train != len(train):
        raise ConfigurationError("training set does not match the ensemble's bootstrap records")
    oob_sets(ens)
    mask = ens.oob_mask
    P = ens.predict_matrix(train.features)
    y = train.labels
    n_val = 0
    if validation is not None:
        P = np.hstack([P, ens.predict_matrix(validation.features)])
        y = np.concatenate([y, validation.labels])
        n_val = len(validation)
    return VoterEvidence(P, membership(mask, n_val, mode), y, mask, mode)


def collect_statistics(
    ens: Ensemble, train: Dataset, mode: EvalMode = EvalMode.OOB_ONLY, validation: Dataset | None = None
) -> OobStatistics:
    """Statistics for a trained forest in one evaluation mode."""
    return gather_evidence(ens, train, mode, validation).statistics(ens.weights.weights)


def gibbs_loss(stats: OobStatistics, rho) -> float:
    """rho-weighted average of per-voter losses on their own evaluation sets."""
    return float(np.asarray(rho, dtype=float) @ stats.per_tree_loss)


def disagreement(stats: OobStatistics, rho) -> float:
    rho = np.asarray(rho, dtype=float)
    return float(rho @ stats.disagreement @ rho)


def joint_error(stats: OobStatistics, rho) -> float:
    rho = np.asarray(rho, dtype=float)
    return float(rho @ stats.joint_error @ rho)


def effective_sizes(stats: OobStatistics) -> tuple[int, int]:
    if stats.n_gibbs <= 0 or stats.n_pair <= 0:
        raise ConfigurationError("evaluation sets are empty")
    return stats.n_gibbs, stats.n_pair


def oob_vote_loss(predictions, oob_mask, labels, weights) -> float:
    """Majority-vote loss where each row is voted on only by voters that did not train on it.

    Weights may be signed (a voter and its complement collapse into one
    signed weight). A row is an error when its out-of-bag margin is <= 0.
    Rows with no out-of-bag voter are skipped with a warning.
    """
    P = np.asarray(predictions, dtype=float)
    M = np.asarray(oob_mask, dtype=bool)
    w = np.asarray(weights, dtype=float)
    covered = M.any(axis=0)
    n_uncovered = int((~covered).sum())
    if n_uncovered:
        warnings.warn(f"{n_uncovered} training rows are in every bootstrap sample; skipped in the OOB estimate")
    if not covered.any():
        return float("nan")
    margin = np.asarray(labels, dtype=float) * (w @ (P * M))
    # same convention as the plain vote loss: a tied vote is a mistake
    return float(np.mean(margin[covered] <= TIE_TOL))


def oob_mv_estimate(ens: Ensemble, train: Dataset, weights=None) -> float:
    w = ens.weights.weights if weights is None else weights
    return oob_vote_loss(ens.predict_matrix(train.features), ens.oob_mask, train.labels, w)
