"""Experiment harness: data splits, the three settings, depth sweeps and report files."""

from __future__ import annotations

import csv
import enum
import io
import json
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .bound_math import XiMode, kl_divergence
from .bounds import c1_bound, c2_bound, pbkl, sh_bound
from .errors import ConfigurationError
from .forest import Dataset, SplitFeatureMode, TreeConfig, train_forest, vote_loss
from .optimize import best_candidate, best_lambda_bound, optimize_lambda, self_complement, sweep_mu
from .stats import EvalMode, OobStatistics, gather_evidence, oob_vote_loss

log = logging.getLogger(__name__)

TREE_COUNTS = (100, 200, 500, 1000)
# Seed-sequence word reserved for the split shuffle; tree generators use
# (seed, tree_index) with tree_index < 2**32, so the streams never collide.
SPLIT_STREAM = 2**32


class Setting(enum.Enum):
    BAGGING = "bagging"
    VALIDATION = "validation"
    OPTIMIZE = "optimize"


@dataclass(frozen=True)
class ExperimentConfig:
    setting: Setting
    dataset_path: str
    label_column: str | None = None
    positive_label: str | None = None
    classes: tuple | None = None
    seed: int = 0
    delta: float = 0.05
    trees: int | None = None  # None means the automatic rule
    tree_config: TreeConfig = field(default_factory=TreeConfig)
    eval_mode: EvalMode | None = None
    xi_mode: XiMode = XiMode.XI
    repeats: int = 1
    output: str | None = None

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ConfigurationError(f"delta must lie in (0, 1), got {self.delta}")
        if self.trees is not None and self.trees < 1:
            raise ConfigurationError(f"tree count must be positive, got {self.trees}")
        if self.repeats < 1:
            raise ConfigurationError("repeats must be at least 1")
        allowed = {
            Setting.BAGGING: {EvalMode.OOB_ONLY},
            Setting.OPTIMIZE: {EvalMode.OOB_ONLY},
            Setting.VALIDATION: {EvalMode.OOB_PLUS_VAL, EvalMode.VAL_ONLY},
        }[self.setting]
        if self.eval_mode is not None and self.eval_mode not in allowed:
            raise ConfigurationError(f"{self.eval_mode.value} evaluation does not apply to the {self.setting.value} setting")

    def to_dict(self):
        return {
            "setting": self.setting.value,
            "dataset_path": str(self.dataset_path),
            "label_column": self.label_column,
            "positive_label": self.positive_label,
            "classes": list(self.classes) if self.classes else None,
            "seed": self.seed,
            "delta": self.delta,
            "trees": "auto" if self.trees is None else self.trees,
            "max_depth": self.tree_config.max_depth,
            "features": self.tree_config.split_feature_mode.value,
            "eval_mode": None if self.eval_mode is None else self.eval_mode.value,
            "xi_mode": self.xi_mode.value,
            "repeats": self.repeats,
        }


@dataclass(frozen=True)
class SplitPlan:
    train_indices: np.ndarray
    validation_indices: np.ndarray
    test_indices: np.ndarray


def make_split(n: int, setting: Setting, seed: int) -> SplitPlan:
    """Test gets N//2 rows, validation N//4 (validation setting only), training the rest."""
    perm = np.random.default_rng([int(seed), SPLIT_STREAM]).permutation(n)
    n_test = n // 2
    n_val = n // 4 if setting is Setting.VALIDATION else 0
    return SplitPlan(
        train_indices=np.sort(perm[n_test + n_val:]),
        validation_indices=np.sort(perm[n_test:n_test + n_val]),
        test_indices=np.sort(perm[:n_test]),
    )


def auto_tree_count(n: int) -> int:
    """Largest of 100, 200, 500, 1000 below N/4; 100 when none fits."""
    fits = [m for m in TREE_COUNTS if m < n / 4]
    if not fits:
        warnings.warn(f"N={n} is too small for the automatic tree count; using {TREE_COUNTS[0]} trees")
        return TREE_COUNTS[0]
    return fits[-1]


# --- evaluation helpers ---------------------------------------------------------


def bound_suite(stats: OobStatistics, rho, kl_div, delta, xi_mode) -> dict:
    """PBkl (both complexity constants), C1 and C2 for posterior ``rho``."""
    rho = np.asarray(rho, dtype=float)
    gibbs = float(rho @ stats.per_tree_loss)
    d = float(rho @ stats.disagreement @ rho)
    e = float(rho @ stats.joint_error @ rho)
    other = XiMode.TWO_SQRT_N if xi_mode is XiMode.XI else XiMode.XI
    reports = {
        "pbkl": pbkl(gibbs, stats.n_gibbs, kl_div, delta, xi_mode),
        f"pbkl_{other.value}": pbkl(gibbs, stats.n_gibbs, kl_div, delta, other),
        "c1": c1_bound(gibbs, stats.n_gibbs, d, stats.n_pair, kl_div, delta, xi_mode),
        "c2": c2_bound(d, e, stats.n_pair, kl_div, delta, xi_mode),
    }
    reports["pbkl"].extra["primary"] = True
    reports[f"pbkl_{other.value}"].extra["primary"] = False
    return {
        "gibbs_emp": gibbs,
        "d_emp": d,
        "e_emp": e,
        "n_gibbs": stats.n_gibbs,
        "n_pair": stats.n_pair,
        "bounds": reports,
    }


def _split(data: Dataset, plan: SplitPlan):
    val = data.subset(plan.validation_indices) if plan.validation_indices.size else None
    return data.subset(plan.train_indices), val, data.subset(plan.test_indices)


def _modes(cfg: ExperimentConfig):
    if cfg.setting is Setting.VALIDATION:
        return [cfg.eval_mode] if cfg.eval_mode else [EvalMode.OOB_PLUS_VAL, EvalMode.VAL_ONLY]
    return [EvalMode.OOB_ONLY]


def _train(cfg, data, seed):
    plan = make_split(len(data), cfg.setting, seed)
    train, val, test = _split(data, plan)
    m = auto_tree_count(len(data)) if cfg.trees is None else cfg.trees
    ens = train_forest(train, m, cfg.tree_config, seed=seed)
    return plan, train, val, test, ens


def _standard_run(cfg: ExperimentConfig, data: Dataset, seed: int) -> dict:
    plan, train, val, test, ens = _train(cfg, data, seed)
    m = len(ens)
    u = np.full(m, 1.0 / m)
    P_test = ens.predict_matrix(test.features)
    out = {
        "seed": seed,
        "n_train": len(train),
        "n_val": 0 if val is None else len(val),
        "n_test": len(test),
        "n_trees": m,
        "test_mv_loss": vote_loss(P_test, test.labels, u),
        "test_gibbs_loss": float(np.mean(P_test != test.labels)),
        "modes": {},
    }
    for mode in _modes(cfg):
        ev = gather_evidence(ens, train, mode, val if mode is not EvalMode.OOB_ONLY else None)
        stats = ev.statistics(u)
        entry = bound_suite(stats, u, 0.0, cfg.delta, cfg.xi_mode)
        entry["oob_mv_loss"] = stats.oob_mv_loss
        out["modes"][mode.value] = entry
    if val is not None:
        val_loss = vote_loss(ens.predict_matrix(val.features), val.labels, u)
        out["val_mv_loss"] = val_loss
        out["sh"] = sh_bound(val_loss, len(val), cfg.delta, cfg.xi_mode)
    return out


def _optimize_run(cfg: ExperimentConfig, data: Dataset, seed: int) -> dict:
    plan, train, val, test, ens = _train(cfg, data, seed)
    m = len(ens)
    u = np.full(m, 1.0 / m)
    P_test = ens.predict_matrix(test.features)
    ev = gather_evidence(ens, train, EvalMode.OOB_ONLY)
    stats = ev.statistics(u)
    losses = [float(x) for x in stats.per_tree_loss]

    uniform = bound_suite(stats, u, 0.0, cfg.delta, cfg.xi_mode)
    uniform["test_mv_loss"] = vote_loss(P_test, test.labels, u)
    uniform["oob_mv_loss"] = stats.oob_mv_loss
    lam_uniform = best_lambda_bound(uniform["gibbs_emp"], stats.n_gibbs, 0.0, cfg.delta)

    rho_lam, lam_report = optimize_lambda(stats, cfg.delta)
    lam_entry = bound_suite(stats, rho_lam.weights, kl_divergence(rho_lam.weights, u), cfg.delta, cfg.xi_mode)
    lam_entry["bounds"]["lambda"] = lam_report
    lam_entry["test_mv_loss"] = vote_loss(P_test, test.labels, rho_lam.weights)
    lam_entry["oob_mv_loss"] = _oob(ev, rho_lam.weights)
    lam_entry["posterior"] = rho_lam.to_dict()

    scs = self_complement(ens)
    cands = sweep_mu(scs, stats, ev.train_predictions, ev.oob_mask, ev.train_labels,
                     delta=cfg.delta, xi_mode=cfg.xi_mode)
    best = best_candidate(cands)
    rho_c = best.posterior.to_posterior()
    ev2 = ev.complemented()
    stats2 = ev2.statistics(rho_c.weights)
    u2 = np.full(2 * m, 1.0 / (2 * m))
    c_entry = bound_suite(stats2, rho_c.weights, kl_divergence(rho_c.weights, u2), cfg.delta, cfg.xi_mode)
    c_entry["bounds"]["c_aligned"] = best.report
    c_entry["test_mv_loss"] = vote_loss(P_test, test.labels, best.posterior.signed_weights)
    c_entry["oob_mv_loss"] = best.oob_loss
    c_entry["mu"] = best.mu
    c_entry["complement_mass"] = best.posterior.complement_mass
    c_entry["posterior"] = rho_c.to_dict()
    c_entry["mu_grid"] = [
        {"mu": c.mu, "oob_mv_loss": c.oob_loss, "c_aligned": c.bound} for c in cands
    ]
    uniform["bounds"]["lambda"] = lam_uniform
    return {
        "seed": seed,
        "n_train": len(train),
        "n_val": 0,
        "n_test": len(test),
        "n_trees": m,
        "per_tree_oob_loss": losses,
        "posteriors": {"uniform": uniform, "lambda_opt": lam_entry, "c_opt": c_entry},
    }


def _oob(ev, weights):
    return oob_vote_loss(ev.train_predictions, ev.oob_mask, ev.train_labels, weights)


# --- report assembly ------------------------------------------------------------


def _clean(obj):
    """JSON-ready copy: reports flattened, numpy scalars unwrapped, NaN -> None."""
    if hasattr(obj, "to_dict"):
        return _clean(obj.to_dict())
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return None if math.isnan(x) else x
    return obj


def bound_rows(report: dict) -> list[dict]:
    """One flat row per computed bound, carrying every ingredient."""
    rows = []
    setting = report["config"]["setting"]
    for run in report["runs"]:
        base = {"setting": setting, "seed": run["seed"], "n_trees": run["n_trees"]}
        if "modes" in run:
            for mode, entry in run["modes"].items():
                for key, b in entry["bounds"].items():
                    rows.append({**base, "eval_mode": mode, "posterior": "uniform", "report_key": key,
                                 "test_mv_loss": run["test_mv_loss"], **b})
            if "sh" in run:
                rows.append({**base, "eval_mode": "val", "posterior": "uniform", "report_key": "sh",
                             "test_mv_loss": run["test_mv_loss"], **run["sh"]})
        else:
            for post, entry in run["posteriors"].items():
                for key, b in entry["bounds"].items():
                    rows.append({**base, "eval_mode": "oob", "posterior": post, "report_key": key,
                                 "test_mv_loss": entry["test_mv_loss"], **b})
    return rows


def _scalar(v):
    return v if not isinstance(v, (list, dict)) else json.dumps(v, sort_keys=True)


def rows_to_csv(rows: list[dict], columns=None) -> str:
    if columns is None:
        columns = sorted({k for r in rows for k in r})
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: _scalar(r.get(k)) for k in columns})
    return buf.getvalue()


def _summary(runs: list[dict]) -> dict:
    """Mean over repeats of every test loss and primary bound value."""
    acc = {}
    for run in runs:
        flat = {}
        if "modes" in run:
            flat["test_mv_loss"] = run["test_mv_loss"]
            for mode, entry in run["modes"].items():
                for key, b in entry["bounds"].items():
                    flat[f"{mode}/{key}"] = b["mv_bound"]
            if "sh" in run:
                flat["sh"] = run["sh"]["mv_bound"]
        else:
            for post, entry in run["posteriors"].items():
                flat[f"{post}/test_mv_loss"] = entry["test_mv_loss"]
                for key, b in entry["bounds"].items():
                    flat[f"{post}/{key}"] = b["mv_bound"]
        for k, v in flat.items():
            acc.setdefault(k, []).append(v)
    return {k: float(np.mean(v)) for k, v in acc.items()}


def run_experiment(cfg: ExperimentConfig, data: Dataset | None = None) -> dict:
    """Run one setting (over ``cfg.repeats`` consecutive seeds) and return the report.

    When ``cfg.output`` is set, writes ``<output>`` (JSON) and
    ``<output stem>.csv`` (one row per bound).
    """
    if data is None:
        from .data import load_dataset

        data = load_dataset(cfg.dataset_path, cfg.label_column, cfg.positive_label, cfg.classes)
    runner = _optimize_run if cfg.setting is Setting.OPTIMIZE else _standard_run
    runs = []
    for k in range(cfg.repeats):
        seed = cfg.seed + k
        log.info("%s run on %s, seed %d", cfg.setting.value, cfg.dataset_path, seed)
        try:
            runs.append(_clean(runner(cfg, data, seed)))
        except ConfigurationError as exc:
            raise ConfigurationError(f"{cfg.dataset_path} (seed {seed}): {exc}") from exc
    report = {
        "config": cfg.to_dict(),
        "dataset": {"n": len(data), "d": data.n_features, "n_positive": int(np.sum(data.labels == 1))},
        "runs": runs,
        "mean": _summary(runs),
    }
    if cfg.output:
        write_report(report, cfg.output)
    return report


def write_report(report: dict, out) -> tuple[Path, Path]:
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    csv_path = out.with_suffix(".csv")
    csv_path.write_text(rows_to_csv(bound_rows(report)))
    return out, csv_path


# --- sweeps ---------------------------------------------------------------------

SWEEP_COLUMNS = ["features", "max_depth", "seed", "eval_mode", "gibbs", "disagree", "test",
                 "p0", "p1", "p2", "psing"]


def run_sweep(cfg: ExperimentConfig, depths, feature_modes, data: Dataset | None = None) -> list[dict]:
    """One run per (feature mode, depth), recorded as plot-ready rows.

    ``None`` in ``depths`` means unlimited depth. Columns: gibbs (empirical
    Gibbs loss), disagree (empirical disagreement), test (test MV loss),
    p0 / p1 / p2 (PBkl / C1 / C2) and psing (single-hypothesis bound, only in
    the validation setting). Validation runs use OOB+validation statistics
    unless ``cfg.eval_mode`` says otherwise.
    """
    if cfg.setting is Setting.OPTIMIZE:
        raise ConfigurationError("sweeps run the bagging or validation setting")
    finite = [d for d in depths if d is not None]
    if finite != sorted(finite) or (None in depths and depths[-1] is not None):
        raise ConfigurationError("sweep depths must be ascending with unlimited last")
    if data is None:
        from .data import load_dataset

        data = load_dataset(cfg.dataset_path, cfg.label_column, cfg.positive_label, cfg.classes)
    mode = cfg.eval_mode or (EvalMode.OOB_PLUS_VAL if cfg.setting is Setting.VALIDATION else EvalMode.OOB_ONLY)
    rows = []
    for fm in feature_modes:
        for depth in depths:
            sub = replace(cfg, tree_config=TreeConfig(depth, SplitFeatureMode(fm)), eval_mode=mode, output=None)
            for k in range(cfg.repeats):
                run = _clean(_standard_run(sub, data, cfg.seed + k))
                entry = run["modes"][mode.value]
                rows.append({
                    "features": SplitFeatureMode(fm).value,
                    "max_depth": "none" if depth is None else depth,
                    "seed": cfg.seed + k,
                    "eval_mode": mode.value,
                    "gibbs": entry["gibbs_emp"],
                    "disagree": entry["d_emp"],
                    "test": run["test_mv_loss"],
                    "p0": entry["bounds"]["pbkl"]["mv_bound"],
                    "p1": entry["bounds"]["c1"]["mv_bound"],
                    "p2": entry["bounds"]["c2"]["mv_bound"],
                    "psing": run["sh"]["mv_bound"] if "sh" in run else None,
                })
    if cfg.output:
        out = Path(cfg.output)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.with_suffix(".csv").write_text(rows_to_csv(rows, SWEEP_COLUMNS))
        out.with_suffix(".json").write_text(
            json.dumps({"config": cfg.to_dict(), "rows": rows}, sort_keys=True, indent=2) + "\n")
    return rows

