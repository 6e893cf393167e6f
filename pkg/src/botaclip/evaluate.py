"""Downstream task runners: fixed random-forest predictors over embeddings,
evaluated per species (presence tasks) or per trophic group (abundance).

Per-species work is independent and runs on a thread pool sized by the
RA_THREADS environment variable (default: all cores); results are keyed, so
scheduling order never changes the output.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dataprep import (
    CoverMatrix,
    TrophicTable,
    balance_downsample,
    binarize_presence,
    filter_by_support,
    make_pseudo_absences,
    normalize_soil,
    stratify_by_elevation,
)
from .errors import DataError, Degenerate, UndefinedMetric, ZeroVariance
from .fileio import read_csv, write_csv
from .forest import ForestConfig, fit_classifier, fit_regressor, predict, predict_proba
from .metrics import boyce_index, classification_metrics, confusion_counts, mae, spearman_rho
from .numerics import Rng
from .spatial import FoldAssignment, buffered_split, stratified_kfold

REPORT_HEADER = ["task", "unit", "fold", "seed", "metric", "value"]


@dataclass
class MetricReport:
    """Long-format per-unit scores: one row per (unit, fold, seed, metric)."""
    task: str
    rows: list = field(default_factory=list)  # (unit, fold, seed, metric, value)

    def add(self, unit, fold, seed, metric, value):
        self.rows.append((unit, int(fold), int(seed), metric, float(value)))

    def to_csv(self, path):
        write_csv(path, REPORT_HEADER,
                  ([self.task, *row] for row in self.rows))

    @classmethod
    def from_csv(cls, path):
        header, rows = read_csv(path)
        if header != REPORT_HEADER:
            raise DataError(f"{path}: bad report header")
        report = cls(task=rows[0][0] if rows else "")
        for task, unit, fold, seed, metric, value in rows:
            report.add(unit, int(fold), int(seed), metric, float(value))
        return report

    def scores_for(self, metric: str) -> dict[str, float]:
        """Mean value per unit over folds and seeds."""
        acc: dict[str, list] = {}
        for unit, _, _, m, value in self.rows:
            if m == metric:
                acc.setdefault(unit, []).append(value)
        return {u: float(np.mean(v)) for u, v in acc.items()}

    def metrics_present(self) -> list[str]:
        return sorted({m for *_, m, _ in [(r[0], r[1], r[2], r[3], r[4])
                                          for r in self.rows]})

    def pretty(self) -> str:
        by_metric: dict[str, list] = {}
        for _, _, _, metric, value in self.rows:
            by_metric.setdefault(metric, []).append(value)
        lines = [f"task: {self.task} ({len(self.rows)} rows)"]
        for metric in sorted(by_metric):
            vals = np.array(by_metric[metric])
            lines.append(f"  {metric:<12} mean={vals.mean():+.4f} "
                         f"std={vals.std():.4f} n={vals.size}")
        return "\n".join(lines)


def _pool_map(fn, items):
    workers = os.cpu_count() or 1
    env = os.environ.get("RA_THREADS")
    if env:
        workers = max(1, int(env))
    if workers == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _balanced(y, idx, gen):
    """Downsample the majority side of idx to balance labels."""
    pres = idx[y[idx] == 1]
    absn = idx[y[idx] == 0]
    if pres.size == 0 or absn.size == 0:
        return None
    if absn.size >= pres.size:
        _, absn = balance_downsample(pres, absn, gen)
    else:
        _, pres = balance_downsample(absn, pres, gen)
    return np.concatenate([pres, absn])


def _classify_fold(X, y, train_idx, val_idx, n_trees, threshold, tree_seed,
                   gen):
    train = _balanced(y, train_idx, gen)
    val = _balanced(y, val_idx, gen)
    if train is None or val is None or train.size < 4 or val.size < 4:
        return None
    forest = fit_classifier(X[train], y[train],
                            ForestConfig(n_trees=n_trees, seed=tree_seed))
    proba = predict_proba(forest, X[val])
    pred = (proba >= threshold).astype(np.int64)
    out = classification_metrics(confusion_counts(y[val], pred))
    out["_proba"] = proba
    out["_val_labels"] = y[val]
    return out


def eval_plant(embeddings: np.ndarray, covers: CoverMatrix,
               assignment: FoldAssignment, fold: int, *,
               n_trees: int = 100, threshold: float = 0.5,
               min_presences: int = 1, max_presences: int | None = None,
               seeds=(0,)) -> MetricReport:
    """Presence prediction per plant species on the buffered spatial fold.

    Embedding rows must align with the cover-matrix plots. Covers are
    binarized, species outside the support range dropped, classes balanced
    by downsampling on both sides of the split.
    """
    if embeddings.shape[0] != covers.values.shape[0]:
        raise DataError("embedding rows must match cover-matrix plots")
    binary = binarize_presence(covers.values)
    kept = filter_by_support(binary, min_presences, max_presences)
    train_idx, val_idx, _ = buffered_split(assignment, fold)
    report = MetricReport("plant")

    def run(args):
        j, seed = args
        y = binary[:, j]
        gen = Rng(seed).substream("plant", j)
        res = _classify_fold(embeddings, y, train_idx, val_idx, n_trees,
                             threshold, seed * 100003 + j, gen)
        return j, seed, res

    tasks = [(int(j), int(s)) for s in seeds for j in kept]
    for j, seed, res in _pool_map(run, tasks):
        if res is None:
            continue
        for metric in ("tss", "f1", "sensitivity", "specificity"):
            report.add(covers.species_ids[j], fold, seed, metric, res[metric])
    return report


def eval_butterfly(embeddings: np.ndarray, occurrences: dict,
                   row_index: dict, *, n_folds: int = 5,
                   cell_size: float = 5000.0, n_trees: int = 100,
                   threshold: float = 0.5, seeds=(0,)) -> MetricReport:
    """Presence-only evaluation with pseudo-absences and a buffered spatial
    k-fold per species; suitability ranking scored against the validation
    background.

    row_index maps each species to (presence_rows, candidate_rows) in the
    embedding matrix, aligned with its OccurrenceSet arrays.
    """
    report = MetricReport("butterfly")
    species_order = {sp: i for i, sp in enumerate(occurrences)}

    def run(args):
        species, seed = args
        occ = occurrences[species]
        pres_rows, cand_rows = (np.asarray(r) for r in row_index[species])
        gen = Rng(seed).substream("butterfly-abs", species_order[species])
        coords, labels, picked = make_pseudo_absences(occ, gen)
        emb_rows = np.concatenate([pres_rows, cand_rows[picked]])
        X = embeddings[emb_rows]
        out = []
        try:
            fa = FoldAssignment.build(
                coords, n_folds, Rng(seed).substream("butterfly-folds"),
                cell_size)
        except DataError:
            return species, seed, out
        for fold in range(n_folds):
            try:
                train_idx, val_idx, _ = buffered_split(fa, fold)
                res = _classify_fold(
                    X, labels, train_idx, val_idx, n_trees, threshold,
                    seed * 100003 + fold, Rng(seed).substream("butterfly", fold))
            except DataError:
                continue
            if res is None:
                continue
            row = {m: res[m] for m in ("tss", "f1", "sensitivity",
                                       "specificity")}
            try:
                pres_scores = res["_proba"][res["_val_labels"] == 1]
                bg_scores = res["_proba"][res["_val_labels"] == 0]
                row["boyce"] = boyce_index(pres_scores, bg_scores)
            except (Degenerate, ZeroVariance):
                pass
            out.append((fold, row))
        return species, seed, out

    tasks = [(sp, int(s)) for s in seeds for sp in occurrences]
    for species, seed, results in _pool_map(run, tasks):
        for fold, row in results:
            for metric, value in row.items():
                report.add(species, fold, seed, metric, value)
    return report


def eval_soil(embeddings: np.ndarray, soil: TrophicTable, *,
              n_folds: int = 5, n_strata: int = 5, n_trees: int = 100,
              seeds=(0,)) -> MetricReport:
    """Per-group abundance regression under elevation-stratified k-fold CV."""
    if embeddings.shape[0] != soil.values.shape[0]:
        raise DataError("embedding rows must match soil samples")
    table = normalize_soil(soil)
    strata, _ = stratify_by_elevation(table.elevations, n_strata)
    report = MetricReport("soil")
    groups = table.group_ids or [f"g{j + 1}" for j in range(table.values.shape[1])]

    def run(args):
        j, seed = args
        y = table.values[:, j]
        folds = stratified_kfold(strata, n_folds,
                                 Rng(seed).substream("soil-folds"))
        out = []
        for fold in range(n_folds):
            val = np.flatnonzero(folds == fold)
            train = np.flatnonzero(folds != fold)
            if train.size < 2 or val.size < 2:
                continue
            forest = fit_regressor(
                embeddings[train], y[train],
                ForestConfig(n_trees=n_trees, criterion="mse",
                             seed=seed * 100003 + fold * 1009 + j))
            pred = predict(forest, embeddings[val])
            row = {"mae": mae(y[val], pred)}
            try:
                row["spearman"] = spearman_rho(y[val], pred)
            except ZeroVariance:
                pass
            out.append((fold, row))
        return j, seed, out

    tasks = [(int(j), int(s)) for s in seeds for j in range(table.values.shape[1])]
    for j, seed, results in _pool_map(run, tasks):
        for fold, row in results:
            for metric, value in row.items():
                report.add(groups[j], fold, seed, metric, value)
    return report
