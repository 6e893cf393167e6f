"""Grid-cell fold construction with a one-cell buffer between train and
validation.

Buffering uses 8-neighbor (Chebyshev) adjacency: any sample in a cell
touching a validation cell, even diagonally, is excluded from both sides,
which guarantees a worst-case planar separation of one full cell size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptySplit, LeakageDetected, TooFewCells

DEFAULT_CELL_SIZE = 5000.0

ROLE_TRAIN = "train"
ROLE_VALIDATION = "validation"
ROLE_BUFFER = "buffer-excluded"


def assign_cells(points: np.ndarray, cell_size: float = DEFAULT_CELL_SIZE) -> np.ndarray:
    """Integer cell indices (ix, iy) = floor(coordinate / cell_size)."""
    if cell_size <= 0:
        raise ValueError("cell_size must be positive")
    points = np.asarray(points, dtype=np.float64)
    if not np.all(np.isfinite(points)):
        raise ValueError("coordinates must be finite")
    return np.floor(points / cell_size).astype(np.int64)


def make_folds(cells, k: int, gen: np.random.Generator) -> dict:
    """Deal distinct cells round-robin into k folds after a seeded shuffle."""
    if k < 2:
        raise ValueError("k must be >= 2")
    distinct = sorted({(int(ix), int(iy)) for ix, iy in cells})
    if len(distinct) < k:
        raise TooFewCells(f"{len(distinct)} cells for k={k}")
    order = gen.permutation(len(distinct))
    return {distinct[j]: int(i % k) for i, j in enumerate(order)}


@dataclass
class FoldAssignment:
    cell_size: float
    n_folds: int
    cells: np.ndarray       # (n, 2) per-sample cell indices
    fold_of_cell: dict      # (ix, iy) -> fold id
    fold_ids: np.ndarray    # (n,) per-sample fold id

    @classmethod
    def build(cls, points: np.ndarray, k: int, gen: np.random.Generator,
              cell_size: float = DEFAULT_CELL_SIZE) -> "FoldAssignment":
        cells = assign_cells(points, cell_size)
        fold_of_cell = make_folds(cells, k, gen)
        fold_ids = np.array([fold_of_cell[(int(ix), int(iy))]
                             for ix, iy in cells], dtype=np.int64)
        return cls(cell_size, k, cells, fold_of_cell, fold_ids)


def buffered_split(assignment: FoldAssignment, fold_id: int):
    """Partition samples into (train, validation, excluded) index arrays.

    Validation samples sit in cells of the requested fold; samples in any of
    the 8 cells adjacent to a validation cell are excluded; everything else
    trains. Membership in a validation cell wins over adjacency.
    """
    if not 0 <= fold_id < assignment.n_folds:
        raise ValueError(f"fold_id {fold_id} outside [0, {assignment.n_folds})")
    val_cells = {cell for cell, f in assignment.fold_of_cell.items()
                 if f == fold_id}
    buffer_cells = set()
    for ix, iy in val_cells:
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                if dx or dy:
                    buffer_cells.add((ix + dx, iy + dy))
    buffer_cells -= val_cells

    roles = np.empty(len(assignment.cells), dtype=object)
    for i, (ix, iy) in enumerate(assignment.cells):
        cell = (int(ix), int(iy))
        if cell in val_cells:
            roles[i] = ROLE_VALIDATION
        elif cell in buffer_cells:
            roles[i] = ROLE_BUFFER
        else:
            roles[i] = ROLE_TRAIN
    train = np.flatnonzero(roles == ROLE_TRAIN)
    val = np.flatnonzero(roles == ROLE_VALIDATION)
    excluded = np.flatnonzero(roles == ROLE_BUFFER)
    if train.size == 0 or val.size == 0:
        raise EmptySplit(
            f"fold {fold_id}: {train.size} train / {val.size} validation samples")
    return train, val, excluded


def roles_for_fold(assignment: FoldAssignment, fold_id: int) -> np.ndarray:
    """Per-sample role strings for the chosen validation fold."""
    train, val, excluded = buffered_split(assignment, fold_id)
    roles = np.empty(len(assignment.cells), dtype=object)
    roles[train] = ROLE_TRAIN
    roles[val] = ROLE_VALIDATION
    roles[excluded] = ROLE_BUFFER
    return roles


def check_no_leakage(assignment: FoldAssignment, train_idx, val_idx) -> None:
    """Exhaustive cell-level audit: every train/validation pair must be at
    Chebyshev cell distance >= 2. Raises LeakageDetected on violation."""
    train_cells = {(int(ix), int(iy)) for ix, iy in assignment.cells[train_idx]}
    val_cells = {(int(ix), int(iy)) for ix, iy in assignment.cells[val_idx]}
    for vx, vy in val_cells:
        for tx, ty in train_cells:
            if max(abs(vx - tx), abs(vy - ty)) < 2:
                raise LeakageDetected(
                    f"train cell {(tx, ty)} touches validation cell "
                    f"{(vx, vy)}")


def stratified_kfold(strata: np.ndarray, k: int,
                     gen: np.random.Generator) -> np.ndarray:
    """Per-sample fold ids, dealt round-robin within each stratum."""
    if k < 2:
        raise ValueError("k must be >= 2")
    strata = np.asarray(strata)
    folds = np.empty(strata.size, dtype=np.int64)
    for s in np.unique(strata):
        idx = np.flatnonzero(strata == s)
        idx = idx[gen.permutation(idx.size)]
        folds[idx] = np.arange(idx.size) % k
    return folds
