"""Binary embedding/checkpoint containers, CSV schemas, configs, manifests.

Embeddings are stored as 32-bit floats and widened to 64-bit on load (with
optional unit-normalization of rows, the default for ingestion). All CSV
floats are written with repr() so values survive a round trip exactly.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import BadMagic, DataError, TruncatedFile, UsageError
from .numerics import l2_normalize_rows

EMB_MAGIC = b"EMB1"
CKPT_MAGIC = b"CKPT"
FORMAT_VERSION = 1


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise TruncatedFile(f"{what}: wanted {n} bytes, got {len(data)}")
    return data


def save_embeddings(path, values: np.ndarray, ids: list[str] | None = None) -> None:
    values = np.asarray(values)
    if values.ndim != 2:
        raise DataError("embeddings must be a 2-D matrix")
    if ids is not None:
        if len(ids) != values.shape[0]:
            raise DataError("one id per row required")
        if len(set(ids)) != len(ids):
            raise DataError("row ids must be unique")
    payload = np.ascontiguousarray(values, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(EMB_MAGIC)
        fh.write(struct.pack("<III", FORMAT_VERSION, values.shape[0],
                             values.shape[1]))
        fh.write(payload.tobytes())
        if ids is None:
            fh.write(struct.pack("<I", 0))
        else:
            fh.write(struct.pack("<I", len(ids)))
            for rid in ids:
                raw = rid.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)


def load_embeddings(path, normalize: bool = True):
    """Returns (float64 matrix, ids or None). normalize projects rows onto
    the unit sphere, the ingestion default for embedding files."""
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != EMB_MAGIC:
            raise BadMagic(f"{path} is not an embedding file")
        version, rows, cols = struct.unpack("<III",
                                            _read_exact(fh, 12, "header"))
        if version != FORMAT_VERSION:
            raise DataError(f"unsupported embedding version {version}")
        raw = _read_exact(fh, rows * cols * 4, "payload")
        values = np.frombuffer(raw, dtype="<f4").reshape(rows, cols)
        (n_ids,) = struct.unpack("<I", _read_exact(fh, 4, "id count"))
        ids = None
        if n_ids:
            if n_ids != rows:
                raise DataError("id count does not match row count")
            ids = []
            for _ in range(n_ids):
                (ln,) = struct.unpack("<I", _read_exact(fh, 4, "id length"))
                ids.append(_read_exact(fh, ln, "id").decode("utf-8"))
            if len(set(ids)) != len(ids):
                raise DataError("row ids must be unique")
    wide = values.astype(np.float64)
    if normalize:
        wide = l2_normalize_rows(wide)
    wide.flags.writeable = False
    return wide, ids


def save_checkpoint(path, params: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(params)))
        for name, value in params.items():
            raw = name.encode("utf-8")
            value = np.asarray(value, dtype=np.float64)
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", value.ndim))
            for dim in value.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(np.ascontiguousarray(value, dtype="<f8").tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != CKPT_MAGIC:
            raise BadMagic(f"{path} is not a checkpoint file")
        version, count = struct.unpack("<II", _read_exact(fh, 8, "header"))
        if version != FORMAT_VERSION:
            raise DataError(f"unsupported checkpoint version {version}")
        for _ in range(count):
            (name_len,) = struct.unpack("<I", _read_exact(fh, 4, "name length"))
            name = _read_exact(fh, name_len, "name").decode("utf-8")
            (ndim,) = struct.unpack("<I", _read_exact(fh, 4, "ndim"))
            shape = tuple(struct.unpack("<I", _read_exact(fh, 4, "dim"))[0]
                          for _ in range(ndim))
            n = int(np.prod(shape)) if shape else 1
            raw = _read_exact(fh, n * 8, f"payload of {name}")
            out[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    return out


# --- CSV ---------------------------------------------------------------------

def fmt_cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt_cell(v) for v in row) + "\n")


def read_csv(path):
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines:
        raise DataError(f"{path} is empty")
    header = lines[0].split(",")
    return header, [ln.split(",") for ln in lines[1:]]


def write_matrix_csv(path, values: np.ndarray, row_ids: list[str],
                     col_ids: list[str], id_column: str = "plot_id") -> None:
    header = [id_column] + list(col_ids)
    rows = ([rid] + [v for v in row] for rid, row in zip(row_ids, values))
    write_csv(path, header, rows)


def read_matrix_csv(path, id_column: str | None = None):
    """Returns (values, row_ids, col_ids) for a wide id+numeric-columns CSV."""
    header, rows = read_csv(path)
    col_ids = header[1:]
    row_ids = [r[0] for r in rows]
    values = np.array([[float(v) for v in r[1:]] for r in rows],
                      dtype=np.float64)
    if values.size and values.shape[1] != len(col_ids):
        raise DataError(f"{path}: ragged rows")
    return values, row_ids, col_ids


def write_table_csv(path, header, columns) -> None:
    write_csv(path, header, zip(*columns))


# --- domain schemas -----------------------------------------------------------

def read_releves(path):
    """Long-format survey file: plot_id, x_m, y_m, prodrome_class,
    species_id, bb_class. Returns a list of Releve in first-seen order."""
    from .dataprep import Releve
    header, rows = read_csv(path)
    expected = ["plot_id", "x_m", "y_m", "prodrome_class", "species_id",
                "bb_class"]
    if header != expected:
        raise DataError(f"{path}: header must be {','.join(expected)}")
    releves: dict[str, Releve] = {}
    for plot_id, x, y, cls, species, bb in rows:
        rel = releves.get(plot_id)
        if rel is None:
            rel = Releve(plot_id, float(x), float(y), [], int(cls))
            releves[plot_id] = rel
        rel.species_covers.append((species, bb))
    return list(releves.values())


def read_locations(path):
    header, rows = read_csv(path)
    if header[:3] != ["plot_id", "x_m", "y_m"] and \
            header[:3] != ["sample_id", "x_m", "y_m"]:
        raise DataError(f"{path}: expected id, x_m, y_m columns")
    ids = [r[0] for r in rows]
    pts = np.array([[float(r[1]), float(r[2])] for r in rows])
    return ids, pts


def write_locations(path, ids, points, id_column="plot_id"):
    write_csv(path, [id_column, "x_m", "y_m"],
              ([i, p[0], p[1]] for i, p in zip(ids, points)))


def read_labels(path):
    header, rows = read_csv(path)
    if header != ["plot_id", "class_id"]:
        raise DataError(f"{path}: expected plot_id, class_id")
    return [r[0] for r in rows], np.array([int(r[1]) for r in rows])


def write_labels(path, ids, labels):
    write_csv(path, ["plot_id", "class_id"], zip(ids, labels))


def read_occurrences(path):
    """occurrences.csv: species_id, x_m, y_m, label (1 presence,
    0 candidate absence). Returns ({species: OccurrenceSet},
    {species: (presence_rows, candidate_rows)}) where rows index the file
    order, which is also the order of the matching embedding matrix."""
    from .dataprep import OccurrenceSet
    header, rows = read_csv(path)
    if header != ["species_id", "x_m", "y_m", "label"]:
        raise DataError(f"{path}: expected species_id, x_m, y_m, label")
    pres: dict[str, list] = {}
    cand: dict[str, list] = {}
    pres_rows: dict[str, list] = {}
    cand_rows: dict[str, list] = {}
    order: list[str] = []
    for i, (sp, x, y, lab) in enumerate(rows):
        if sp not in pres:
            order.append(sp)
            pres[sp], cand[sp] = [], []
            pres_rows[sp], cand_rows[sp] = [], []
        if int(lab) == 1:
            pres[sp].append((float(x), float(y)))
            pres_rows[sp].append(i)
        else:
            cand[sp].append((float(x), float(y)))
            cand_rows[sp].append(i)
    occ = {}
    row_index = {}
    for sp in order:
        occ[sp] = OccurrenceSet(sp, np.array(pres[sp]).reshape(-1, 2),
                                np.array(cand[sp]).reshape(-1, 2))
        row_index[sp] = (np.array(pres_rows[sp], dtype=np.int64),
                         np.array(cand_rows[sp], dtype=np.int64))
    return occ, row_index


def read_soil(path):
    """soil.csv: sample_id, x_m, y_m, elevation_m, then one column per
    trophic group."""
    from .dataprep import TrophicTable
    header, rows = read_csv(path)
    if header[:4] != ["sample_id", "x_m", "y_m", "elevation_m"]:
        raise DataError(f"{path}: expected sample_id, x_m, y_m, elevation_m, ...")
    groups = header[4:]
    ids = [r[0] for r in rows]
    locs = np.array([[float(r[1]), float(r[2])] for r in rows])
    elev = np.array([float(r[3]) for r in rows])
    vals = np.array([[float(v) for v in r[4:]] for r in rows])
    return TrophicTable(vals, elev, ids, groups, locs)


def write_split_manifest(path, ids, cells, folds, roles):
    write_csv(path, ["sample_id", "cell_ix", "cell_iy", "fold", "role"],
              ([i, c[0], c[1], f, r]
               for i, c, f, r in zip(ids, cells, folds, roles)))


def read_split_manifest(path):
    header, rows = read_csv(path)
    if header != ["sample_id", "cell_ix", "cell_iy", "fold", "role"]:
        raise DataError(f"{path}: bad split manifest header")
    ids = [r[0] for r in rows]
    cells = np.array([[int(r[1]), int(r[2])] for r in rows])
    folds = np.array([int(r[3]) for r in rows])
    roles = np.array([r[4] for r in rows], dtype=object)
    return ids, cells, folds, roles


# --- run configuration ---------------------------------------------------------

DEFAULT_CONFIG = {
    "seed": 0,
    "variant": "botania-linear",
    "regularized": True,
    "lambda": 1.0,
    "fold": 1,
    "n_folds": 5,
    "cell_size_m": 5000.0,
    "normalize_on_load": True,
    "data": {
        "embeddings": "",
        "covers": "",
        "locations": "",
        "labels": "",
        "botania_checkpoint": "",
        "split": "",
    },
    "model": {
        "projection_dim": 768,
        "botania_hidden": 1536,
        "botania_embed": 768,
        "botania_classes": 232,
        "botania_dropout": 0.4,
        "mlp_tab_hidden": 1024,
        "mlp_img_hidden": 2600,
        "attention_model_dim": 1024,
        "attention_heads": 4,
        "adapter_noise_variance": 1e-4,
        "botasp_hidden": 1536,
        "botasp_dropout": 0.4,
    },
    "optimizer": {
        "lr": 1e-3,
        "weight_decay": 1e-3,
        "beta1": 0.9,
        "beta2": 0.999,
        "eps": 1e-8,
        "decoupled": True,
    },
    "train": {
        "batch_size": 256,
        "max_epochs": 1000,
        "patience": 10,
        "shuffle": True,
    },
    "botania_train": {
        "lr": 0.3,
        "max_epochs": 300,
        "patience": 20,
    },
    "botasp_train": {
        "lr": 1e-3,
        "weight_decay": 1e-3,
        "max_epochs": 200,
        "patience": 10,
    },
    "metrics": {
        "threshold": 0.5,
        "n_trees": 100,
        "min_presences": 1,
        "max_presences": 0,
        "n_strata": 5,
        "seeds": 1,
    },
}


def _merge_strict(base: dict, override: dict, prefix: str = "") -> dict:
    out = dict(base)
    for key, value in override.items():
        if key not in base:
            raise UsageError(f"unknown config key: {prefix}{key}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise UsageError(f"config key {prefix}{key} must be a table")
            out[key] = _merge_strict(base[key], value, f"{prefix}{key}.")
        else:
            out[key] = value
    return out


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Defaults, overlaid by the JSON file, overlaid by explicit overrides.
    Unknown keys are rejected at every level."""
    cfg = DEFAULT_CONFIG
    if path:
        with open(path, encoding="utf-8") as fh:
            cfg = _merge_strict(cfg, json.load(fh))
    if overrides:
        cfg = _merge_strict(cfg, overrides)
    return cfg


def set_config_key(overrides: dict, dotted: str, value) -> None:
    """Place `value` at a dotted path such as optimizer.lr."""
    parts = dotted.split(".")
    node = overrides
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value


# --- manifests ------------------------------------------------------------------

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def write_manifest(path, command: str, config: dict, inputs, outputs) -> None:
    """Reproducibility record: resolved config plus content hashes of every
    input and output. Deliberately free of timestamps so reruns are
    bit-identical."""
    doc = {
        "command": command,
        "config": config,
        "config_sha256": config_hash(config),
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": {str(p): sha256_file(p) for p in outputs},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
