"""Command-line surface chaining ingestion, training, embedding export,
downstream evaluation and statistics.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Failures emit one JSON line on stderr. Every command writes a manifest with
the resolved config and content hashes of its inputs and outputs, so a rerun
with the same config and seed reproduces every file bit for bit.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, evaluate, fileio, synth, training
from .dataprep import CoverMatrix, PairedDataset, binarize_presence, filter_by_support
from .errors import DataError, NumericError, UsageError
from .metrics import cluster_indices
from .numerics import Rng
from .spatial import FoldAssignment, buffered_split, roles_for_fold
from .stats import ablation_report
from .training import TrainConfig


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _emit_error(exc: Exception, code: int) -> int:
    line = json.dumps({"error": type(exc).__name__, "exit": code,
                       "message": str(exc)})
    print(line, file=sys.stderr)
    return code


def _parse_set(values):
    overrides: dict = {}
    for item in values or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        fileio.set_config_key(overrides, key, value)
    return overrides


def _load_cfg(args) -> dict:
    overrides = _parse_set(getattr(args, "set", None))
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    return fileio.load_config(getattr(args, "config", None), overrides)


def _outdir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- dataset assembly helpers ---------------------------------------------------

def _split_view_id(rid: str):
    if "#" in rid:
        plot, view = rid.rsplit("#", 1)
        return plot, int(view)
    return rid, 0


def _paired_dataset(emb, emb_ids, covers: CoverMatrix, locations):
    loc_ids, loc_pts = locations
    loc_of = {i: p for i, p in zip(loc_ids, loc_pts)}
    missing = [p for p in covers.plot_ids if p not in loc_of]
    if missing:
        raise DataError(f"no location for plot {missing[0]}")
    pts = np.array([loc_of[p] for p in covers.plot_ids])
    pair_of = {p: i for i, p in enumerate(covers.plot_ids)}
    if emb_ids is None:
        if emb.shape[0] != len(covers.plot_ids):
            raise DataError("embedding rows must match cover plots when the "
                            "file carries no row ids")
        pair_index = np.arange(emb.shape[0])
        view_index = np.zeros(emb.shape[0], dtype=np.int64)
    else:
        pair_index = np.empty(emb.shape[0], dtype=np.int64)
        view_index = np.empty(emb.shape[0], dtype=np.int64)
        for r, rid in enumerate(emb_ids):
            plot, view = _split_view_id(rid)
            if plot not in pair_of:
                raise DataError(f"embedding row {rid!r} has no cover plot")
            pair_index[r] = pair_of[plot]
            view_index[r] = view
    return PairedDataset(emb, pair_index, view_index, covers.values, pts,
                         list(covers.plot_ids))


def _view0_matrix(emb, emb_ids, plot_ids):
    """One embedding row per plot, the first view, ordered like plot_ids."""
    if emb_ids is None:
        if emb.shape[0] != len(plot_ids):
            raise DataError("embedding rows must match plots 1:1")
        return emb
    row_of = {}
    for r, rid in enumerate(emb_ids):
        plot, view = _split_view_id(rid)
        if view == 0:
            row_of[plot] = r
    missing = [p for p in plot_ids if p not in row_of]
    if missing:
        raise DataError(f"no view-0 embedding for plot {missing[0]}")
    return emb[[row_of[p] for p in plot_ids]]


def _assignment_from_cfg(points, cfg) -> FoldAssignment:
    return FoldAssignment.build(points, cfg["n_folds"],
                                Rng(cfg["seed"]).substream("folds"),
                                cfg["cell_size_m"])


def _assignment_from_split_file(path) -> tuple[FoldAssignment, list[str]]:
    ids, cells, folds, _ = fileio.read_split_manifest(path)
    fold_of_cell = {}
    for cell, fold in zip(map(tuple, cells), folds):
        prev = fold_of_cell.setdefault((int(cell[0]), int(cell[1])), int(fold))
        if prev != fold:
            raise DataError(f"{path}: cell {cell} maps to two folds")
    return FoldAssignment(float("nan"), int(folds.max()) + 1, cells,
                          fold_of_cell, folds), ids


def _train_cfg(cfg, section) -> TrainConfig:
    block = cfg[section]
    return TrainConfig(batch_size=cfg["train"]["batch_size"],
                       max_epochs=block["max_epochs"],
                       patience=block["patience"],
                       lam=cfg["lambda"], seed=cfg["seed"],
                       shuffle=cfg["train"]["shuffle"])


# --- subcommands -----------------------------------------------------------------

def cmd_synth(args) -> int:
    out = _outdir(args)
    data = synth.generate_synthetic(
        pairs=args.pairs, latent_dim=args.latent_dim, img_dim=args.img_dim,
        n_species=args.n_species, views_per_pair=args.views,
        noise=args.noise, seed=args.seed, cell_size=args.cell_size,
        n_classes=args.n_classes, n_eval_species=args.n_eval_species)
    ds = data.dataset
    fileio.save_embeddings(out / "images.emb", ds.images,
                           ids=synth.view_ids(data))
    fileio.write_matrix_csv(out / "covers.csv", ds.covers, ds.plot_ids,
                            data.species_ids)
    fileio.write_locations(out / "locations.csv", ds.plot_ids, ds.locations)
    fileio.write_labels(out / "classes.csv", ds.plot_ids, data.class_labels)
    fileio.write_matrix_csv(out / "latents.csv", data.latents, ds.plot_ids,
                            [f"t{k}" for k in range(data.latents.shape[1])])
    fileio.write_matrix_csv(out / "eval_species.csv", data.eval_presence,
                            ds.plot_ids, data.eval_species_ids)
    cfg = {k: getattr(args, k) for k in
           ("pairs", "latent_dim", "img_dim", "n_species", "views", "noise",
            "seed", "cell_size", "n_classes", "n_eval_species")}
    outputs = [out / n for n in ("images.emb", "covers.csv", "locations.csv",
                                 "classes.csv", "latents.csv",
                                 "eval_species.csv")]
    fileio.write_manifest(out / "manifest_synth.json", "synth", cfg, [],
                          outputs)
    print(f"wrote {len(outputs)} files to {out}")
    return 0


def cmd_prep(args) -> int:
    out = _outdir(args)
    releves = fileio.read_releves(args.releves)
    if args.species_index:
        species = [ln.strip() for ln in
                   Path(args.species_index).read_text().splitlines()
                   if ln.strip()]
    else:
        species = sorted({sp for rel in releves
                          for sp, _ in rel.species_covers})
    from .dataprep import build_cover_matrix
    matrix, labels = build_cover_matrix(releves, species)
    fileio.write_matrix_csv(out / "cover_matrix.csv", matrix.values,
                            matrix.plot_ids, matrix.species_ids)
    fileio.write_labels(out / "labels.csv", matrix.plot_ids, labels)
    fileio.write_locations(out / "locations.csv", matrix.plot_ids,
                           [(r.x, r.y) for r in releves])
    outputs = [out / n for n in ("cover_matrix.csv", "labels.csv",
                                 "locations.csv")]
    fileio.write_manifest(out / "manifest_prep.json", "prep",
                          {"species_index": args.species_index or "derived"},
                          [args.releves], outputs)
    print(f"{len(releves)} plots x {len(species)} species -> {out}")
    return 0


def cmd_split(args) -> int:
    ids, pts = fileio.read_locations(args.locations)
    fa = FoldAssignment.build(pts, args.folds,
                              Rng(args.seed).substream("folds"),
                              args.cell_size)
    roles = roles_for_fold(fa, args.fold)
    fileio.write_split_manifest(args.out, ids, fa.cells, fa.fold_ids, roles)
    cfg = {"cell_size": args.cell_size, "folds": args.folds,
           "fold": args.fold, "seed": args.seed}
    fileio.write_manifest(str(args.out) + ".manifest.json", "split", cfg,
                          [args.locations], [args.out])
    n_val = int(np.sum(roles == "validation"))
    n_buf = int(np.sum(roles == "buffer-excluded"))
    print(f"{len(ids)} samples: {len(ids) - n_val - n_buf} train, "
          f"{n_val} validation, {n_buf} buffer-excluded")
    return 0


def cmd_train_botania(args) -> int:
    cfg = _load_cfg(args)
    out = _outdir(args)
    covers, plot_ids, _ = fileio.read_matrix_csv(cfg["data"]["covers"])
    label_ids, labels = fileio.read_labels(cfg["data"]["labels"])
    if label_ids != plot_ids:
        raise DataError("labels and covers disagree on plot order")
    _, pts = fileio.read_locations(cfg["data"]["locations"])
    fa = _assignment_from_cfg(pts, cfg)
    train_idx, val_idx, _ = buffered_split(fa, cfg["fold"])
    tcfg = _train_cfg(cfg, "botania_train")
    model, log = training.train_botania(
        covers, labels, train_idx, val_idx, tcfg,
        hidden=cfg["model"]["botania_hidden"],
        embed=cfg["model"]["botania_embed"],
        n_classes=cfg["model"]["botania_classes"],
        dropout_rate=cfg["model"]["botania_dropout"],
        lr=cfg["botania_train"]["lr"])
    fileio.save_checkpoint(out / "botania.ckpt", training.model_state(model))
    log.to_csv(out / "train_log.csv")
    inputs = [cfg["data"]["covers"], cfg["data"]["labels"],
              cfg["data"]["locations"]]
    fileio.write_manifest(out / "manifest_train_botania.json",
                          "train-botania", cfg, inputs,
                          [out / "botania.ckpt", out / "train_log.csv"])
    acc = training.botania_accuracy(model, covers[val_idx], labels[val_idx])
    print(f"best epoch {log.best_epoch}, val top-1 accuracy {acc:.3f}")
    return 0


def cmd_train_botaclip(args) -> int:
    cfg = _load_cfg(args)
    out = _outdir(args)
    emb, emb_ids = fileio.load_embeddings(cfg["data"]["embeddings"],
                                          normalize=cfg["normalize_on_load"])
    covers_vals, plot_ids, species = fileio.read_matrix_csv(
        cfg["data"]["covers"])
    covers = CoverMatrix(covers_vals, plot_ids, species)
    locations = fileio.read_locations(cfg["data"]["locations"])
    pairs = _paired_dataset(emb, emb_ids, covers, locations)
    fa = _assignment_from_cfg(pairs.locations, cfg)

    botania = None
    if cfg["data"]["botania_checkpoint"]:
        botania = training.botania_from_state(
            fileio.load_checkpoint(cfg["data"]["botania_checkpoint"]))
    model_options = {
        "mlp_img_hidden": cfg["model"]["mlp_img_hidden"],
        "mlp_tab_hidden": cfg["model"]["mlp_tab_hidden"],
        "attn_model_dim": cfg["model"]["attention_model_dim"],
        "attn_heads": cfg["model"]["attention_heads"],
        "adapter_noise_variance": cfg["model"]["adapter_noise_variance"],
        "botania_hidden": cfg["model"]["botania_hidden"],
        "botania_classes": cfg["model"]["botania_classes"],
        "botania_dropout": cfg["model"]["botania_dropout"],
    }
    if cfg["variant"] != "botania-linear":
        proj = cfg["model"]["projection_dim"]
    else:
        proj = emb.shape[1]
    tcfg = _train_cfg(cfg, "train")
    model, log = training.train_botaclip(
        pairs, fa, tcfg, variant=cfg["variant"],
        regularized=cfg["regularized"], fold=cfg["fold"], botania=botania,
        proj_dim=proj, model_options=model_options,
        lr=cfg["optimizer"]["lr"],
        weight_decay=cfg["optimizer"]["weight_decay"])
    fileio.save_checkpoint(out / "model.ckpt", training.model_state(model))
    log.to_csv(out / "train_log.csv")
    roles = roles_for_fold(fa, cfg["fold"])
    fileio.write_split_manifest(out / "split.csv", pairs.plot_ids, fa.cells,
                                fa.fold_ids, roles)
    inputs = [cfg["data"]["embeddings"], cfg["data"]["covers"],
              cfg["data"]["locations"]]
    if cfg["data"]["botania_checkpoint"]:
        inputs.append(cfg["data"]["botania_checkpoint"])
    fileio.write_manifest(out / "manifest_train_botaclip.json",
                          "train-botaclip", cfg, inputs,
                          [out / "model.ckpt", out / "train_log.csv",
                           out / "split.csv"])
    print(f"variant {cfg['variant']}, best epoch {log.best_epoch}, "
          f"val loss {min(log.val_loss):.5f}")
    return 0


def cmd_train_botasp(args) -> int:
    cfg = _load_cfg(args)
    out = _outdir(args)
    emb, emb_ids = fileio.load_embeddings(cfg["data"]["embeddings"],
                                          normalize=cfg["normalize_on_load"])
    covers_vals, plot_ids, _ = fileio.read_matrix_csv(cfg["data"]["covers"])
    X = _view0_matrix(emb, emb_ids, plot_ids)
    binary = binarize_presence(covers_vals)
    kept = filter_by_support(binary, cfg["metrics"]["min_presences"],
                             cfg["metrics"]["max_presences"] or None)
    if kept.size == 0:
        raise DataError("no species pass the support filter")
    _, pts = fileio.read_locations(cfg["data"]["locations"])
    fa = _assignment_from_cfg(pts, cfg)
    train_idx, val_idx, _ = buffered_split(fa, cfg["fold"])
    tcfg = _train_cfg(cfg, "botasp_train")
    model, log = training.train_botasp(
        X, binary[:, kept], train_idx, val_idx, tcfg,
        proj_dim=X.shape[1], hidden=cfg["model"]["botasp_hidden"],
        dropout_rate=cfg["model"]["botasp_dropout"],
        lr=cfg["botasp_train"]["lr"],
        weight_decay=cfg["botasp_train"]["weight_decay"])
    fileio.save_checkpoint(out / "botasp.ckpt", training.model_state(model))
    log.to_csv(out / "train_log.csv")
    inputs = [cfg["data"]["embeddings"], cfg["data"]["covers"],
              cfg["data"]["locations"]]
    fileio.write_manifest(out / "manifest_train_botasp.json", "train-botasp",
                          cfg, inputs,
                          [out / "botasp.ckpt", out / "train_log.csv"])
    print(f"{kept.size} species, best epoch {log.best_epoch}")
    return 0


def cmd_embed(args) -> int:
    state = fileio.load_checkpoint(args.checkpoint)
    model = training.alignment_model_from_state(state)
    emb, ids = fileio.load_embeddings(args.embeddings,
                                      normalize=not args.raw_input)
    adapted = training.embed_images(model, emb)
    fileio.save_embeddings(args.out, adapted, ids=ids)
    fileio.write_manifest(str(args.out) + ".manifest.json", "embed",
                          {"raw_input": args.raw_input},
                          [args.checkpoint, args.embeddings], [args.out])
    print(f"adapted {adapted.shape[0]} x {adapted.shape[1]} -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_cfg(args)
    met = cfg["metrics"]
    seeds = tuple(range(met["seeds"]))
    if args.task == "plant" and not (args.covers and args.split):
        raise UsageError("plant task needs --covers and --split")
    if args.task == "butterfly" and not args.occurrences:
        raise UsageError("butterfly task needs --occurrences")
    if args.task == "soil" and not args.soil:
        raise UsageError("soil task needs --soil")
    emb, emb_ids = fileio.load_embeddings(args.embeddings,
                                          normalize=cfg["normalize_on_load"])
    if args.task == "plant":
        covers_vals, plot_ids, species = fileio.read_matrix_csv(args.covers)
        covers = CoverMatrix(covers_vals, plot_ids, species)
        fa, split_ids = _assignment_from_split_file(args.split)
        if split_ids != plot_ids:
            raise DataError("split manifest and covers disagree on plots")
        X = _view0_matrix(emb, emb_ids, plot_ids)
        report = evaluate.eval_plant(
            X, covers, fa, cfg["fold"], n_trees=met["n_trees"],
            threshold=met["threshold"], min_presences=met["min_presences"],
            max_presences=met["max_presences"] or None, seeds=seeds)
        inputs = [args.embeddings, args.covers, args.split]
    elif args.task == "butterfly":
        occ, row_index = fileio.read_occurrences(args.occurrences)
        report = evaluate.eval_butterfly(
            emb, occ, row_index, n_folds=cfg["n_folds"],
            cell_size=cfg["cell_size_m"], n_trees=met["n_trees"],
            threshold=met["threshold"], seeds=seeds)
        inputs = [args.embeddings, args.occurrences]
    elif args.task == "soil":
        table = fileio.read_soil(args.soil)
        report = evaluate.eval_soil(
            emb, table, n_folds=cfg["n_folds"], n_strata=met["n_strata"],
            n_trees=met["n_trees"], seeds=seeds)
        inputs = [args.embeddings, args.soil]
    else:
        raise UsageError(f"unknown task {args.task!r}")
    report.to_csv(args.out)
    fileio.write_manifest(str(args.out) + ".manifest.json",
                          f"eval-{args.task}", cfg, inputs, [args.out])
    print(report.pretty())
    return 0


def cmd_cluster_metrics(args) -> int:
    emb, emb_ids = fileio.load_embeddings(args.embeddings,
                                          normalize=not args.raw_input)
    label_ids, labels = fileio.read_labels(args.labels)
    if emb_ids is not None:
        row_of = {(_split_view_id(rid))[0]: r for r, rid in enumerate(emb_ids)
                  if _split_view_id(rid)[1] == 0}
        emb = emb[[row_of[i] for i in label_ids]]
    elif emb.shape[0] != len(label_ids):
        raise DataError("embedding rows must match labels 1:1")
    out = cluster_indices(emb, labels)
    print(f"davies_bouldin={out['davies_bouldin']!r} "
          f"calinski_harabasz={out['calinski_harabasz']!r}")
    if args.out:
        fileio.write_csv(args.out, ["metric", "value"],
                         [["davies_bouldin", out["davies_bouldin"]],
                          ["calinski_harabasz", out["calinski_harabasz"]]])
        fileio.write_manifest(str(args.out) + ".manifest.json",
                              "cluster-metrics", {},
                              [args.embeddings, args.labels], [args.out])
    return 0


def cmd_stats(args) -> int:
    if len(args.reports) < 2:
        raise UsageError("need at least two reports")
    names = args.names or [Path(p).stem for p in args.reports]
    if len(names) != len(args.reports):
        raise UsageError("--names must match --reports")
    reports = [evaluate.MetricReport.from_csv(p) for p in args.reports]
    score_maps = [r.scores_for(args.metric) for r in reports]
    common = sorted(set.intersection(*(set(m) for m in score_maps)))
    if len(common) < 2:
        raise DataError(f"fewer than two shared units carry {args.metric!r}")
    scores = {name: np.array([m[u] for u in common])
              for name, m in zip(names, score_maps)}
    result = ablation_report(scores, higher_is_better=not args.lower_is_better,
                             alpha=args.alpha)
    rows = [["friedman", result.friedman.statistic, result.friedman.p_value,
             float("nan"), float("nan"), float("nan")]]
    for c in result.comparisons:
        rows.append([c.comparison, c.statistic, c.p_value, c.p_adjusted,
                     c.median_diff, c.pct_change])
    header = ["comparison", "statistic", "p_value", "p_adjusted",
              "median_diff", "pct_change"]
    if args.out:
        fileio.write_csv(args.out, header, rows)
        fileio.write_manifest(str(args.out) + ".manifest.json", "stats",
                              {"metric": args.metric, "alpha": args.alpha},
                              list(args.reports), [args.out])
    print(f"friedman chi2={result.friedman.statistic:.4f} "
          f"p={result.friedman.p_value:.3e} over {len(common)} units")
    if result.best_model is None:
        print("no significant winner")
    else:
        print(f"best model: {result.best_model}")
        for c in result.comparisons:
            print(f"  {c.comparison}: W={c.statistic:g} p={c.p_value:.3e} "
                  f"p_adj={c.p_adjusted:.3e} median_diff={c.median_diff:+.4f} "
                  f"change={c.pct_change:+.1f}%")
    return 0


# --- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="botaclip",
                     description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def training_flags(p):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a (dotted) config key")
        p.add_argument("--seed", type=int, help="override config seed")
        p.add_argument("--out-dir", required=True)

    p = sub.add_parser("synth", help="generate a synthetic paired dataset")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--pairs", type=int, default=512)
    p.add_argument("--latent-dim", type=int, default=8)
    p.add_argument("--img-dim", type=int, default=768)
    p.add_argument("--n-species", type=int, default=64)
    p.add_argument("--views", type=int, default=1)
    p.add_argument("--noise", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cell-size", type=float, default=5000.0)
    p.add_argument("--n-classes", type=int, default=8)
    p.add_argument("--n-eval-species", type=int, default=10)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prep", help="long-format surveys to cover matrix")
    p.add_argument("--releves", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--species-index")
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("split", help="write a buffered spatial split manifest")
    p.add_argument("--locations", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--cell-size", type=float, default=5000.0)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--fold", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train-botania", help="pretrain the cover classifier")
    training_flags(p)
    p.set_defaults(func=cmd_train_botania)

    p = sub.add_parser("train-botaclip", help="contrastive alignment")
    training_flags(p)
    p.set_defaults(func=cmd_train_botaclip)

    p = sub.add_parser("train-botasp", help="supervised baseline")
    training_flags(p)
    p.set_defaults(func=cmd_train_botasp)

    p = sub.add_parser("embed", help="apply a trained image adapter")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--raw-input", action="store_true",
                   help="skip unit-normalization of the input rows")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("eval", help="downstream evaluation")
    p.add_argument("--task", required=True,
                   choices=("plant", "butterfly", "soil"))
    p.add_argument("--embeddings", required=True)
    p.add_argument("--covers")
    p.add_argument("--split")
    p.add_argument("--occurrences")
    p.add_argument("--soil")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("cluster-metrics", help="cluster quality indices")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out")
    p.add_argument("--raw-input", action="store_true")
    p.set_defaults(func=cmd_cluster_metrics)

    p = sub.add_parser("stats", help="compare metric reports across models")
    p.add_argument("--reports", nargs="+", required=True)
    p.add_argument("--names", nargs="*")
    p.add_argument("--metric", required=True)
    p.add_argument("--out")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--lower-is-better", action="store_true")
    p.set_defaults(func=cmd_stats)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return int(args.func(args) or 0)
    except UsageError as exc:
        return _emit_error(exc, 1)
    except (DataError, OSError) as exc:
        return _emit_error(exc, 2)
    except NumericError as exc:
        return _emit_error(exc, 3)


if __name__ == "__main__":
    sys.exit(main())
