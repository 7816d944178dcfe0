"""Command-line interface.

Subcommands: synth, augment, preprocess, train, eval, gradcheck.
Datasets on disk are a directory holding ``manifest.json`` plus the
sequence/label files it lists.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import geometry
from .autodiff import gradcheck
from .data import (DatasetManifest, SynthSpec, load_dataset, make_folds,
                   split_sequences, synth_generate, write_dataset,
                   write_sequence)
from .harness import (RunConfig, evaluate_model, parse_kv_file,
                      prepare_sequences, run_config_from_kv, run_experiment,
                      RunReport, features_for)
from .model import MsTcrNet
from .preprocess import fir_lowpass_resample


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kinseg",
                                description="kinematic action segmentation")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate a synthetic dataset")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--classes", type=int, default=3)
    sp.add_argument("--sequences", type=int, default=10)
    sp.add_argument("--frames-min", type=int, default=500)
    sp.add_argument("--frames-max", type=int, default=700)
    sp.add_argument("--mirrored", action="store_true",
                    help="emit left-handed (mirrored) procedures")
    sp.add_argument("--folds", type=int, default=5)

    ap = sub.add_parser("augment", help="apply WFR/HI to a dataset on disk")
    ap.add_argument("--data", required=True)
    ap.add_argument("--out", required=True)
    ap.add_argument("--wfr-theta-max", type=float, default=7.0)
    ap.add_argument("--wfr-prob", type=float, default=0.0)
    ap.add_argument("--hi-prob", type=float, default=0.0)
    ap.add_argument("--seed", type=int, default=0)

    pp = sub.add_parser("preprocess",
                        help="filter/resample + velocities + standardize")
    pp.add_argument("--data", required=True)
    pp.add_argument("--out", required=True)
    pp.add_argument("--target-hz", type=float, default=30.0)

    tp = sub.add_parser("train", help="train per the fold strategy")
    tp.add_argument("--data", required=True)
    tp.add_argument("--out", required=True)
    tp.add_argument("--config", help="key = value config file")
    tp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a single config key")

    ep = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    ep.add_argument("--checkpoint", required=True)
    ep.add_argument("--data", required=True)
    ep.add_argument("--out", required=True)
    ep.add_argument("--split", choices=("train", "val", "test"), default="test")
    ep.add_argument("--fold", type=int, default=0)

    gp = sub.add_parser("gradcheck",
                        help="finite-difference gradient suite (exit 1 on failure)")
    gp.add_argument("--quiet", action="store_true")
    return p


def _load_manifest(data_dir) -> DatasetManifest:
    path = Path(data_dir) / "manifest.json"
    if not path.exists():
        raise FileNotFoundError(f"no manifest.json under {data_dir}")
    return DatasetManifest.load(path)


def _cmd_synth(args) -> int:
    spec = SynthSpec(num_classes=args.classes,
                     classes=_default_classes(args.classes),
                     class_names=_default_names(args.classes),
                     num_sequences=args.sequences, seed=args.seed,
                     frames_min=args.frames_min, frames_max=args.frames_max,
                     mirrored=args.mirrored)
    seqs = synth_generate(spec)
    write_dataset(args.out, seqs, spec.class_names, name=f"synth_seed{args.seed}",
                  n_folds=args.folds)
    print(f"wrote {len(seqs)} sequences to {args.out}")
    return 0


def _default_classes(n):
    from .data import DEFAULT_CLASSES, ClassMotion
    out = list(DEFAULT_CLASSES)
    while len(out) < n:  # extra classes cycle the axes at a new frequency
        i = len(out)
        out.append(ClassMotion(freq_hz=0.8 + 0.5 * (i - 2), amp_mm=20.0,
                               axis=i % 3, euler_axis=(i + 1) % 3,
                               euler_amp_deg=15.0,
                               angular_rate_hz=0.8 + 0.5 * (i - 2),
                               mean_duration=90.0, std_duration=25.0))
    return out[:n]


def _default_names(n):
    from .data import DEFAULT_CLASS_NAMES
    names = list(DEFAULT_CLASS_NAMES)
    while len(names) < n:
        names.append(f"gesture_{chr(ord('a') + len(names) - 1)}")
    return names[:n]


def _cmd_augment(args) -> int:
    manifest = _load_manifest(args.data)
    seqs = load_dataset(manifest, root=args.data)
    rng = np.random.default_rng(args.seed)
    lines = {}
    out_seqs = []
    skipped = 0
    for i, seq in enumerate(seqs):
        out = seq
        if args.hi_prob > 0 and rng.random() < args.hi_prob:
            if i not in lines:
                try:
                    lines[i] = geometry.fit_hand_reflection(seq)
                except geometry.VerticalBoundaryError:
                    lines[i] = None
                    skipped += 1
            if lines[i] is not None:
                out = geometry.hand_inversion(out, line=lines[i])
        if args.wfr_prob > 0 and rng.random() < args.wfr_prob:
            out = geometry.world_frame_rotation(out, args.wfr_theta_max, rng)
        out.name, out.participant = seq.name, seq.participant
        out_seqs.append(out)
    write_dataset(args.out, out_seqs, manifest.class_names,
                  name=manifest.name + "_aug")
    msg = f"wrote {len(out_seqs)} augmented sequences to {args.out}"
    if skipped:
        msg += f" ({skipped} vertical-boundary sequence(s) skipped hand inversion)"
    print(msg)
    return 0


def _cmd_preprocess(args) -> int:
    manifest = _load_manifest(args.data)
    seqs = load_dataset(manifest, root=args.data)
    out_dir = Path(args.out)
    (out_dir / "features").mkdir(parents=True, exist_ok=True)
    for seq in seqs:
        if seq.rate_hz > args.target_hz:
            seq = fir_lowpass_resample(seq, args.target_hz)
        feats, labels = features_for(seq)
        stem = seq.name
        header = ",".join(f"v{i}" for i in range(feats.shape[1]))
        np.savetxt(out_dir / "features" / f"{stem}.csv", feats, fmt="%.17g",
                   delimiter=",", header=header, comments="")
        np.savetxt(out_dir / "features" / f"{stem}_labels.txt",
                   labels, fmt="%d")
    print(f"wrote features for {len(seqs)} sequences to {out_dir}")
    return 0


def _cmd_train(args) -> int:
    kv = parse_kv_file(args.config) if args.config else {}
    for item in args.set:
        key, _, value = item.partition("=")
        if not _:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        kv[key.strip()] = value.strip()
    cfg = run_config_from_kv(kv)
    manifest = _load_manifest(args.data)
    cfg.model.num_classes = len(manifest.class_names)
    from .sequence import get_layout
    cfg.model.input_dim = get_layout(manifest.layout).n_channels
    report = run_experiment(cfg, manifest, args.out, root=args.data)
    print(json.dumps({k: v for k, v in report.summary.items()
                      if k in ("accuracy", "edit", "f1_macro")}, indent=2))
    return 0


def _cmd_eval(args) -> int:
    from .autodiff import checkpoint as ckpt
    model = MsTcrNet.load_checkpoint(args.checkpoint)
    manifest = _load_manifest(args.data)
    _, header = ckpt.load(args.checkpoint)
    run_kv = header["config"].get("run")
    cfg = RunConfig(model=model.cfg) if run_kv is None else _run_from_dict(run_kv, model)
    seqs = prepare_sequences(manifest, root=args.data)
    splits = make_folds(manifest, cfg.fold_strategy)
    if args.fold >= len(splits):
        raise ValueError(f"fold {args.fold} out of range ({len(splits)} folds)")
    train, val, test = split_sequences(seqs, splits[args.fold])
    chosen = {"train": train, "val": val, "test": test}[args.split]
    rows = evaluate_model(model, chosen, cfg, with_pg=True)
    for row in rows:
        row.update({"fold": args.fold, "split": args.split})
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = RunReport(config=cfg.to_dict(), records=rows)
    report.save(out_dir / "eval.json", out_dir / "eval.csv")
    print(json.dumps(report.summary.get("accuracy", {}), indent=2))
    return 0


def _run_from_dict(d: dict, model: MsTcrNet) -> RunConfig:
    from .loss import LossConfig
    from .harness import AugConfig
    return RunConfig(model=model.cfg,
                     loss=LossConfig(smoothing_weight=d["loss"]["smoothing_weight"],
                                     tau=d["loss"]["tau"],
                                     detach_prev_frame=d["loss"]["detach_prev_frame"]),
                     aug=AugConfig(**d["aug"]), lr=d["lr"], epochs=d["epochs"],
                     scheduler=d["scheduler"],
                     plateau_patience=d["plateau_patience"],
                     seeds=tuple(d["seeds"]), fold_strategy=d["fold_strategy"],
                     checkpoint_selection=d["checkpoint_selection"],
                     macro_exclude_background=d["macro_exclude_background"])


def _cmd_gradcheck(args) -> int:
    ok = gradcheck.run_full_suite(verbose=not args.quiet)
    print("gradcheck: PASS" if ok else "gradcheck: FAIL")
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {"synth": _cmd_synth, "augment": _cmd_augment,
                "preprocess": _cmd_preprocess, "train": _cmd_train,
                "eval": _cmd_eval, "gradcheck": _cmd_gradcheck}
    try:
        return handlers[args.command](args)
    except Exception as exc:  # runtime failures exit 1; argparse exits 2 itself
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
