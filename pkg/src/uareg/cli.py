"""Command-line entry point: ``uareg <subcommand> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage error. Failures print a
single ``error: <kind>: <message>`` line on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from uareg import config as config_mod
from uareg.augment import add_noise_snr, lmr_mix, mixup_mix, sample_lmr_patch
from uareg.data import FeaturePipeline
from uareg.dsp import io as feature_io
from uareg.dsp.features import extract
from uareg.ingest import (Manifest, build_manifest, bundled_split_spec, load_split_spec,
                          validate_split)

SUBCOMMANDS = ("split", "extract", "augment-preview", "train", "eval", "snr-sweep",
               "alpha-sweep", "gradcheck")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(p):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="uareg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("split", help="segment labeled audio and write a split manifest")
    p.add_argument("--data-root", required=True, help="directory with one subdirectory per class")
    p.add_argument("--split-spec", required=True,
                   help="JSON record_id -> train|test, or a bundled name (shipsear, deepship)")
    p.add_argument("--val-fraction", type=float)
    p.add_argument("--by-record", action="store_true", help="draw validation per record")
    p.add_argument("--segment", type=float, help="segment length in seconds")
    p.add_argument("--overlap", type=float, help="segment overlap in seconds")
    p.add_argument("--out", required=True, help="manifest path (.jsonl)")
    _common(p)

    p = sub.add_parser("extract", help="compute feature files for a manifest")
    p.add_argument("--feature", choices=["stft", "mel", "bark", "cqt"])
    p.add_argument("--band", help="LO:HI in Hz")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", choices=["train", "val", "test"])
    p.add_argument("--real-part", action="store_true", help="keep |Re X| instead of |X|")
    p.add_argument("--out", required=True)
    _common(p)

    p = sub.add_parser("augment-preview", help="write augmented examples with a JSON sidecar")
    p.add_argument("--manifest", required=True)
    p.add_argument("--feature", choices=["stft", "mel", "bark", "cqt"])
    p.add_argument("--band")
    p.add_argument("--mode", choices=["noise", "lmr", "mixup"], required=True)
    p.add_argument("--count", type=int, default=4)
    p.add_argument("--snr", help="LO:HI dB for noise mode")
    p.add_argument("--out", required=True)
    _common(p)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--manifest", required=True)
    p.add_argument("--feature", choices=["stft", "mel", "bark", "cqt"])
    p.add_argument("--band")
    p.add_argument("--alpha", type=float)
    p.add_argument("--lmr-p", type=float)
    p.add_argument("--snr", help="LO:HI dB for noisy counterparts")
    p.add_argument("--epochs", type=int)
    p.add_argument("--mix", choices=["lmr", "mixup"])
    p.add_argument("--out", required=True)
    _common(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--out")

    p = sub.add_parser("snr-sweep", help="accuracy under added test noise")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--ranges", default="5:30,-5:20,-15:10")
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    p = sub.add_parser("alpha-sweep", help="train one model per regularization weight")
    p.add_argument("--manifest", required=True)
    p.add_argument("--feature", choices=["stft", "mel", "bark", "cqt"])
    p.add_argument("--band")
    p.add_argument("--alphas", default="0,0.5,1,2")
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", required=True)
    _common(p)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full objective")
    p.add_argument("--precision", choices=["f64", "f32"], default="f64")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-5)
    return parser


def _run_config(args, **overrides) -> config_mod.RunConfig:
    cfg = config_mod.load(getattr(args, "config", None))
    if getattr(args, "seed", None) is not None:
        cfg.set("seed", args.seed)
    return cfg.update(overrides)


def _load_manifest(path) -> Manifest:
    if not Path(path).is_file():
        raise FileNotFoundError(f"missing manifest: {path}")
    return Manifest.load(path)


def _pipeline_from_ckpt(meta: dict, model) -> FeaturePipeline:
    from uareg.training.loop import feature_from_dict
    pipe = FeaturePipeline(feature_from_dict(meta["feature"]), model.cfg.time_len,
                           meta.get("segment_s", 30.0), meta.get("train", {}).get("noise_domain", "waveform"))
    pipe.mean, pipe.std = meta["norm"]
    return pipe


def cmd_split(args) -> int:
    cfg = _run_config(args, val_fraction=args.val_fraction, segment_s=args.segment,
                      overlap_s=args.overlap)
    spec_arg = args.split_spec
    spec = load_split_spec(spec_arg) if Path(spec_arg).is_file() else bundled_split_spec(spec_arg)
    root = Path(args.data_root)
    if not root.is_dir():
        raise FileNotFoundError(f"missing data root: {root}")
    dirs = {d.name: d for d in sorted(root.iterdir()) if d.is_dir()}
    manifest = build_manifest(dirs, spec, cfg.get("val_fraction", 0.15), cfg.seed(),
                              cfg.get("segment_s", 30.0), cfg.get("overlap_s", 15.0),
                              args.by_record or cfg.get("val_by_record", False))
    leaks = validate_split(manifest)
    if leaks:
        raise ValueError(f"track leakage between train/val and test: {leaks}")
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    manifest.save(args.out)
    for w in manifest.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(json.dumps(manifest.counts()))
    return 0


def cmd_extract(args) -> int:
    cfg = _run_config(args, feature=args.feature, band=args.band,
                      real_part="true" if args.real_part else None)
    feat = cfg.feature()
    manifest = _load_manifest(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.write(out / "config.resolved")
    pipe = FeaturePipeline(feat, None, cfg.get("segment_s", 30.0))
    entries = manifest.split(args.split) if args.split else manifest.entries
    digest = feat.digest()
    with open(out / "index.jsonl", "w", encoding="utf-8") as idx:
        for i, e in enumerate(entries):
            spec = extract(pipe.segment(e), feat)
            name = f"{i:06d}_{Path(e.path).stem}_{e.offset_s:g}.uaspec"
            feature_io.save(spec, out / name, digest)
            idx.write(json.dumps({"file": name, "label": e.label, "record_id": e.record_id,
                                  "split": e.split, "shape": list(spec.shape)}) + "\n")
    print(f"wrote {len(entries)} {feat.kind} features to {out}")
    return 0


def cmd_augment_preview(args) -> int:
    cfg = _run_config(args, feature=args.feature, band=args.band)
    feat = cfg.feature()
    manifest = _load_manifest(args.manifest)
    rng = np.random.default_rng(cfg.seed())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pipe = FeaturePipeline(feat, None, cfg.get("segment_s", 30.0))
    entries = manifest.split("train") or manifest.entries
    lo, hi = config_mod._range(args.snr) if args.snr else cfg.train().snr_range_db
    sidecar = []
    for k in range(args.count):
        i, j = rng.choice(len(entries), size=2, replace=len(entries) < 2)
        ei, ej = entries[i], entries[j]
        base = extract(pipe.segment(ei), feat)
        record = {"parents": [ei.path, ej.path], "offsets_s": [ei.offset_s, ej.offset_s],
                  "labels": [ei.label, ej.label]}
        if args.mode == "noise":
            snr = float(rng.uniform(lo, hi))
            spec = extract(add_noise_snr(pipe.segment(ei), snr, rng), feat)
            record = {"parents": [ei.path], "offsets_s": [ei.offset_s], "labels": [ei.label],
                      "snr_db": snr}
        else:
            other = extract(pipe.segment(ej), feat).values
            W, H = base.values.shape
            if args.mode == "lmr":
                patch = sample_lmr_patch(W, H, rng)
                mixed = lmr_mix(base.values, other, patch)
                record["patch"] = {"a": patch.a, "b": patch.b, "t0": patch.t0, "f0": patch.f0}
            else:
                mixed = mixup_mix(base.values, other, rng)
            record["lambda"] = mixed.lam
            spec = base
            spec.values = mixed.values
        name = f"{k:04d}_{args.mode}.uaspec"
        feature_io.save(spec, out / name, feat.digest())
        record["file"] = name
        sidecar.append(record)
    (out / "preview.json").write_text(json.dumps(sidecar, indent=1), encoding="utf-8")
    print(f"wrote {len(sidecar)} {args.mode} previews to {out}")
    return 0


def cmd_train(args) -> int:
    from uareg.training.loop import train
    cfg = _run_config(args, feature=args.feature, band=args.band, alpha=args.alpha,
                      p_lmr=args.lmr_p, snr=args.snr, epochs=args.epochs, mix_mode=args.mix)
    manifest = _load_manifest(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.write(out / "config.resolved")
    result = train(manifest, cfg.feature(), cfg.train(), cfg.model(len(manifest.class_names)),
                   out, cfg.get("segment_s", 30.0))
    best = result.history[result.best_epoch - 1]
    print(json.dumps({"best_epoch": result.best_epoch, "val_acc": best["val_acc"],
                      "checkpoint": str(out / "best.ckpt")}))
    return 0


def _entries(manifest, split):
    entries = manifest.split(split)
    if not entries:
        raise ValueError(f"empty {split} split")
    return entries


def cmd_eval(args) -> int:
    from uareg.evaluate import evaluate
    from uareg.model import Model
    model, meta = Model.load(args.ckpt)
    manifest = _load_manifest(args.manifest)
    names = meta["class_names"]
    if sorted(set(e.label for e in manifest.entries) - set(names)):
        raise ValueError("class mismatch between checkpoint and manifest")
    result = evaluate(model, _entries(manifest, args.split), _pipeline_from_ckpt(meta, model), names)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        result.confusion.to_csv(out / "confusion.csv")
        result.confusion.to_pgm(out / "confusion.pgm")
        (out / "accuracy.csv").write_text(f"split,accuracy\n{args.split},{result.accuracy}\n")
    print(json.dumps({"split": args.split, "accuracy": result.accuracy}))
    return 0


def _parse_ranges(text: str):
    out = []
    for part in text.split(","):
        lo, hi = (float(v) for v in part.split(":"))
        out.append((lo, hi))
    return out


def cmd_snr_sweep(args) -> int:
    from uareg.evaluate import snr_sweep
    from uareg.model import Model
    model, meta = Model.load(args.ckpt)
    manifest = _load_manifest(args.manifest)
    res = snr_sweep(model, _entries(manifest, args.split), _pipeline_from_ckpt(meta, model),
                    meta["class_names"], _parse_ranges(args.ranges), args.seed, args.repeats)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        res.to_csv(Path(args.out) / "snr_sweep.csv")
    for lo, hi, acc in res.rows():
        print(f"{lo},{hi},{acc:.4f}")
    return 0


def cmd_alpha_sweep(args) -> int:
    from uareg.evaluate import alpha_sweep
    cfg = _run_config(args, feature=args.feature, band=args.band, epochs=args.epochs)
    manifest = _load_manifest(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.write(out / "config.resolved")
    alphas = [float(a) for a in args.alphas.split(",")]
    rows = alpha_sweep(manifest, cfg.feature(), cfg.train(), cfg.model(len(manifest.class_names)),
                       alphas, cfg.get("segment_s", 30.0), out)
    for r in rows:
        print(f"{r.alpha:g},{r.test_accuracy:.4f}")
    return 0


def cmd_gradcheck(args) -> int:
    from uareg.training.check import objective_grad_check
    err = objective_grad_check(args.precision, seed=args.seed)
    print(f"max_rel_error={err:.3e}")
    return 0 if err < args.tol else 1


COMMANDS = {
    "split": cmd_split, "extract": cmd_extract, "augment-preview": cmd_augment_preview,
    "train": cmd_train, "eval": cmd_eval, "snr-sweep": cmd_snr_sweep,
    "alpha-sweep": cmd_alpha_sweep, "gradcheck": cmd_gradcheck,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    first = next((a for a in argv if not a.startswith("-")), None)
    if first is not None and first not in SUBCOMMANDS:
        print(f"error: usage: unknown subcommand {first!r}", file=sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if args.command is None:
        parser.print_help()
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except config_mod.ConfigError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError, FloatingPointError) as exc:
        print(f"error: {type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else exc!r}",
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
