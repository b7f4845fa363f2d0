"""Command-line entry point.

Subcommands: synth, split, train, encode, decode, classify, evaluate,
sweep, simulate, inspect.  Exit codes: 0 success, 1 usage error,
2 data/format error, 3 runtime failure.  All randomness derives from
--seed (default 0), so identical invocations produce identical outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .container import compute_bps, inspect_stream, payload_bits
from .dataio import (SyntheticSpec, load_dataset, save_dataset, split_dataset,
                     synthesize_dataset, synthesize_thumbnails)
from .errors import CodecError, FormatError
from .codec import preset_config
from .linksim import ChannelModel, LinkBudgetError, simulate
from .metrics import MetricReport, bleu_n, rouge1, ssim, top1_accuracy
from .pipeline import CodecStack, decode_stream, encode_records
from .retrieval import load_embedding_db
from .trainer import TrainConfig, train_layer

__all__ = ["main", "run"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="braincodec",
                     description="Scalable semantic codec for brain signals")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--classes", type=int, default=8)
    p.add_argument("--per-class", type=int, default=50)
    p.add_argument("--channels", type=int, default=16)
    p.add_argument("--samples", type=int, default=128)
    p.add_argument("--rate", type=int, default=256, help="sample rate in Hz")
    p.add_argument("--noise-sigma", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="dataset file to write")
    p.add_argument("--manifest", help="manifest JSON to write")
    p.add_argument("--thumbnails", help="optional per-record thumbnail .npy to write")
    p.add_argument("--split-ratios", default=None,
                   help="write the manifest pre-split, e.g. 0.8,0.1,0.1")

    p = sub.add_parser("split", help="assign a stratified train/val/test split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--ratios", default="0.8,0.1,0.1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train one layer codec")
    p.add_argument("--layer", type=int, required=True, choices=(1, 2, 3))
    p.add_argument("--config", help="JSON file of TrainConfig fields; flags override")
    p.add_argument("--dataset", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--targets", required=True,
                   help="label/caption EMBD file or thumbnail .npy")
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="rate-distortion weight (defaults per layer)")
    p.add_argument("--alpha", type=float, default=4.0)
    p.add_argument("--epochs", type=int, default=150)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--arch", default="paper",
                   help="'paper', 'desk', or a JSON file of builder arguments")
    p.add_argument("--condition-checkpoint",
                   help="label-layer checkpoint (required for --layer 2)")
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="line-oriented progress log path")

    p = sub.add_parser("encode", help="encode records into layered containers")
    p.add_argument("--dataset", required=True)
    p.add_argument("--manifest")
    p.add_argument("--layer", type=int, default=3, choices=(1, 2, 3),
                   help="highest layer to include")
    p.add_argument("--checkpoint1")
    p.add_argument("--checkpoint2")
    p.add_argument("--checkpoint3")
    p.add_argument("--split", choices=("train", "val", "test"),
                   help="encode only this split")
    p.add_argument("--no-crc", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("decode", help="decode containers back to features")
    p.add_argument("--streams", required=True, help="stream file or directory")
    p.add_argument("--max-layer", type=int, default=3, choices=(1, 2, 3))
    p.add_argument("--checkpoint1")
    p.add_argument("--checkpoint2")
    p.add_argument("--checkpoint3")
    p.add_argument("--label-db", help="classify label features against this db")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--features-dir", help="write decoded arrays here")

    p = sub.add_parser("classify", help="label-layer classification of streams")
    p.add_argument("--streams", required=True)
    p.add_argument("--checkpoint1", required=True)
    p.add_argument("--label-db", required=True)
    p.add_argument("--dataset", help="dataset providing ground-truth classes")
    p.add_argument("--manifest")
    p.add_argument("--split", choices=("train", "val", "test"),
                   help="restrict truths to this split (with --manifest)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", help="aggregate metric report")
    p.add_argument("--predictions", help="predictions JSON from classify/decode")
    p.add_argument("--captions", help="JSON list of {record_index,candidate,reference}")
    p.add_argument("--thumbnails-pred", help=".npy of decoded thumbnails")
    p.add_argument("--thumbnails-ref", help=".npy of reference thumbnails")
    p.add_argument("--streams", help="stream directory for bps accounting")
    p.add_argument("--samples-per-record", type=int,
                   help="raw samples per record (channels x samples)")
    p.add_argument("--include-headers", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep", help="rate-accuracy sweep over lambda values")
    p.add_argument("--dataset", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--targets", required=True)
    p.add_argument("--lambdas", required=True, help="comma-separated, >= 2 values")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--arch", default="desk")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("simulate", help="bandwidth-constrained delivery")
    p.add_argument("--streams", required=True)
    p.add_argument("--budget-bits", type=int)
    p.add_argument("--channel-config",
                   help="JSON with budget_bits_per_signal (and policy)")
    p.add_argument("--delivered-dir", help="write delivered slices here")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("inspect", help="print container header fields")
    p.add_argument("--stream", required=True)
    p.add_argument("--seed", type=int, default=0)

    return parser


def _parse_ratios(text: str) -> tuple[float, float, float]:
    parts = [float(x) for x in text.split(",")]
    if len(parts) != 3:
        raise UsageError(f"expected three ratios, got {text!r}")
    return tuple(parts)  # type: ignore[return-value]


def _stream_paths(arg: str) -> list[Path]:
    path = Path(arg)
    if path.is_dir():
        found = sorted(path.glob("*.eidc"))
        if not found:
            raise FormatError(f"no .eidc streams in {path}")
        return found
    if not path.exists():
        raise FormatError(f"stream path {path} does not exist")
    return [path]


def _load_stack(args, needed_layers) -> CodecStack:
    cks = {}
    for lid in needed_layers:
        flag = f"checkpoint{lid}"
        value = getattr(args, flag, None)
        if value is None:
            raise UsageError(f"--{flag} is required for layer {lid}")
        cks[lid] = load_checkpoint(value)
    return CodecStack(cks)


_DEFAULT_LAMBDA = {1: 4e4, 2: 40.0, 3: 4e4}


def _cmd_synth(args) -> int:
    spec = SyntheticSpec(n_classes=args.classes, records_per_class=args.per_class,
                         channels=args.channels, samples=args.samples,
                         sample_rate_hz=args.rate, noise_sigma=args.noise_sigma,
                         seed=args.seed)
    signals, manifest = synthesize_dataset(spec)
    if args.split_ratios:
        manifest = split_dataset(signals, manifest, _parse_ratios(args.split_ratios),
                                 seed=args.seed)
    save_dataset(args.out, signals)
    if args.manifest:
        manifest.save(args.manifest)
    if args.thumbnails:
        np.save(args.thumbnails, synthesize_thumbnails(spec).astype(np.float32))
    print(f"wrote {len(signals)} records to {args.out}")
    return 0


def _cmd_split(args) -> int:
    signals, manifest = load_dataset(args.dataset, args.manifest)
    out = split_dataset(signals, manifest, _parse_ratios(args.ratios), seed=args.seed)
    out.save(args.out)
    counts = {p: len(out.indices(p)) for p in ("train", "val", "test")}
    print(f"split sizes: {counts}")
    return 0


def _load_targets(path: str, layer: int):
    if path.endswith(".npy"):
        if layer != 3:
            raise UsageError("array targets are only valid for --layer 3")
        return np.load(path)
    db = load_embedding_db(path)
    return db


def _cmd_train(args) -> int:
    if args.layer == 2 and not args.condition_checkpoint:
        raise UsageError("--condition-checkpoint is required for --layer 2")
    signals, manifest = load_dataset(args.dataset, args.manifest)
    if manifest is None:
        raise UsageError("--manifest is required")
    targets = _load_targets(args.targets, args.layer)
    cond = load_checkpoint(args.condition_checkpoint) if args.condition_checkpoint else None

    in_ch, in_len = signals[0].data.shape
    feature_dim = getattr(targets, "dim", None)
    condition_dim = cond.codec.config["feature_dim"] if cond else None
    if args.arch in ("desk", "paper"):
        codec_config = preset_config(args.arch, args.layer, in_ch, in_len,
                                     feature_dim, condition_dim, args.seed)
    else:
        with open(args.arch, encoding="utf-8") as fh:
            codec_config = json.load(fh)

    source = {1: "label_db", 2: "caption_db", 3: "thumbnails"}[args.layer]
    fields = dict(
        layer_id=args.layer,
        lam=args.lam if args.lam is not None else _DEFAULT_LAMBDA[args.layer],
        alpha=args.alpha, epochs=args.epochs, batch_size=args.batch_size,
        lr=args.lr, seed=args.seed, target_source=source,
        codec_config=codec_config,
    )
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            overrides = json.load(fh)
        unknown = set(overrides) - set(fields) - {"beta1", "beta2", "grad_clip"}
        if unknown:
            raise UsageError(f"unknown TrainConfig fields in {args.config}: "
                             f"{sorted(unknown)}")
        fields.update(overrides)
    config = TrainConfig(**fields)
    ckpt = train_layer(config, signals, manifest, targets,
                       condition_checkpoint=cond, log_path=args.log)
    save_checkpoint(args.out, ckpt)
    print(f"layer {args.layer}: best epoch {ckpt.epoch}, "
          f"val loss {ckpt.val_loss:.4f} -> {args.out}")
    return 0


def _cmd_encode(args) -> int:
    signals, manifest = load_dataset(args.dataset, args.manifest)
    needed = [l for l in (1, 2, 3) if l <= args.layer]
    stack = _load_stack(args, needed)
    indices = list(range(len(signals)))
    if args.split:
        if manifest is None:
            raise UsageError("--split needs --manifest")
        indices = manifest.indices(args.split)
    chosen = [signals[i] for i in indices]
    streams = encode_records(stack, chosen, max_layer=args.layer,
                             with_crc=not args.no_crc, jobs=max(1, args.jobs))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    index = []
    for rec_idx, blob in zip(indices, streams):
        name = f"stream_{rec_idx:05d}.eidc"
        (out_dir / name).write_bytes(blob)
        index.append({"record_index": rec_idx, "file": name,
                      "bytes": len(blob), "class_id": signals[rec_idx].class_id,
                      "subject_id": signals[rec_idx].subject_id})
    with open(out_dir / "index.json", "w", encoding="utf-8") as fh:
        json.dump(index, fh, indent=1, sort_keys=True)
    print(f"encoded {len(streams)} records to {out_dir}")
    return 0


def _record_index_of(path: Path) -> int | None:
    stem = path.stem
    if "_" in stem:
        tail = stem.rsplit("_", 1)[1]
        if tail.isdigit():
            return int(tail)
    return None


def _cmd_decode(args) -> int:
    paths = _stream_paths(args.streams)
    needed = [l for l in (1, 2, 3) if l <= args.max_layer]
    present: set[int] = set()
    blobs = [p.read_bytes() for p in paths]
    from .container import unpack
    for blob in blobs:
        present |= set(unpack(blob)[0])
    stack = _load_stack(args, [l for l in needed if l in present])
    db = load_embedding_db(args.label_db) if args.label_db else None
    feat_dir = Path(args.features_dir) if args.features_dir else None
    if feat_dir:
        feat_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for path, blob in zip(paths, blobs):
        rec = decode_stream(stack, blob, max_layer=args.max_layer, label_db=db)
        row = {"file": path.name, "record_index": _record_index_of(path),
               "subject_id": rec.subject_id,
               "layer_bits": {str(k): v for k, v in sorted(rec.layer_bits.items())}}
        if rec.prediction is not None:
            row["predicted_class"] = rec.prediction.class_id
            row["score"] = rec.prediction.score
        if feat_dir:
            base = path.stem
            if rec.label_feature is not None:
                np.save(feat_dir / f"{base}_label.npy",
                        rec.label_feature.vector.astype(np.float32))
            if rec.caption_feature is not None:
                np.save(feat_dir / f"{base}_caption.npy",
                        rec.caption_feature.vector.astype(np.float32))
            if rec.thumbnail is not None:
                np.save(feat_dir / f"{base}_thumb.npy",
                        rec.thumbnail.pixels.astype(np.float32))
        rows.append(row)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(rows, fh, indent=1, sort_keys=True)
    print(f"decoded {len(rows)} streams -> {args.out}")
    return 0


def _cmd_classify(args) -> int:
    paths = _stream_paths(args.streams)
    stack = _load_stack(args, [1])
    db = load_embedding_db(args.label_db)
    truths = None
    if args.dataset:
        signals, manifest = load_dataset(args.dataset, args.manifest)
        truths = [s.class_id for s in signals]
    rows = []
    correct = 0
    judged = 0
    for path in paths:
        rec = decode_stream(stack, path.read_bytes(), max_layer=1, label_db=db)
        row = {"file": path.name, "record_index": _record_index_of(path),
               "subject_id": rec.subject_id,
               "predicted_class": rec.prediction.class_id,
               "score": rec.prediction.score}
        if truths is not None and row["record_index"] is not None:
            true = truths[row["record_index"]]
            row["true_class"] = true
            judged += 1
            correct += int(true == rec.prediction.class_id)
        rows.append(row)
    doc = {"predictions": rows}
    if judged:
        doc["top1_accuracy"] = correct / judged
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
    msg = f"classified {len(rows)} streams"
    if judged:
        msg += f", top-1 {correct / judged:.4f}"
    print(msg + f" -> {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    report = MetricReport()
    if args.predictions:
        with open(args.predictions, encoding="utf-8") as fh:
            doc = json.load(fh)
        rows = doc["predictions"] if isinstance(doc, dict) else doc
        pairs = [(r["predicted_class"], r["true_class"])
                 for r in rows if "true_class" in r]
        if pairs:
            preds, truths = zip(*pairs)
            report.top1 = top1_accuracy(preds, truths)
            subj: dict[int, list] = {}
            for r in rows:
                if "true_class" in r:
                    subj.setdefault(int(r.get("subject_id", 0)), []).append(
                        (r["predicted_class"], r["true_class"])
                    )
            for sid, sp in sorted(subj.items()):
                ps, ts = zip(*sp)
                report.per_subject[sid] = {
                    "top1": top1_accuracy(ps, ts), "count": len(sp)
                }
    if args.captions:
        with open(args.captions, encoding="utf-8") as fh:
            pairs = json.load(fh)
        if pairs:
            for n in (1, 2, 3, 4):
                report.bleu[n] = float(np.mean(
                    [bleu_n(p["candidate"], p["reference"], n) for p in pairs]
                ))
            prf = np.array([rouge1(p["candidate"], p["reference"]) for p in pairs])
            report.rouge1_prf = tuple(float(x) for x in prf.mean(axis=0))
    if args.thumbnails_pred:
        if not args.thumbnails_ref:
            raise UsageError("--thumbnails-ref is required with --thumbnails-pred")
        pred = np.load(args.thumbnails_pred)
        ref = np.load(args.thumbnails_ref)
        if pred.shape != ref.shape:
            raise FormatError("thumbnail arrays differ in shape")
        report.mean_ssim = float(np.mean([ssim(p, r) for p, r in zip(pred, ref)]))
    if args.streams:
        if not args.samples_per_record:
            raise UsageError("--samples-per-record is required with --streams")
        paths = _stream_paths(args.streams)
        totals: dict[int, int] = {}
        for path in paths:
            for lid, bits in payload_bits(path.read_bytes(),
                                          include_headers=args.include_headers).items():
                totals[lid] = totals.get(lid, 0) + bits
        n_samples = args.samples_per_record * len(paths)
        report.bps_per_layer = {lid: compute_bps(bits, n_samples)
                                for lid, bits in sorted(totals.items())}
        report.bps_total = compute_bps(sum(totals.values()), n_samples)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(report.to_json_dict(), fh, indent=1, sort_keys=True)
    print(f"report -> {args.out}")
    return 0


def _cmd_sweep(args) -> int:
    lambdas = [float(x) for x in args.lambdas.split(",")]
    if len(lambdas) < 2:
        raise UsageError("--lambdas needs at least two values")
    signals, manifest = load_dataset(args.dataset, args.manifest)
    db = load_embedding_db(args.targets)
    from .metrics import rate_accuracy_sweep
    from .sweeps import label_rate_accuracy_point

    def run_point(lam: float):
        return label_rate_accuracy_point(
            lam=lam, signals=signals, manifest=manifest, label_db=db,
            arch=args.arch, epochs=args.epochs, batch_size=args.batch_size,
            lr=args.lr, seed=args.seed,
        )

    points = rate_accuracy_sweep(lambdas, run_point)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump([{"bps": b, "top1": a} for b, a in points], fh, indent=1)
    for b, a in points:
        print(f"bps={b:.6f} top1={a:.4f}")
    return 0


def _cmd_simulate(args) -> int:
    paths = _stream_paths(args.streams)
    if args.channel_config:
        with open(args.channel_config, encoding="utf-8") as fh:
            channel = ChannelModel(**json.load(fh))
    elif args.budget_bits is not None:
        channel = ChannelModel(budget_bits_per_signal=args.budget_bits)
    else:
        raise UsageError("provide --budget-bits or --channel-config")
    out_dir = Path(args.delivered_dir) if args.delivered_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for path in paths:
        delivered, rep = simulate(path.read_bytes(), channel)
        if out_dir:
            (out_dir / path.name).write_bytes(delivered)
        rows.append({"file": path.name, "delivered_layers": rep.delivered_layers,
                     "delivered_bits": rep.delivered_bits,
                     "dropped_layers": rep.dropped_layers})
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(rows, fh, indent=1, sort_keys=True)
    print(f"simulated {len(rows)} deliveries -> {args.out}")
    return 0


def _cmd_inspect(args) -> int:
    blob = Path(args.stream).read_bytes()
    for line in inspect_stream(blob):
        print(line)
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "split": _cmd_split,
    "train": _cmd_train,
    "encode": _cmd_encode,
    "decode": _cmd_decode,
    "classify": _cmd_classify,
    "evaluate": _cmd_evaluate,
    "sweep": _cmd_sweep,
    "simulate": _cmd_simulate,
    "inspect": _cmd_inspect,
}


def run(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:
        # argparse --help exits 0; treat any other parser exit as usage error
        code = exc.code if isinstance(exc.code, int) else 0
        return 0 if code == 0 else 1
    except FormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (CodecError, LinkBudgetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
