"""Command-line surface for the toolkit.

Subcommands: synth, build-classifier, train, eval, zeroshot, fewshot,
corr, inspect. Exit codes: 0 success, 1 usage error, 2 data/format error,
3 numeric failure. Every subcommand writes a machine-readable report under
--out and never mutates its inputs; --seed makes artifacts bit-identical
across invocations (wall-clock times live only in the epoch log).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis, checkpoint, heads, protocols, training
from .classifiers import (
    ClassifierMatrix,
    InitKind,
    build_learnable_baseline,
    build_lda,
    build_random_normal,
    build_random_orthogonal,
    build_textual,
)
from .datastore import (
    FeatureStore,
    Manifest,
    Split,
    SyntheticSpec,
    generate_synthetic,
    inspect_store,
    load_manifest,
    manifest_store,
    write_manifest,
    write_store,
)
from .errors import DataError, NumericError, UsageError
from .heads import HeadKind, HeadSpec
from .numkit import RngState
from .training import Objective, TrainConfig


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _write_report(out_dir: Path, payload: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _head_spec(args, frames: int, dim: int) -> HeadSpec:
    return HeadSpec(
        kind=HeadKind(args.head),
        frames=frames,
        dim=dim,
        layers=args.layers,
        heads=args.heads,
        kernel=args.kernel,
    )


def _build_classifier(kind: str, args, manifest=None, manifest_path=None) -> ClassifierMatrix:
    rng = RngState(args.seed)
    if kind in {"normal", "orthogonal", "learnable"}:
        if manifest is not None:
            train = manifest_store(manifest, manifest_path, "train")
            d, c = train.dim, len(manifest.class_names)
            names = manifest.class_names
        else:
            if args.d is None or args.c is None:
                raise UsageError(f"--kind {kind} needs --d and --c (or --manifest)")
            d, c, names = args.d, args.c, None
        builder = {
            "normal": build_random_normal,
            "orthogonal": build_random_orthogonal,
            "learnable": build_learnable_baseline,
        }[kind]
        return builder(d, c, rng, names)
    if manifest is None:
        raise UsageError(f"--kind {kind} needs --manifest")
    if kind == "lda":
        train = manifest_store(manifest, manifest_path, "train")
        return build_lda(train, per_class_cap=args.lda_cap)
    if kind == "textual":
        text = manifest_store(manifest, manifest_path, "text")
        return build_textual(text.features[:, 0, :], manifest.class_names)
    raise UsageError(f"unknown classifier kind {kind!r}")


def _save_classifier(W: ClassifierMatrix, out_dir: Path) -> None:
    checkpoint.save_tensors({"weights": W.weights}, out_dir / "classifier.t4p")
    meta = {
        "init_kind": W.init_kind.value,
        "frozen": W.frozen,
        "class_names": W.class_names,
        "digest": W.digest(),
    }
    (out_dir / "classifier.json").write_text(json.dumps(meta, indent=2) + "\n")


def _load_classifier(run_dir: Path) -> ClassifierMatrix:
    meta = json.loads((run_dir / "classifier.json").read_text())
    weights = checkpoint.load_tensors(run_dir / "classifier.t4p")["weights"]
    return ClassifierMatrix(
        weights, InitKind(meta["init_kind"]), meta["frozen"], meta["class_names"]
    )


def _save_run(out_dir: Path, spec: HeadSpec, params, log, W: ClassifierMatrix) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(json.dumps(log.config, indent=2, sort_keys=True) + "\n")
    with open(out_dir / "epochs.jsonl", "w") as fh:
        for rec in log.epochs:
            fh.write(json.dumps(dataclasses.asdict(rec)) + "\n")
    spec_meta = {
        "kind": spec.kind.value,
        "frames": spec.frames,
        "dim": spec.dim,
        "layers": spec.layers,
        "heads": spec.heads,
        "kernel": spec.kernel,
    }
    (out_dir / "head.json").write_text(json.dumps(spec_meta, indent=2) + "\n")
    checkpoint.save_tensors(params, out_dir / "head.t4p")
    _save_classifier(W, out_dir)
    (out_dir / "digest.txt").write_text(
        f"before {log.classifier_digest_before}\nafter  {log.classifier_digest_after}\n"
    )


def _load_run(run_dir: Path):
    spec_meta = json.loads((run_dir / "head.json").read_text())
    spec = HeadSpec(
        kind=HeadKind(spec_meta["kind"]),
        frames=spec_meta["frames"],
        dim=spec_meta["dim"],
        layers=spec_meta["layers"],
        heads=spec_meta["heads"],
        kernel=spec_meta["kernel"],
    )
    params = checkpoint.load_tensors(run_dir / "head.t4p")
    return spec, params, _load_classifier(run_dir)


def _cmd_synth(args) -> int:
    if args.out is None:
        raise UsageError("synth needs --out")
    groups = [int(g) for g in args.group_sizes.split(",")] if args.group_sizes else None
    if groups is None:
        base = args.classes // args.groups
        groups = [base] * args.groups
        for i in range(args.classes - base * args.groups):
            groups[i] += 1
    spec = SyntheticSpec(
        classes=args.classes,
        groups=groups,
        rho_in=args.rho_in,
        rho_out=args.rho_out,
        samples_per_class=args.per_class,
        noise_std=args.noise,
        frames=args.frames,
        dim=args.dim,
        seed=args.seed,
        test_samples_per_class=args.test_per_class,
    )
    train, test, prototypes = generate_synthetic(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_store(train, out / "train.t4v")
    write_store(test, out / "test.t4v")
    text = FeatureStore(
        prototypes[:, None, :], np.arange(spec.classes), train.class_names, Split.TRAIN
    )
    write_store(text, out / "text.t4v")
    manifest = Manifest(
        dataset=f"synthetic-c{spec.classes}",
        class_names=train.class_names,
        train_features="train.t4v",
        test_features="test.t4v",
        text_embeddings="text.t4v",
        notes=f"rho_in={spec.rho_in} rho_out={spec.rho_out} noise={spec.noise_std}",
    )
    write_manifest(manifest, out / "manifest.json")
    _write_report(out, {
        "command": "synth",
        "classes": spec.classes,
        "groups": groups,
        "train_n": train.n,
        "test_n": test.n,
        "frames": spec.frames,
        "dim": spec.dim,
        "seed": spec.seed,
    })
    return 0


def _cmd_build_classifier(args) -> int:
    manifest = load_manifest(args.manifest) if args.manifest else None
    W = _build_classifier(args.kind, args, manifest, args.manifest)
    payload = {
        "command": "build-classifier",
        "kind": W.init_kind.value,
        "c": W.c,
        "d": W.d,
        "frozen": W.frozen,
        "digest": W.digest(),
    }
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _save_classifier(W, out)
        _write_report(out, payload)
    else:
        print(json.dumps(payload, indent=2))
    return 0


def _train_config(args) -> TrainConfig:
    from .objectives import GatherTopology

    return TrainConfig(
        epochs=args.epochs,
        warmup_epochs=args.warmup_epochs,
        base_lr=args.base_lr,
        min_lr=args.min_lr,
        weight_decay=args.weight_decay,
        beta1=args.beta1,
        beta2=args.beta2,
        batch_size=args.batch_size,
        objective=Objective(args.objective),
        seed=args.seed,
        label_fraction=args.label_fraction,
        shots=args.shots,
        gather=GatherTopology(args.gather_shards, args.gather_local),
        temperature=args.temperature,
        feature_jitter_std=args.feature_jitter,
    )


def _cmd_train(args) -> int:
    if args.manifest is None or args.out is None:
        raise UsageError("train needs --manifest and --out")
    manifest = load_manifest(args.manifest)
    train = manifest_store(manifest, args.manifest, "train")
    test = manifest_store(manifest, args.manifest, "test")
    W = _build_classifier(args.classifier, args, manifest, args.manifest)
    config = _train_config(args)
    spec = _head_spec(args, train.frames, train.dim)
    params, log, W_final = training.run(train, W, spec, config)
    out = Path(args.out)
    _save_run(out, spec, params, log, W_final)
    report = {
        "command": args.command,
        "classifier": W.init_kind.value,
        "objective": config.objective.value,
        "epochs_run": len(log.epochs),
        "final_train_loss": log.epochs[-1].train_loss if log.epochs else None,
        "classifier_digest_before": log.classifier_digest_before,
        "classifier_digest_after": log.classifier_digest_after,
        "frozen_unchanged": log.classifier_digest_before == log.classifier_digest_after,
    }
    if test.n:
        protocol = (
            protocols.Protocol.FEW_SHOT
            if getattr(args, "shots", None) is not None
            else protocols.Protocol.GENERAL
        )
        eval_report = protocols.evaluate_store(test, W_final, spec, params, protocol)
        log.evals.append(eval_report.to_json())
        report["eval"] = eval_report.to_json()
    _write_report(out, report)
    return 0


def _cmd_eval(args) -> int:
    if args.manifest is None or args.run is None or args.out is None:
        raise UsageError("eval needs --manifest, --run and --out")
    manifest = load_manifest(args.manifest)
    test = manifest_store(manifest, args.manifest, "test")
    spec, params, W = _load_run(Path(args.run))
    report = protocols.evaluate_store(test, W, spec, params)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "per_class.csv", "w", encoding="utf-8") as fh:
        fh.write("class,accuracy\n")
        for name, acc in report.per_class.items():
            fh.write(f"{name},{acc!r}\n")
    _write_report(out, {"command": "eval", **report.to_json()})
    return 0


def _cmd_zeroshot(args) -> int:
    if args.manifest is None or args.out is None:
        raise UsageError("zeroshot needs --manifest and --out")
    manifest = load_manifest(args.manifest)
    test = manifest_store(manifest, args.manifest, "test")
    text = manifest_store(manifest, args.manifest, "text")
    W = build_textual(text.features[:, 0, :], manifest.class_names)
    if args.run:
        spec, params, _ = _load_run(Path(args.run))
    else:
        spec = _head_spec(args, test.frames, test.dim)
        params = heads.init_params(spec, RngState(args.seed))
    report = protocols.zero_shot(
        half=args.half,
        target=test,
        text_W=W,
        spec=spec,
        params=params,
        repeats=args.repeats,
        rng=RngState(args.seed),
        subset_size=args.subset_size or manifest.zero_shot_classes,
        exclude=manifest.zero_shot_exclude,
    )
    _write_report(Path(args.out), {"command": args.command, **report.to_json()})
    return 0


def _cmd_fewshot(args) -> int:
    if args.manifest is None or args.out is None:
        raise UsageError("fewshot needs --manifest and --out")
    if args.shots is None:
        raise UsageError("fewshot needs --shots")
    if args.shots == 0:
        args.half = False
        args.run = None
        args.repeats = 1
        args.subset_size = None
        return _cmd_zeroshot(args)
    return _cmd_train(args)


def _cmd_corr(args) -> int:
    if args.out is None:
        raise UsageError("corr needs --out")
    manifest = load_manifest(args.manifest) if args.manifest else None
    W = _build_classifier(args.kind, args, manifest, args.manifest)
    cmap = analysis.correlation_map(W)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    analysis.export_map(cmap, args.clip_lo, args.clip_hi, out / "corr.csv", out / "corr.ppm")
    _write_report(out, {
        "command": "corr",
        "kind": W.init_kind.value,
        "classes": W.c,
        "clip": [args.clip_lo, args.clip_hi],
        "mean_offdiag": float(
            (np.abs(cmap.matrix).sum() - W.c) / (W.c * (W.c - 1))
        ) if W.c > 1 else 0.0,
    })
    return 0


def _cmd_inspect(args) -> int:
    path = Path(args.path)
    head = path.read_bytes()[:4]
    if head == checkpoint.MAGIC:
        tensors = checkpoint.describe(path)
        print(f"{path}: T4P1 checkpoint, {len(tensors)} tensor(s)")
        for name, shape in tensors:
            print(f"  {name}  {shape}")
        return 0
    info = inspect_store(path)
    print(
        f"{path}: T4V1 store, n={info['n']} T={info['frames']} d={info['dim']} "
        f"classes={info['classes']} crc=ok"
    )
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="t4v", description=__doc__, allow_abbrev=False)
    common = _Parser(add_help=False, allow_abbrev=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--manifest", type=str, default=None)
    common.add_argument("--out", type=str, default=None)

    classifier_opts = _Parser(add_help=False, allow_abbrev=False)
    classifier_opts.add_argument("--d", type=int, default=None)
    classifier_opts.add_argument("--c", type=int, default=None)
    classifier_opts.add_argument("--lda-cap", type=int, default=60)

    head_opts = _Parser(add_help=False, allow_abbrev=False)
    head_opts.add_argument("--head", choices=["tap", "t1d", "ttrans"], default="tap")
    head_opts.add_argument("--layers", type=int, default=1)
    head_opts.add_argument("--heads", type=int, default=4)
    head_opts.add_argument("--kernel", type=int, default=3)

    train_opts = _Parser(add_help=False, allow_abbrev=False)
    train_opts.add_argument("--classifier",
                            choices=["normal", "orthogonal", "lda", "textual", "learnable"],
                            default="textual")
    train_opts.add_argument("--objective",
                            choices=[o.value for o in Objective], default="frozen-ce")
    train_opts.add_argument("--epochs", type=int, default=30)
    train_opts.add_argument("--warmup-epochs", type=int, default=5)
    train_opts.add_argument("--base-lr", type=float, default=5e-5)
    train_opts.add_argument("--min-lr", type=float, default=5e-6)
    train_opts.add_argument("--weight-decay", type=float, default=0.2)
    train_opts.add_argument("--beta1", type=float, default=0.9)
    train_opts.add_argument("--beta2", type=float, default=0.98)
    train_opts.add_argument("--batch-size", type=int, default=32)
    train_opts.add_argument("--temperature", type=float, default=1.0)
    train_opts.add_argument("--label-fraction", type=float, default=1.0)
    train_opts.add_argument("--shots", type=int, default=None)
    train_opts.add_argument("--gather-shards", type=int, default=1)
    train_opts.add_argument("--gather-local", type=int, default=32)
    train_opts.add_argument("--feature-jitter", type=float, default=0.0)

    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], allow_abbrev=False)
    p.add_argument("--classes", type=int, default=16)
    p.add_argument("--groups", type=int, default=2)
    p.add_argument("--group-sizes", type=str, default=None)
    p.add_argument("--rho-in", type=float, default=0.6)
    p.add_argument("--rho-out", type=float, default=0.1)
    p.add_argument("--per-class", type=int, default=30)
    p.add_argument("--test-per-class", type=int, default=None)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--frames", type=int, default=8)
    p.add_argument("--dim", type=int, default=64)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("build-classifier", parents=[common, classifier_opts], allow_abbrev=False)
    p.add_argument("--kind", required=True,
                   choices=["normal", "orthogonal", "lda", "textual", "learnable"])
    p.set_defaults(func=_cmd_build_classifier)

    p = sub.add_parser("train", parents=[common, classifier_opts, head_opts, train_opts],
                       allow_abbrev=False)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", parents=[common], allow_abbrev=False)
    p.add_argument("--run", type=str, required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("zeroshot", parents=[common, head_opts], allow_abbrev=False)
    p.add_argument("--half", action="store_true")
    p.add_argument("--run", type=str, default=None)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--subset-size", type=int, default=None)
    p.set_defaults(func=_cmd_zeroshot)

    p = sub.add_parser("fewshot", parents=[common, classifier_opts, head_opts, train_opts],
                       allow_abbrev=False)
    p.add_argument("--half", action="store_true")
    p.add_argument("--run", type=str, default=None)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--subset-size", type=int, default=None)
    p.set_defaults(func=_cmd_fewshot)

    p = sub.add_parser("corr", parents=[common, classifier_opts], allow_abbrev=False)
    p.add_argument("--kind", required=True,
                   choices=["normal", "orthogonal", "lda", "textual", "learnable"])
    p.add_argument("--clip-lo", type=float, default=-0.3)
    p.add_argument("--clip-hi", type=float, default=1.0)
    p.set_defaults(func=_cmd_corr)

    p = sub.add_parser("inspect", parents=[], allow_abbrev=False)
    p.add_argument("path")
    p.set_defaults(func=_cmd_inspect)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"t4v: usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"t4v: data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"t4v: numeric error: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"t4v: data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
