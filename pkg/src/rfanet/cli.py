"""Command-line entry point.

Subcommands: synth, train, embed, eval, gradcheck. Exit codes: 0 success,
1 validation error, 2 runtime error. Every command validates its full
configuration before touching the filesystem, and all randomness flows from
config-declared seeds.

Heavy imports happen inside the command handlers so that --threads can cap
the BLAS worker count before numpy is loaded.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="rfanet",
        description="Recurrent feature aggregation for multi-shot person re-identification",
    )
    parser.add_argument(
        "--threads", type=int, default=None,
        help="cap the numerical worker thread count (default: library default)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset on disk")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("train", help="train the aggregation network")
    p.add_argument("--config", required=True)
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("embed", help="embed every sequence of a manifest")
    p.add_argument("--config", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="run the configured experiment and write reports")
    p.add_argument("--config", required=True)
    p.add_argument("--model", default=None, help="unused placeholder; eval trains per trial")

    p = sub.add_parser("gradcheck", help="finite-difference check of the BPTT gradients")
    p.add_argument("--d", type=int, default=6, help="input dimension")
    p.add_argument("--h", type=int, default=4, help="hidden dimension")
    p.add_argument("--n", type=int, default=3, help="number of classes")
    p.add_argument("--l", type=int, default=5, help="subsequence length")
    p.add_argument("--seed", type=int, default=0)
    return parser


def _load_config(path):
    from .config import load_config

    return load_config(path)


def _require_manifest(cfg):
    from .errors import ConfigurationError

    if not cfg.paths.manifest:
        raise ConfigurationError("config paths.manifest is required for this command")
    return Path(cfg.paths.manifest)


def cmd_synth(args):
    from .errors import ConfigurationError
    from .evaluation import generate_synthetic, save_dataset

    cfg = _load_config(args.config)
    out = Path(args.out)
    if (out / "manifest.json").exists() and not args.force:
        raise ConfigurationError(f"{out / 'manifest.json'} exists; pass --force to overwrite")
    s = cfg.synthetic
    dataset = generate_synthetic(
        s.num_persons, s.frames_per_camera,
        width=cfg.image_w, height=cfg.image_h,
        appearance_seed=s.appearance_seed,
        camera_gain=s.camera_gain, camera_offset=s.camera_offset,
        jitter=s.jitter, noise_pool_size=s.noise_pool_size,
    )
    try:
        manifest = save_dataset(dataset, out)
    except OSError as exc:
        raise RuntimeError(f"cannot write dataset under {out}: {exc}") from exc
    print(
        f"wrote {len(dataset.persons)} persons x 2 cameras "
        f"({2 * len(dataset.persons)} sequences, {s.frames_per_camera} frames each) "
        f"and {len(dataset.noise_pool)} noise frames to {manifest}"
    )
    return EXIT_OK


def cmd_train(args):
    from .errors import ConfigurationError
    from .evaluation import load_dataset
    from .features import sequence_features
    from .rnn import LabeledSequence, save_model, train

    cfg = _load_config(args.config)
    manifest = _require_manifest(cfg)
    model_path = Path(cfg.paths.model or "model.rfanet")
    if model_path.exists() and not args.force:
        raise ConfigurationError(f"{model_path} exists; pass --force to overwrite")
    dataset = load_dataset(manifest)
    ids = sorted(dataset.ids())
    seqs = []
    for idx, person in enumerate(sorted(dataset.persons, key=lambda p: p.person_id)):
        for cam, frames in ((0, person.frames_a), (1, person.frames_b)):
            feats = sequence_features(frames, cfg.grid, cfg.image_w, cfg.image_h)
            seqs.append(LabeledSequence(idx, feats, f"p{person.person_id}/cam{cam}"))
    model, history = train(seqs, cfg.train)
    save_model(model_path, model)
    loss_path = model_path.with_suffix(".loss.csv")
    with open(loss_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("epoch", "mean_loss"))
        for epoch, loss in enumerate(history):
            writer.writerow((epoch, f"{loss:.12f}"))
    print(f"trained on {len(seqs)} sequences ({len(ids)} identities); "
          f"model -> {model_path}, loss history -> {loss_path}")
    return EXIT_OK


def cmd_embed(args):
    from dataclasses import replace

    from .aggregate import embed_sequence, write_embeddings
    from .evaluation import _derive_seed, load_dataset
    from .features import sequence_features
    from .rnn import load_model

    cfg = _load_config(args.config)
    manifest = _require_manifest(cfg)
    dataset = load_dataset(manifest)
    model = load_model(args.model)
    embeddings = []
    for person in sorted(dataset.persons, key=lambda p: p.person_id):
        for cam, frames in ((0, person.frames_a), (1, person.frames_b)):
            feats = sequence_features(frames, cfg.grid, cfg.image_w, cfg.image_h)
            acfg = replace(cfg.agg, seed=_derive_seed(cfg.agg.seed, person.person_id, cam))
            embeddings.append(embed_sequence(model, feats, acfg, person.person_id, cam))
    write_embeddings(args.out, embeddings)
    print(f"wrote {len(embeddings)} embeddings of dimension "
          f"{embeddings[0].values.size} to {args.out}")
    return EXIT_OK


def cmd_eval(args):
    from .errors import ConfigurationError
    from .evaluation import load_dataset, run_experiment, write_report

    cfg = _load_config(args.config)
    manifest = _require_manifest(cfg)
    if not cfg.paths.out_dir:
        raise ConfigurationError("config paths.out_dir is required for eval")
    dataset = load_dataset(manifest)
    report = run_experiment(dataset, cfg)
    text_path, csv_path = write_report(cfg.paths.out_dir, report)
    for level in report.levels:
        print(f"level {level}: mean rank-1 = {report.mean_curves[level].rate(1):.4f}")
    print(f"report -> {text_path}, CSV -> {csv_path}")
    return EXIT_OK


def cmd_gradcheck(args):
    from .errors import ConfigurationError
    from .rnn import grad_check

    dims = (args.d, args.h, args.n, args.l)
    if min(dims) < 1:
        raise ConfigurationError("all dimensions must be >= 1")
    if args.d * args.h > 4096:
        raise ConfigurationError(
            "gradcheck is a desk-scale oracle; keep d*h <= 4096"
        )
    report = grad_check(args.d, args.h, args.n, args.l, seed=args.seed)
    for name, err in report.per_tensor.items():
        print(f"{name:>4s}: worst relative error {err:.3e}")
    verdict = "PASS" if report.passed else "FAIL"
    print(f"{verdict}: max relative error {report.max_rel_error:.3e} "
          f"(threshold {report.threshold:.0e})")
    return EXIT_OK if report.passed else EXIT_RUNTIME


def main(argv=None):
    args = _build_parser().parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return EXIT_VALIDATION
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)

    from .errors import ConfigurationError, DataError, FormatError, RfaError

    handlers = {
        "synth": cmd_synth,
        "train": cmd_train,
        "embed": cmd_embed,
        "eval": cmd_eval,
        "gradcheck": cmd_gradcheck,
    }
    try:
        return handlers[args.command](args)
    except (ConfigurationError, DataError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except RfaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
