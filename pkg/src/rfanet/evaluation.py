"""Experiment harness: dataset manifests, identity splits, CMC curves,
noise-robustness / fusion-depth / subsequence-count sweeps, and a synthetic
dataset generator for desk-scale verification.

Camera a is the probe view, camera b the gallery view, throughout.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .aggregate import AggregationConfig, SequenceEmbedding, embed_at_depth, embed_sequence
from .errors import ConfigurationError, DataError
from .features import RawImage, encode_ppm, read_image, sequence_features
from .matching import CosineScorer, RankSvmScorer, rank_gallery, train_ranksvm
from .rnn import LabeledSequence, train


# ---------------------------------------------------------------------------
# dataset containers and manifest
# ---------------------------------------------------------------------------

@dataclass
class PersonSequences:
    person_id: int
    frames_a: list  # ordered RawImage list, camera a
    frames_b: list  # ordered RawImage list, camera b


@dataclass
class Dataset:
    persons: list
    noise_pool: list = field(default_factory=list)

    def ids(self):
        return [p.person_id for p in self.persons]


def save_dataset(dataset, out_dir):
    """Materialize images as PPM files plus a JSON manifest; returns the
    manifest path. Paths in the manifest are relative to it."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"persons": [], "noise_pool": []}
    for person in dataset.persons:
        entry = {"id": person.person_id, "camera_a": [], "camera_b": []}
        for cam, frames in (("a", person.frames_a), ("b", person.frames_b)):
            for k, img in enumerate(frames):
                rel = f"p{person.person_id:04d}/cam_{cam}/frame_{k:04d}.ppm"
                path = out / rel
                path.parent.mkdir(parents=True, exist_ok=True)
                path.write_bytes(encode_ppm(img))
                entry[f"camera_{cam}"].append(rel)
        manifest["persons"].append(entry)
    for k, img in enumerate(dataset.noise_pool):
        rel = f"noise/frame_{k:04d}.ppm"
        path = out / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_ppm(img))
        manifest["noise_pool"].append(rel)
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest_path


def load_dataset(manifest_path):
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read manifest {manifest_path}: {exc}") from exc
    if "persons" not in manifest or not manifest["persons"]:
        raise DataError(f"manifest {manifest_path} lists no persons")
    root = manifest_path.parent
    persons = []
    seen = set()
    for entry in manifest["persons"]:
        pid = entry["id"]
        if pid in seen:
            raise DataError(f"duplicate person id {pid} in manifest")
        seen.add(pid)
        frames = {}
        for cam in ("a", "b"):
            paths = entry.get(f"camera_{cam}", [])
            if not paths:
                raise DataError(f"person {pid} has no camera_{cam} frames")
            frames[cam] = [read_image(root / rel) for rel in paths]
        persons.append(PersonSequences(pid, frames["a"], frames["b"]))
    pool = [read_image(root / rel) for rel in manifest.get("noise_pool", [])]
    return Dataset(persons, pool)


# ---------------------------------------------------------------------------
# splits and CMC
# ---------------------------------------------------------------------------

@dataclass
class SplitSpec:
    trial_seed: int
    train_ids: tuple
    test_ids: tuple


def make_splits(person_ids, num_trials, master_seed):
    """num_trials independent half/half identity splits (train size N//2)."""
    ids = sorted(person_ids)
    if len(ids) < 2:
        raise DataError("need at least 2 persons to split")
    rng = np.random.default_rng(master_seed)
    splits = []
    for _ in range(num_trials):
        trial_seed = int(rng.integers(2**63))
        perm = np.random.default_rng(trial_seed).permutation(ids)
        k = len(ids) // 2
        splits.append(
            SplitSpec(trial_seed, tuple(sorted(perm[:k])), tuple(sorted(perm[k:])))
        )
    return splits


@dataclass
class CmcCurve:
    rates: np.ndarray

    def __post_init__(self):
        self.rates = np.asarray(self.rates, dtype=np.float64)

    def rate(self, k):
        return float(self.rates[k - 1])


def compute_cmc(probe_embeddings, gallery_embeddings, scorer):
    """rates[k-1] = fraction of probes whose true match ranks within top k."""
    gallery_ids = [g.source_id for g in gallery_embeddings]
    if len(set(gallery_ids)) != len(gallery_ids):
        raise DataError("gallery contains duplicate person ids")
    n = len(gallery_embeddings)
    counts = np.zeros(n)
    for probe in probe_embeddings:
        if gallery_ids.count(probe.source_id) != 1:
            raise DataError(f"probe id {probe.source_id} not unique in gallery")
        order = rank_gallery(probe, gallery_embeddings, scorer)
        ranked_ids = [gallery_ids[i] for i in order]
        counts[ranked_ids.index(probe.source_id)] += 1
    return CmcCurve(np.cumsum(counts) / len(probe_embeddings))


def mean_cmc(curves):
    return CmcCurve(np.mean([c.rates for c in curves], axis=0))


# ---------------------------------------------------------------------------
# noise injection and synthetic data
# ---------------------------------------------------------------------------

def inject_noise(frames, fraction, pool, seed):
    """Replace ceil(fraction * T) frames (distinct seeded positions, chosen
    without replacement) by uniformly drawn pool frames; order preserved."""
    if not 0.0 <= fraction <= 1.0:
        raise DataError("noise fraction must be in [0, 1]")
    if not pool:
        raise DataError("noise pool is empty")
    out = list(frames)
    n = math.ceil(fraction * len(out))
    if n == 0:
        return out
    rng = np.random.default_rng(seed)
    positions = rng.choice(len(out), size=n, replace=False)
    for pos in positions:
        out[pos] = pool[int(rng.integers(len(pool)))]
    return out


def _block_prototype(rng, width, height, blocks_v=4, blocks_h=2):
    """Piecewise-constant random color image, (height, width, 3) float64."""
    bv = min(blocks_v, height)
    bh = min(blocks_h, width)
    colors = rng.integers(0, 256, size=(bv, bh, 3)).astype(np.float64)
    rows = np.minimum((np.arange(height) * bv) // height, bv - 1)
    cols = np.minimum((np.arange(width) * bh) // width, bh - 1)
    return colors[rows[:, None], cols[None, :]]


def _jittered(rng, proto, jitter, width, height):
    noise = rng.normal(0.0, jitter * 255.0, size=proto.shape) if jitter > 0 else 0.0
    return RawImage(width, height, np.clip(np.rint(proto + noise), 0, 255).astype(np.uint8))


def generate_synthetic(
    num_persons,
    frames_per_camera,
    width=16,
    height=32,
    appearance_seed=0,
    camera_gain=(1.0, 1.0, 1.0),
    camera_offset=(0.0, 0.0, 0.0),
    jitter=0.02,
    noise_pool_size=0,
):
    """Deterministic two-camera dataset of piecewise-constant person
    prototypes. Camera b applies a fixed per-channel gain/offset (on the
    [0, 1] scale) to simulate cross-view color inconsistency; every frame
    gets seeded per-pixel Gaussian jitter, clamped to [0, 255]."""
    if num_persons < 1 or frames_per_camera < 1:
        raise DataError("num_persons and frames_per_camera must be >= 1")
    rng = np.random.default_rng(appearance_seed)
    gain = np.asarray(camera_gain, dtype=np.float64)
    offset = np.asarray(camera_offset, dtype=np.float64)
    persons = []
    for pid in range(num_persons):
        proto = _block_prototype(rng, width, height)
        proto_b = np.clip((proto / 255.0) * gain + offset, 0.0, 1.0) * 255.0
        frames_a = [_jittered(rng, proto, jitter, width, height) for _ in range(frames_per_camera)]
        frames_b = [_jittered(rng, proto_b, jitter, width, height) for _ in range(frames_per_camera)]
        persons.append(PersonSequences(pid, frames_a, frames_b))
    pool = []
    for _ in range(noise_pool_size):
        proto = _block_prototype(rng, width, height)
        pool.append(_jittered(rng, proto, jitter, width, height))
    return Dataset(persons, pool)


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

@dataclass
class ExperimentSpec:
    kind: str = "standard"  # standard | noise | depth | subseq
    trials: int = 10
    master_seed: int = 0
    noise_levels: tuple = (0.0, 0.1, 0.3, 0.5)
    depths: tuple | None = None  # None -> (1, L)
    subseq_counts: tuple = (1, 5, 10, 15)

    def validate(self):
        if self.kind not in ("standard", "noise", "depth", "subseq"):
            raise ConfigurationError(f"unknown experiment kind {self.kind!r}")
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")


@dataclass
class ExperimentReport:
    experiment: str
    levels: list
    curves: dict       # level -> list of per-trial CmcCurve
    mean_curves: dict  # level -> CmcCurve
    config: dict
    timings: dict


def _derive_seed(*parts):
    return int(np.random.SeedSequence([int(p) & (2**31 - 1) for p in parts]).generate_state(1)[0])


def _embed_test_set(model, feats, test_ids, agg_cfg, depth=None):
    probes, gallery = [], []
    for pid in test_ids:
        for cam, bucket in ((0, probes), (1, gallery)):
            cfg = replace(agg_cfg, seed=_derive_seed(agg_cfg.seed, pid, cam))
            if depth is None:
                bucket.append(embed_sequence(model, feats[(pid, cam)], cfg, pid, cam))
            else:
                vec = embed_at_depth(model, feats[(pid, cam)], depth, cfg)
                bucket.append(SequenceEmbedding(vec, pid, cam))
    return probes, gallery


def _make_scorer(run_config, model, feats, train_ids, agg_cfg, depth=None):
    if run_config.scorer == "cosine":
        return CosineScorer()
    probes, gallery = _embed_test_set(model, feats, train_ids, agg_cfg, depth)
    svm = train_ranksvm(
        probes, gallery,
        C=run_config.ranksvm_C,
        iters=run_config.ranksvm_iters,
        seed=run_config.ranksvm_seed,
    )
    return RankSvmScorer(svm)


def run_experiment(dataset, run_config, experiment=None):
    """Train per trial on the train split and evaluate CMC on the test split,
    once per factor level of the selected sweep. Returns an ExperimentReport
    whose mean curves are arithmetic means over trials."""
    rc = run_config
    ex = experiment if experiment is not None else rc.experiment
    ex.validate()
    rc.validate()
    grid = rc.grid
    L = rc.train.subseq_len
    agg_base = AggregationConfig(L, rc.agg.num_subsequences, rc.agg.seed)

    for person in dataset.persons:
        for cam, frames in (("a", person.frames_a), ("b", person.frames_b)):
            if len(frames) < L:
                raise DataError(
                    f"person {person.person_id} camera {cam} has {len(frames)} frames; "
                    f"need at least {L}"
                )

    t0 = time.perf_counter()
    feats = {}
    images = {}
    for person in dataset.persons:
        for cam, frames in ((0, person.frames_a), (1, person.frames_b)):
            images[(person.person_id, cam)] = frames
            feats[(person.person_id, cam)] = sequence_features(
                frames, grid, rc.image_w, rc.image_h
            )
    timings = {"feature_extraction": time.perf_counter() - t0}

    if ex.kind == "standard":
        levels = ["standard"]
    elif ex.kind == "noise":
        levels = list(ex.noise_levels)
        if not dataset.noise_pool:
            raise DataError("noise sweep requires a dataset with a noise pool")
    elif ex.kind == "depth":
        levels = list(ex.depths) if ex.depths is not None else [1, L]
    else:
        levels = list(ex.subseq_counts)

    splits = make_splits(dataset.ids(), ex.trials, ex.master_seed)
    curves = {lv: [] for lv in levels}
    t_train = t_eval = 0.0
    for trial, split in enumerate(splits):
        train_ids = list(split.train_ids)
        test_ids = list(split.test_ids)
        seqs = [
            LabeledSequence(idx, feats[(pid, cam)], f"trial{trial}/p{pid}/cam{cam}")
            for idx, pid in enumerate(train_ids)
            for cam in (0, 1)
        ]
        t1 = time.perf_counter()
        tcfg = replace(rc.train, seed=_derive_seed(rc.train.seed, trial))
        model, _ = train(seqs, tcfg)
        t_train += time.perf_counter() - t1

        t1 = time.perf_counter()
        for li, level in enumerate(levels):
            agg_cfg = agg_base
            depth = None
            level_feats = feats
            if ex.kind == "noise":
                level_feats = dict(feats)
                for pid in test_ids:
                    for cam in (0, 1):
                        noisy = inject_noise(
                            images[(pid, cam)],
                            level,
                            dataset.noise_pool,
                            _derive_seed(ex.master_seed, trial, li, pid, cam),
                        )
                        level_feats[(pid, cam)] = sequence_features(
                            noisy, grid, rc.image_w, rc.image_h
                        )
            elif ex.kind == "depth":
                depth = level
            elif ex.kind == "subseq":
                agg_cfg = replace(agg_base, num_subsequences=level)

            scorer = _make_scorer(rc, model, feats, train_ids, agg_cfg, depth)
            probes, gallery = _embed_test_set(model, level_feats, test_ids, agg_cfg, depth)
            curves[level].append(compute_cmc(probes, gallery, scorer))
        t_eval += time.perf_counter() - t1
    timings["training"] = t_train
    timings["evaluation"] = t_eval

    return ExperimentReport(
        experiment=ex.kind,
        levels=levels,
        curves=curves,
        mean_curves={lv: mean_cmc(curves[lv]) for lv in levels},
        config=rc.to_dict(),
        timings=timings,
    )


# ---------------------------------------------------------------------------
# report output
# ---------------------------------------------------------------------------

def report_csv_rows(report):
    """Flat rows (experiment, level, trial, rank, rate); trial 'mean' rows
    carry the trial-averaged curve. Timings are deliberately excluded."""
    rows = [("experiment", "level", "trial", "rank", "rate")]
    for level in report.levels:
        for trial, curve in enumerate(report.curves[level]):
            for k, rate in enumerate(curve.rates, start=1):
                rows.append((report.experiment, str(level), str(trial), str(k), f"{rate:.12f}"))
        for k, rate in enumerate(report.mean_curves[level].rates, start=1):
            rows.append((report.experiment, str(level), "mean", str(k), f"{rate:.12f}"))
    return rows


def write_report_csv(path, report):
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(report_csv_rows(report))


def report_text(report, include_timings=True):
    lines = [f"experiment: {report.experiment}", ""]
    for level in report.levels:
        lines.append(f"level: {level}")
        mean = report.mean_curves[level]
        header = "  rank:  " + "  ".join(f"{k:>6d}" for k in range(1, len(mean.rates) + 1))
        lines.append(header)
        for trial, curve in enumerate(report.curves[level]):
            lines.append(
                f"  t{trial:>4d}:  " + "  ".join(f"{r:6.4f}" for r in curve.rates)
            )
        lines.append("  mean:   " + "  ".join(f"{r:6.4f}" for r in mean.rates))
        lines.append("")
    lines.append("config:")
    lines.append(json.dumps(report.config, indent=2, sort_keys=True))
    if include_timings:
        lines.append("")
        lines.append("timings (seconds):")
        for name, value in report.timings.items():
            lines.append(f"  {name}: {value:.3f}")
    return "\n".join(lines) + "\n"


def write_report(out_dir, report):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(report_text(report))
    write_report_csv(out / "report.csv", report)
    return out / "report.txt", out / "report.csv"
