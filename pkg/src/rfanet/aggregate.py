"""Sequence-level embeddings from trained hidden states.

A subsequence of L frames maps to the concatenation of its L hidden states
(dimension H*L); a full sequence maps to the element-wise mean over K
randomly sampled length-L windows. Per-depth embeddings expose the t-th
node's output for the fusion-depth analysis.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError, FormatError
from .rnn import LstmState, lstm_step

EMBEDDING_MAGIC = b"RFAEMB1"


@dataclass
class AggregationConfig:
    subseq_len: int = 10
    num_subsequences: int = 10  # K
    seed: int = 0

    def validate(self):
        if self.subseq_len < 1 or self.num_subsequences < 1:
            raise DataError("subseq_len and num_subsequences must be >= 1")


@dataclass
class SequenceEmbedding:
    values: np.ndarray
    source_id: int = -1
    camera: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(self.values)):
            raise DataError("embedding contains non-finite entries")


def run_hidden_states(model, xs):
    """(L, H) hidden states for a subsequence, dropout disabled."""
    xs = np.asarray(xs, dtype=np.float64)
    state = LstmState(np.zeros(model.hidden_dim), np.zeros(model.hidden_dim))
    hs = np.empty((xs.shape[0], model.hidden_dim))
    for t in range(xs.shape[0]):
        state, _ = lstm_step(model, xs[t], state)
        hs[t] = state.h
    return hs


def embed_subsequence(model, xs):
    """Concatenate h_1..h_L in time order; dimension H*L."""
    return run_hidden_states(model, xs).ravel()


def sample_starts(num_frames, subseq_len, num_subsequences, seed):
    """K start indices drawn uniformly from [0, T-L] with replacement."""
    if num_frames < subseq_len:
        raise DataError(f"sequence of {num_frames} frames is shorter than L={subseq_len}")
    rng = np.random.default_rng(seed)
    return rng.integers(0, num_frames - subseq_len + 1, size=num_subsequences)


def embed_sequence(model, frames, cfg, source_id=-1, camera=0):
    """Mean of K seeded-window subsequence embeddings; no post-normalization."""
    cfg.validate()
    frames = np.asarray(frames, dtype=np.float64)
    starts = sample_starts(frames.shape[0], cfg.subseq_len, cfg.num_subsequences, cfg.seed)
    acc = np.zeros(model.hidden_dim * cfg.subseq_len)
    for s in starts:
        acc += embed_subsequence(model, frames[s : s + cfg.subseq_len])
    return SequenceEmbedding(acc / len(starts), source_id, camera)


def embed_at_depth(model, frames, depth, cfg):
    """Mean of h_depth over the same K sampled windows; depth in 1..L."""
    cfg.validate()
    if not 1 <= depth <= cfg.subseq_len:
        raise DataError(f"depth {depth} out of range 1..{cfg.subseq_len}")
    frames = np.asarray(frames, dtype=np.float64)
    starts = sample_starts(frames.shape[0], cfg.subseq_len, cfg.num_subsequences, cfg.seed)
    acc = np.zeros(model.hidden_dim)
    for s in starts:
        acc += run_hidden_states(model, frames[s : s + cfg.subseq_len])[depth - 1]
    return acc / len(starts)


# ---------------------------------------------------------------------------
# embedding file
# ---------------------------------------------------------------------------

def write_embeddings(path, embeddings):
    if not embeddings:
        raise DataError("no embeddings to write")
    dim = embeddings[0].values.size
    with open(path, "wb") as fh:
        fh.write(EMBEDDING_MAGIC)
        fh.write(struct.pack("<II", dim, len(embeddings)))
        for emb in embeddings:
            if emb.values.size != dim:
                raise DataError("embeddings have inconsistent dimensions")
            fh.write(struct.pack("<IB", emb.source_id, emb.camera))
            fh.write(np.ascontiguousarray(emb.values, dtype="<f4").tobytes())


def read_embeddings(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:7] != EMBEDDING_MAGIC:
        raise FormatError("bad embedding magic", 0)
    dim, count = struct.unpack_from("<II", data, 7)
    pos = 15
    out = []
    for _ in range(count):
        if len(data) - pos < 5 + dim * 4:
            raise FormatError("truncated embedding record", len(data))
        source_id, camera = struct.unpack_from("<IB", data, pos)
        pos += 5
        values = np.frombuffer(data, "<f4", dim, pos).astype(np.float64)
        pos += dim * 4
        out.append(SequenceEmbedding(values, source_id, camera))
    return out
