"""Labeled dataset assembly and the binary on-disk cache.

A sample pairs one history window of per-position input features and context
pairs with the delta bitmap collected from the trigger's look-forward window.
Token dictionaries for the ablation input modes grow only while scanning the
training split, then freeze; later splits map unseen values to the reserved
out-of-vocabulary token.

Cache file layout (little-endian): magic ``PFDS``, u32 version, u32 history
length N, u32 input dim S, u32 bitmap size B, u64 sample count; then per sample
the N*S float32 input row, the N*2 float32 context row, and the label bitmap
packed 8 bits per byte.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from prefetchlab.features import (
    FeatureConfig,
    SegmentationConfig,
    TokenDictionary,
    normalize_segments,
    pc_context,
    segment_blocks,
)
from prefetchlab.labeling import LabelConfig, label_bitmaps
from prefetchlab.trace import AddressConfig, MemoryAccess, TraceSplit, block_addresses, page_of_block

CACHE_MAGIC = b"PFDS"
CACHE_VERSION = 1


@dataclass
class LabeledDataset:
    inputs: np.ndarray    # (n, N, S) float32
    contexts: np.ndarray  # (n, N, 2) float32
    labels: np.ndarray    # (n, B) bool
    triggers: np.ndarray  # (n,) int64 trigger ordinals (in-memory bookkeeping only)

    def __post_init__(self):
        if not (len(self.inputs) == len(self.contexts) == len(self.labels) == len(self.triggers)):
            raise ValueError("dataset arrays disagree on sample count")

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def nonempty_mask(self) -> np.ndarray:
        """Samples with at least one labeled delta (the training subset)."""
        return self.labels.any(axis=1)

    def training_view(self) -> "LabeledDataset":
        """Drop empty-label samples; they stay in the full set for evaluation."""
        keep = self.nonempty_mask
        return LabeledDataset(
            self.inputs[keep], self.contexts[keep], self.labels[keep], self.triggers[keep]
        )

    def save(self, path):
        n, hist, dim = self.inputs.shape
        bits = self.labels.shape[1]
        packed = np.packbits(self.labels, axis=1, bitorder="little")
        with open(path, "wb") as fh:
            fh.write(CACHE_MAGIC)
            fh.write(struct.pack("<IIIIQ", CACHE_VERSION, hist, dim, bits, n))
            for i in range(n):
                fh.write(self.inputs[i].astype("<f4").tobytes())
                fh.write(self.contexts[i].astype("<f4").tobytes())
                fh.write(packed[i].tobytes())

    @classmethod
    def load(cls, path) -> "LabeledDataset":
        with open(path, "rb") as fh:
            raw = fh.read()
        if raw[:4] != CACHE_MAGIC:
            raise ValueError(f"{path}: not a dataset cache file")
        version, hist, dim, bits, n = struct.unpack_from("<IIIIQ", raw, 4)
        if version != CACHE_VERSION:
            raise ValueError(f"{path}: unsupported dataset cache version {version}")
        offset = 4 + struct.calcsize("<IIIIQ")
        in_bytes = hist * dim * 4
        ctx_bytes = hist * 2 * 4
        lab_bytes = (bits + 7) // 8
        stride = in_bytes + ctx_bytes + lab_bytes
        if len(raw) - offset != n * stride:
            raise ValueError(f"{path}: truncated dataset cache")
        inputs = np.empty((n, hist, dim), dtype=np.float32)
        contexts = np.empty((n, hist, 2), dtype=np.float32)
        labels = np.empty((n, bits), dtype=bool)
        for i in range(n):
            base = offset + i * stride
            inputs[i] = np.frombuffer(raw, "<f4", hist * dim, base).reshape(hist, dim)
            contexts[i] = np.frombuffer(raw, "<f4", hist * 2, base + in_bytes).reshape(hist, 2)
            packed = np.frombuffer(raw, np.uint8, lab_bytes, base + in_bytes + ctx_bytes)
            labels[i] = np.unpackbits(packed, bitorder="little")[:bits].astype(bool)
        return cls(inputs, contexts, labels, np.arange(n, dtype=np.int64))


@dataclass
class DatasetBundle:
    """Per-split datasets plus the dictionaries used to build them."""

    train: LabeledDataset
    validation: LabeledDataset
    test: LabeledDataset
    dictionaries: dict[str, TokenDictionary]

    def dictionary_sizes(self) -> dict[str, int]:
        """Storage accounting: entries per token dictionary (empty for AS input)."""
        return {name: len(d) for name, d in self.dictionaries.items()}


def _feature_matrix(
    blocks: np.ndarray,
    pcs: np.ndarray,
    feature_cfg: FeatureConfig,
    addr_cfg: AddressConfig,
    train_stop: int,
) -> tuple[np.ndarray, dict[str, TokenDictionary]]:
    """Per-access feature rows for the whole trace, (m, input_dim) float64.

    Dictionary-backed modes take two passes: grow over the training range
    [0, train_stop), freeze, then tokenize everything.
    """
    mode = feature_cfg.mode
    if mode == "as":
        seg_cfg = SegmentationConfig(feature_cfg.segment_bits)
        return normalize_segments(segment_blocks(blocks, seg_cfg, addr_cfg), seg_cfg), {}
    if mode == "delta":
        jumps = np.zeros(len(blocks), dtype=np.int64)
        jumps[1:] = blocks[1:].astype(np.int64) - blocks[:-1].astype(np.int64)
        dictionary = TokenDictionary(feature_cfg.dictionary_capacity)
        for v in jumps[1:train_stop]:
            dictionary.lookup(int(v))
        dictionary.freeze()
        denom = dictionary.oov_token + 1
        toks = np.array([dictionary.lookup(int(v)) for v in jumps], dtype=np.float64)
        return (toks / denom)[:, None], {"delta": dictionary}
    pages = page_of_block(blocks, addr_cfg)
    dictionary = TokenDictionary(feature_cfg.dictionary_capacity)
    for v in pages[:train_stop]:
        dictionary.lookup(int(v))
    dictionary.freeze()
    denom = dictionary.oov_token + 1
    toks = np.array([dictionary.lookup(int(v)) for v in pages], dtype=np.float64)
    offsets = (blocks & np.uint64((1 << addr_cfg.block_index_bits) - 1)).astype(np.float64)
    feats = np.stack([toks / denom, offsets / (1 << addr_cfg.block_index_bits)], axis=1)
    return feats, {"page": dictionary}


def build_datasets(
    trace: list[MemoryAccess],
    split: TraceSplit,
    feature_cfg: FeatureConfig,
    label_cfg: LabelConfig,
    addr_cfg: AddressConfig,
    history_len: int,
    hash_bits: int | None = None,
) -> DatasetBundle:
    """Assemble train/validation/test datasets from one trace.

    Trigger t's history covers accesses t-N+1..t (row 0 = t, the most recent);
    its label covers the look-forward window after t+skip. History windows may
    reach back across a split boundary (the online prefetcher sees the same
    stream), so the first triggers of each split are not dropped.
    """
    hash_bits = feature_cfg.hash_bits if hash_bits is None else hash_bits
    blocks = block_addresses(trace, addr_cfg)
    pcs = np.fromiter((a.pc for a in trace), dtype=np.uint64, count=len(trace))
    feats, dictionaries = _feature_matrix(
        blocks, pcs, feature_cfg, addr_cfg, train_stop=split.train.stop
    )
    pc_feat = pc_context(pcs, hash_bits)
    pages = page_of_block(blocks, addr_cfg).astype(np.int64)

    # delta features use the jump into each access, so the first jump needs one
    # extra access of history
    first_trigger = history_len - 1 + (1 if feature_cfg.mode == "delta" else 0)

    def build_range(r: range) -> LabeledDataset:
        triggers = np.arange(max(r.start, first_trigger), r.stop, dtype=np.int64)
        if triggers.size == 0:
            empty = LabeledDataset(
                np.empty((0, history_len, feats.shape[1]), np.float32),
                np.empty((0, history_len, 2), np.float32),
                np.empty((0, label_cfg.bitmap_size), bool),
                np.empty((0,), np.int64),
            )
            return empty
        window = triggers[:, None] - np.arange(history_len)[None, :]  # recent first
        inputs = feats[window].astype(np.float32)
        ctx_pd = 1.0 / (np.abs(pages[window] - pages[triggers][:, None]) + 1.0)
        contexts = np.stack(
            [pc_feat[window], ctx_pd], axis=2
        ).astype(np.float32)
        labels, _ = label_bitmaps(blocks, triggers, label_cfg)
        return LabeledDataset(inputs, contexts, labels, triggers)

    return DatasetBundle(
        train=build_range(split.train),
        validation=build_range(split.validation),
        test=build_range(split.test),
        dictionaries=dictionaries,
    )


def mean_cycles_per_access(trace: list[MemoryAccess], r: range | None = None) -> float:
    """Average cycle spacing over a trace range (the latency->skip unit bridge)."""
    lo, hi = (0, len(trace)) if r is None else (r.start, r.stop)
    if hi - lo < 2:
        return 1.0
    span = trace[hi - 1].cycle - trace[lo].cycle
    return max(span / (hi - lo - 1), 1e-12)
