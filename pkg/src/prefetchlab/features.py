"""Model input construction: address segmentation, context features, token dictionaries.

Address segmentation slices a block address into fixed-width integer segments that
feed the model directly, with no token dictionary. The dictionary-backed input
modes (delta, page & offset) exist for ablation comparisons and report their
storage cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from prefetchlab.trace import AddressConfig, MemoryAccess, block_address, page_of_block


class WindowError(Exception):
    """A history window does not hold the expected number of accesses."""


class CapacityError(Exception):
    """A token dictionary exceeded its configured capacity during growth."""


@dataclass(frozen=True)
class SegmentationConfig:
    """Fixed segment width in bits; the count follows from the block address width."""

    segment_bits: int = 6

    def __post_init__(self):
        if self.segment_bits < 1:
            raise ValueError(f"segment_bits must be >= 1, got {self.segment_bits}")

    def segment_count(self, addr_cfg: AddressConfig) -> int:
        if self.segment_bits > addr_cfg.block_bits:
            raise ValueError(
                f"segment_bits {self.segment_bits} wider than the {addr_cfg.block_bits}-bit block address"
            )
        return math.ceil(addr_cfg.block_bits / self.segment_bits)


@dataclass(frozen=True)
class SegmentedAddress:
    """A block address as most-significant-first integer segments plus their [0,1) scaling."""

    segments: tuple[int, ...]
    normalized: tuple[float, ...]


def _segment_layout(cfg: SegmentationConfig, addr_cfg: AddressConfig):
    """Per-segment (shift, mask) pairs, most significant segment first.

    The top segment holds the leftover high bits when the block width is not a
    multiple of the segment width; all others hold exactly ``segment_bits``.
    """
    s = cfg.segment_bits
    total = addr_cfg.block_bits
    count = cfg.segment_count(addr_cfg)
    top_bits = total - (count - 1) * s
    shifts, masks = [], []
    for j in range(count):
        shifts.append((count - 1 - j) * s)
        masks.append((1 << (top_bits if j == 0 else s)) - 1)
    return shifts, masks


def segment_address(
    block: int, cfg: SegmentationConfig, addr_cfg: AddressConfig
) -> SegmentedAddress:
    """Slice one block address into segments; normalized = segments / 2**segment_bits."""
    if not 0 <= block < addr_cfg.block_space:
        raise ValueError(f"block {block:#x} does not fit in {addr_cfg.block_bits} bits")
    shifts, masks = _segment_layout(cfg, addr_cfg)
    segs = tuple((block >> sh) & m for sh, m in zip(shifts, masks))
    scale = 1.0 / (1 << cfg.segment_bits)
    return SegmentedAddress(segs, tuple(v * scale for v in segs))


def desegment(
    segments: Sequence[int], cfg: SegmentationConfig, addr_cfg: AddressConfig
) -> int:
    """Exact inverse of :func:`segment_address`."""
    shifts, masks = _segment_layout(cfg, addr_cfg)
    if len(segments) != len(shifts):
        raise ValueError(f"expected {len(shifts)} segments, got {len(segments)}")
    block = 0
    for j, (v, sh, m) in enumerate(zip(segments, shifts, masks)):
        v = int(v)
        if not 0 <= v <= m:
            raise ValueError(f"segment {j} value {v} out of range [0, {m}]")
        block |= v << sh
    return block


def segment_blocks(
    blocks: np.ndarray, cfg: SegmentationConfig, addr_cfg: AddressConfig
) -> np.ndarray:
    """Vectorized segmentation of a uint64 block array -> (n, S) int64 matrix."""
    blocks = np.asarray(blocks, dtype=np.uint64)
    shifts, masks = _segment_layout(cfg, addr_cfg)
    out = np.empty((blocks.shape[0], len(shifts)), dtype=np.int64)
    for j, (sh, m) in enumerate(zip(shifts, masks)):
        out[:, j] = ((blocks >> np.uint64(sh)) & np.uint64(m)).astype(np.int64)
    return out


def desegment_blocks(
    segments: np.ndarray, cfg: SegmentationConfig, addr_cfg: AddressConfig
) -> np.ndarray:
    """Vectorized inverse of :func:`segment_blocks` -> uint64 block array."""
    segments = np.asarray(segments)
    shifts, masks = _segment_layout(cfg, addr_cfg)
    if segments.shape[1] != len(shifts):
        raise ValueError(f"expected {len(shifts)} segments, got {segments.shape[1]}")
    for j, m in enumerate(masks):
        col = segments[:, j]
        if col.min() < 0 or col.max() > m:
            raise ValueError(f"segment {j} holds values outside [0, {m}]")
    out = np.zeros(segments.shape[0], dtype=np.uint64)
    for j, sh in enumerate(shifts):
        out |= segments[:, j].astype(np.uint64) << np.uint64(sh)
    return out


def normalize_segments(segments: np.ndarray, cfg: SegmentationConfig) -> np.ndarray:
    return np.asarray(segments, dtype=np.float64) / float(1 << cfg.segment_bits)


def pc_context(pc, hash_bits: int = 16):
    """Fold a 64-bit program counter into [0, 1).

    The PC is split into ceil(64/hash_bits) chunks of ``hash_bits`` bits, low to
    high; the chunks are summed modulo 2**hash_bits and scaled by 2**-hash_bits.
    Accepts an int or a uint64 ndarray.
    """
    if not 1 <= hash_bits <= 32:
        raise ValueError(f"hash_bits must be in [1, 32], got {hash_bits}")
    chunks = math.ceil(64 / hash_bits)
    modulus = 1 << hash_bits
    if isinstance(pc, np.ndarray):
        pc = pc.astype(np.uint64)
        mask = np.uint64(modulus - 1)
        acc = np.zeros_like(pc)
        for k in range(chunks):
            acc += (pc >> np.uint64(k * hash_bits)) & mask
        return (acc % np.uint64(modulus)).astype(np.float64) / modulus
    mask = modulus - 1
    acc = 0
    for k in range(chunks):
        acc += (int(pc) >> (k * hash_bits)) & mask
    return (acc % modulus) / modulus


def page_distance_context(page_n, page_1):
    """Inverse page distance 1/(|page_n - page_1| + 1); equals 1 on the current page."""
    if isinstance(page_n, np.ndarray) or isinstance(page_1, np.ndarray):
        diff = np.abs(np.asarray(page_n, dtype=np.int64) - np.asarray(page_1, dtype=np.int64))
        return 1.0 / (diff.astype(np.float64) + 1.0)
    return 1.0 / (abs(int(page_n) - int(page_1)) + 1)


@dataclass(frozen=True)
class ModelInput:
    """One model sample: history rows (row 0 = most recent access) plus context pairs."""

    history: np.ndarray  # (N, S) float64 in [0, 1)
    context: np.ndarray  # (N, 2) float64: (pc fold, inverse page distance)

    def __post_init__(self):
        if self.history.shape[0] != self.context.shape[0]:
            raise ValueError("history and context row counts differ")
        if not (np.isfinite(self.history).all() and np.isfinite(self.context).all()):
            raise ValueError("model input holds non-finite entries")

    @property
    def history_len(self) -> int:
        return self.history.shape[0]


def build_model_input(
    window: Sequence[MemoryAccess],
    history_len: int,
    seg_cfg: SegmentationConfig,
    addr_cfg: AddressConfig,
    hash_bits: int = 16,
) -> ModelInput:
    """Build one sample from the last ``history_len`` accesses (oldest first in ``window``).

    Internally the window is reversed so that row 0 is the most recent access; the
    page-distance feature is measured against that access's page and is exactly 1.0
    on row 0.
    """
    if len(window) != history_len:
        raise WindowError(f"window holds {len(window)} accesses, expected {history_len}")
    recent_first = list(reversed(window))
    blocks = np.array([block_address(a.vaddr, addr_cfg) for a in recent_first], dtype=np.uint64)
    segs = segment_blocks(blocks, seg_cfg, addr_cfg)
    history = normalize_segments(segs, seg_cfg)
    pcs = np.array([a.pc for a in recent_first], dtype=np.uint64)
    pages = page_of_block(blocks, addr_cfg)
    context = np.stack(
        [pc_context(pcs, hash_bits), page_distance_context(pages, pages[0])], axis=1
    )
    return ModelInput(history, context)


# ---------------------------------------------------------------------------
# Token dictionaries (ablation input modes only)
# ---------------------------------------------------------------------------


class TokenDictionary:
    """Bijective value<->token map with first-seen ordering.

    Growth is only legal before :meth:`freeze` (i.e. while scanning the training
    split); afterwards unknown values map to the reserved out-of-vocabulary token,
    which is one past the last assigned id.
    """

    def __init__(self, capacity: int | None = None):
        self.capacity = capacity
        self._to_token: dict[int, int] = {}
        self._to_value: dict[int, int] = {}
        self._frozen = False

    def __len__(self) -> int:
        return len(self._to_token)

    @property
    def frozen(self) -> bool:
        return self._frozen

    def freeze(self):
        self._frozen = True

    @property
    def oov_token(self) -> int:
        return len(self._to_token)

    def lookup(self, value: int) -> int:
        value = int(value)
        tok = self._to_token.get(value)
        if tok is not None:
            return tok
        if self._frozen:
            return self.oov_token
        if self.capacity is not None and len(self._to_token) >= self.capacity:
            raise CapacityError(
                f"token dictionary capacity {self.capacity} exceeded while growing"
            )
        tok = len(self._to_token)
        self._to_token[value] = tok
        self._to_value[tok] = value
        return tok

    def value_of(self, token: int) -> int:
        return self._to_value[token]

    def to_pairs(self) -> list[list[int]]:
        """(value, token) pairs in token order, for artifact serialization."""
        return [[self._to_value[t], t] for t in range(len(self._to_value))]

    @classmethod
    def from_pairs(cls, pairs, capacity: int | None = None, frozen: bool = True) -> "TokenDictionary":
        d = cls(capacity)
        for value, token in pairs:
            got = d.lookup(int(value))
            if got != int(token):
                raise ValueError(f"non-contiguous token ids in serialized dictionary: {token} != {got}")
        if frozen:
            d.freeze()
        return d


def tokenize(values, dictionary: TokenDictionary) -> np.ndarray:
    """Map values to tokens, growing the dictionary unless it is frozen."""
    return np.array([dictionary.lookup(v) for v in values], dtype=np.int64)


# ---------------------------------------------------------------------------
# Input modes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FeatureConfig:
    """Which per-position input features feed the model.

    mode "as": segmented absolute block address (dictionary-free).
    mode "delta": tokenized jump between consecutive block addresses (needs a dictionary).
    mode "page_offset": tokenized page id plus raw block index (needs a dictionary).
    """

    mode: str = "as"
    segment_bits: int = 6
    hash_bits: int = 16
    dictionary_capacity: int | None = None

    def __post_init__(self):
        if self.mode not in ("as", "delta", "page_offset"):
            raise ValueError(f"unknown input mode {self.mode!r}")

    def input_dim(self, addr_cfg: AddressConfig) -> int:
        if self.mode == "as":
            return SegmentationConfig(self.segment_bits).segment_count(addr_cfg)
        if self.mode == "delta":
            return 1
        return 2

    @property
    def needs_dictionary(self) -> bool:
        return self.mode != "as"
