"""Memory access traces: the record model, CSV file IO, splitting, and synthetic generators.

A trace is a list of :class:`MemoryAccess` records ordered by ordinal. The on-disk
format is one CSV record per line, ``ordinal,cycle,pc_hex,vaddr_hex``, with ``#``
comment lines and optional gzip compression (detected by magic bytes on read,
selected by a ``.gz`` suffix on write).
"""

from __future__ import annotations

import gzip
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

GZIP_MAGIC = b"\x1f\x8b"


class TraceError(Exception):
    """Base class for trace problems."""


class TraceParseError(TraceError):
    """A trace file line could not be parsed."""


class EmptyTraceError(TraceError):
    """The trace file contains no records."""


class SplitError(Exception):
    """The trace cannot be split as requested."""


class PatternError(Exception):
    """Unknown synthetic pattern name or bad pattern parameters."""


@dataclass(frozen=True)
class MemoryAccess:
    """One trace record.

    ordinal: record index, strictly increasing from 0 within a trace.
    cycle:   simulated time in cycles, non-decreasing with ordinal.
    pc:      64-bit instruction address.
    vaddr:   64-bit virtual byte address.
    """

    ordinal: int
    cycle: int
    pc: int
    vaddr: int


@dataclass(frozen=True)
class AddressConfig:
    """Widths of the address fields.

    The block address is the byte address with the intra-block offset removed:
    ``page_bits`` high bits of page address plus ``block_index_bits`` bits locating
    the block within its page.
    """

    addr_bits: int = 64
    page_size_bits: int = 12
    block_offset_bits: int = 6

    def __post_init__(self):
        if not (self.block_offset_bits < self.page_size_bits < self.addr_bits):
            raise ValueError(
                "require block_offset_bits < page_size_bits < addr_bits, got "
                f"{self.block_offset_bits}/{self.page_size_bits}/{self.addr_bits}"
            )

    @property
    def block_index_bits(self) -> int:
        return self.page_size_bits - self.block_offset_bits

    @property
    def page_bits(self) -> int:
        return self.addr_bits - self.page_size_bits

    @property
    def block_bits(self) -> int:
        """Width of a block address (page bits + block index bits)."""
        return self.addr_bits - self.block_offset_bits

    @property
    def block_space(self) -> int:
        """Number of distinct block addresses."""
        return 1 << self.block_bits


@dataclass(frozen=True)
class TraceSplit:
    """Contiguous, disjoint access ranges covering [0, n)."""

    train: range
    validation: range
    test: range

    def as_dict(self):
        return {
            "train": [self.train.start, self.train.stop],
            "validation": [self.validation.start, self.validation.stop],
            "test": [self.test.start, self.test.stop],
        }


def block_address(vaddr: int, cfg: AddressConfig) -> int:
    """Byte address -> block address (offset bits dropped, masked to block width)."""
    return (vaddr >> cfg.block_offset_bits) & (cfg.block_space - 1)


def block_addresses(trace: Sequence[MemoryAccess], cfg: AddressConfig) -> np.ndarray:
    """Vectorized block addresses of a whole trace, as uint64."""
    vaddrs = np.fromiter((a.vaddr for a in trace), dtype=np.uint64, count=len(trace))
    mask = np.uint64(cfg.block_space - 1)
    return (vaddrs >> np.uint64(cfg.block_offset_bits)) & mask


def page_of_block(block, cfg: AddressConfig):
    """Page address of a block address (int or ndarray)."""
    if isinstance(block, np.ndarray):
        return block >> np.uint64(cfg.block_index_bits)
    return block >> cfg.block_index_bits


def _open_maybe_gzip_read(path):
    raw = open(path, "rb")
    head = raw.read(2)
    raw.seek(0)
    if head == GZIP_MAGIC:
        return io.TextIOWrapper(gzip.GzipFile(fileobj=raw, mode="rb"), encoding="ascii")
    return io.TextIOWrapper(raw, encoding="ascii")


def read_trace(path, fmt: str = "csv") -> list[MemoryAccess]:
    """Read a trace file.

    Formats: ``csv`` is ``ordinal,cycle,pc_hex,vaddr_hex``; ``pc_vaddr`` is the
    two-field form ``pc_hex,vaddr_hex`` where cycle := ordinal. Ordinals are
    reassigned 0..n-1 in file order. Gzip input is detected by magic bytes.
    """
    if fmt not in ("csv", "pc_vaddr"):
        raise TraceParseError(f"unknown trace format {fmt!r}")
    records = []
    prev_cycle = None
    with _open_maybe_gzip_read(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            ordinal = len(records)
            try:
                if fmt == "csv":
                    if len(parts) != 4:
                        raise ValueError(f"expected 4 fields, got {len(parts)}")
                    cycle = int(parts[1])
                    pc = int(parts[2], 16)
                    vaddr = int(parts[3], 16)
                else:
                    if len(parts) != 2:
                        raise ValueError(f"expected 2 fields, got {len(parts)}")
                    cycle = ordinal
                    pc = int(parts[0], 16)
                    vaddr = int(parts[1], 16)
            except ValueError as exc:
                raise TraceParseError(f"{path}: parse error at line {lineno}: {exc}") from None
            if prev_cycle is not None and cycle < prev_cycle:
                raise TraceParseError(
                    f"{path}: parse error at line {lineno}: cycle {cycle} decreases"
                )
            prev_cycle = cycle
            records.append(MemoryAccess(ordinal, cycle, pc, vaddr))
    if not records:
        raise EmptyTraceError(f"{path}: trace file holds no records")
    return records


def write_trace(path, trace: Iterable[MemoryAccess]):
    """Write a trace as CSV; a ``.gz`` suffix selects gzip.

    Gzip output pins mtime to 0 and omits the filename header field, so the
    bytes depend only on the records (rerun determinism)."""
    path = str(path)
    if path.endswith(".gz"):
        raw = open(path, "wb")
        fh = io.TextIOWrapper(
            gzip.GzipFile(filename="", fileobj=raw, mode="wb", mtime=0),
            encoding="ascii", newline="\n",
        )
    else:
        raw = None
        fh = open(path, "w", encoding="ascii", newline="\n")
    try:
        fh.write("# ordinal,cycle,pc,vaddr\n")
        for acc in trace:
            fh.write(f"{acc.ordinal},{acc.cycle},{acc.pc:#x},{acc.vaddr:#x}\n")
    finally:
        fh.close()
        if raw is not None:
            raw.close()


def split_trace(trace, ratios: tuple[float, float, float]) -> TraceSplit:
    """Split a trace (or a record count) into contiguous train/validation/test ranges.

    Boundary indices are floor(cumulative fraction * n); a 1e-9 nudge absorbs
    floating point error, matching the tolerance allowed on the ratio sum.
    """
    n = trace if isinstance(trace, int) else len(trace)
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise SplitError(f"ratios must be three positive fractions, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise SplitError(f"ratios must sum to 1 within 1e-9, got sum {sum(ratios)!r}")
    if n < 3:
        raise SplitError(f"trace with {n} records is too short to split")
    b1 = int(math.floor(ratios[0] * n + 1e-9))
    b2 = int(math.floor((ratios[0] + ratios[1]) * n + 1e-9))
    return TraceSplit(range(0, b1), range(b1, b2), range(b2, n))


# ---------------------------------------------------------------------------
# Synthetic trace generation
# ---------------------------------------------------------------------------

DEFAULT_PC = 0x400000


def _emit(blocks, pcs, cycle_step, cfg: AddressConfig) -> list[MemoryAccess]:
    mask = cfg.block_space - 1
    out = []
    for i, (b, pc) in enumerate(zip(blocks, pcs)):
        out.append(MemoryAccess(i, i * cycle_step, pc, (b & mask) << cfg.block_offset_bits))
    return out


def _gen_stride(spec, length, rng, cfg):
    k = int(spec.get("stride", 1))
    start = int(spec.get("start_block", 1 << 20))
    pc = int(spec.get("pc", DEFAULT_PC))
    blocks = [start + i * k for i in range(length)]
    return blocks, [pc] * length


def _gen_pointer_walk(spec, length, rng, cfg):
    # Random walk confined to one page: only the block index moves.
    page = int(spec.get("page", 1 << 24))
    pc = int(spec.get("pc", DEFAULT_PC))
    steps = spec.get("steps", [-3, -2, -1, 1, 2, 3])
    page_blocks = 1 << cfg.block_index_bits
    idx = int(rng.integers(0, page_blocks))
    blocks = []
    base = page << cfg.block_index_bits
    for _ in range(length):
        blocks.append(base + idx)
        idx = (idx + int(steps[int(rng.integers(0, len(steps)))])) % page_blocks
    return blocks, [pc] * length


def _gen_page_skip(spec, length, rng, cfg):
    # Repeating delta cycle; the default jump of 91 blocks crosses page boundaries.
    deltas = spec.get("deltas", [2, 3, 91])
    if not deltas:
        raise PatternError("page_skip needs a non-empty delta cycle")
    start = int(spec.get("start_block", 1 << 20))
    pc = int(spec.get("pc", DEFAULT_PC))
    blocks = [start]
    for i in range(length - 1):
        blocks.append(blocks[-1] + int(deltas[i % len(deltas)]))
    return blocks, [pc] * length


def _gen_interleaved(spec, length, rng, cfg):
    # Round-robin over independent per-PC strided streams.
    streams = spec.get(
        "streams",
        [
            {"pc": DEFAULT_PC, "start_block": 1 << 20, "stride": 1},
            {"pc": DEFAULT_PC + 0x40, "start_block": 1 << 22, "stride": 3},
        ],
    )
    if not streams:
        raise PatternError("interleaved needs at least one stream")
    pos = [int(s.get("start_block", 1 << 20)) for s in streams]
    blocks, pcs = [], []
    for i in range(length):
        j = i % len(streams)
        blocks.append(pos[j])
        pcs.append(int(streams[j].get("pc", DEFAULT_PC)))
        pos[j] += int(streams[j].get("stride", 1))
    return blocks, pcs


def _gen_random(spec, length, rng, cfg):
    start = int(spec.get("region_start_block", 1 << 20))
    span = int(spec.get("region_blocks", 1 << 16))
    pc = int(spec.get("pc", DEFAULT_PC))
    blocks = (start + rng.integers(0, span, size=length)).tolist()
    return blocks, [pc] * length


def _gen_region_walks(spec, length, rng, cfg):
    """Random page hops into named regions, each followed by that region's intra-page walk.

    Hop deltas are effectively unique over the trace (landing pages are drawn at
    random inside wide regions), so a delta vocabulary frozen on any prefix meets
    out-of-vocabulary deltas later on. The walk that follows a hop is determined by
    the landing region, which is visible in the high bits of the address.
    """
    regions = spec.get(
        "regions",
        [
            {"start_page": 0x10000, "pages": 4096, "walk": [4] * 6},
            {"start_page": 0x30000, "pages": 4096, "walk": [9] * 6},
        ],
    )
    if not regions:
        raise PatternError("region_walks needs at least one region")
    pc = int(spec.get("pc", DEFAULT_PC))
    blocks = []
    while len(blocks) < length:
        r = regions[int(rng.integers(0, len(regions)))]
        page = int(r["start_page"]) + int(rng.integers(0, int(r["pages"])))
        b = page << cfg.block_index_bits
        blocks.append(b)
        for d in r["walk"]:
            if len(blocks) >= length:
                break
            b += int(d)
            blocks.append(b)
    return blocks[:length], [pc] * length


_GENERATORS = {
    "stride": _gen_stride,
    "pointer_walk": _gen_pointer_walk,
    "page_skip": _gen_page_skip,
    "interleaved": _gen_interleaved,
    "random": _gen_random,
    "region_walks": _gen_region_walks,
}


def generate_trace(
    spec: dict, length: int, seed: int, addr_cfg: AddressConfig | None = None
) -> list[MemoryAccess]:
    """Generate a deterministic synthetic trace.

    ``spec`` is a mapping with a ``name`` key naming the pattern family plus
    family-specific parameters; ``cycle_step`` (default 1) sets cycles per access.
    The PRNG contract is numpy's seeded ``default_rng`` (PCG64), so identical
    spec/seed/length produce byte-identical traces.
    """
    if length < 1:
        raise PatternError(f"length must be >= 1, got {length}")
    cfg = addr_cfg or AddressConfig()
    name = spec.get("name")
    gen = _GENERATORS.get(name)
    if gen is None:
        raise PatternError(f"unknown pattern name {name!r} (known: {sorted(_GENERATORS)})")
    rng = np.random.default_rng(seed)
    blocks, pcs = gen(spec, length, rng, cfg)
    return _emit(blocks, pcs, int(spec.get("cycle_step", 1)), cfg)
