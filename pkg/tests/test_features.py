import numpy as np
import pytest

from prefetchlab.features import (
    CapacityError,
    FeatureConfig,
    SegmentationConfig,
    TokenDictionary,
    WindowError,
    build_model_input,
    desegment,
    desegment_blocks,
    normalize_segments,
    page_distance_context,
    pc_context,
    segment_address,
    segment_blocks,
    tokenize,
)
from prefetchlab.trace import AddressConfig


def slice_oracle(block, segment_bits, total_bits):
    """Independent bit-slicing by string chopping instead of shift/mask."""
    bits = bin(block)[2:].zfill(total_bits)
    count = -(-total_bits // segment_bits)
    top = total_bits - (count - 1) * segment_bits
    pieces = [bits[:top]] + [bits[top + i * segment_bits: top + (i + 1) * segment_bits]
                             for i in range(count - 1)]
    return [int(p, 2) for p in pieces]


class TestSegmentation:
    def test_zero_block(self, addr_cfg):
        seg = segment_address(0, SegmentationConfig(6), addr_cfg)
        assert seg.segments == (0,) * 10

    def test_example_0x41(self, addr_cfg):
        seg = segment_address(0x41, SegmentationConfig(6), addr_cfg)
        assert len(seg.segments) == 10
        assert seg.segments == (0, 0, 0, 0, 0, 0, 0, 0, 1, 1)
        assert seg.normalized[-1] == 1 / 64

    def test_block_index_column_count(self, addr_cfg):
        # s equal to the block index width: segment count is ceil(p/s) + 1
        cfg = SegmentationConfig(addr_cfg.block_index_bits)
        expected = -(-addr_cfg.page_bits // addr_cfg.block_index_bits) + 1
        assert cfg.segment_count(addr_cfg) == 10 == expected

    def test_matches_slicing_oracle(self, addr_cfg):
        rng = np.random.default_rng(0)
        for s in (1, 4, 6, 8, 12, 16):
            cfg = SegmentationConfig(s)
            for block in rng.integers(0, 2**58, size=50, dtype=np.uint64):
                got = segment_address(int(block), cfg, addr_cfg)
                assert list(got.segments) == slice_oracle(int(block), s, 58)

    def test_desegment_zero_and_all_ones(self, addr_cfg):
        cfg = SegmentationConfig(6)
        for block in (0, 0x3FF_FFFF_FFFF_FFFF):
            assert desegment(segment_address(block, cfg, addr_cfg).segments, cfg, addr_cfg) == block

    def test_randomized_roundtrip_all_widths(self, addr_cfg):
        rng = np.random.default_rng(1)
        blocks = rng.integers(0, 2**58, size=2000, dtype=np.uint64)
        for s in (1, 4, 6, 8, 12, 16):
            cfg = SegmentationConfig(s)
            segs = segment_blocks(blocks, cfg, addr_cfg)
            assert np.array_equal(desegment_blocks(segs, cfg, addr_cfg), blocks)

    def test_exhaustive_toy_width(self):
        # 16-bit block addresses: exhaustive losslessness
        toy = AddressConfig(addr_bits=22, page_size_bits=12, block_offset_bits=6)
        assert toy.block_bits == 16
        blocks = np.arange(2**16, dtype=np.uint64)
        for s in (1, 3, 5, 7, 16):
            cfg = SegmentationConfig(s)
            segs = segment_blocks(blocks, cfg, toy)
            assert np.array_equal(desegment_blocks(segs, cfg, toy), blocks)

    def test_scalar_vector_agreement(self, addr_cfg):
        rng = np.random.default_rng(2)
        blocks = rng.integers(0, 2**58, size=64, dtype=np.uint64)
        for s in (1, 6, 16):
            cfg = SegmentationConfig(s)
            mat = segment_blocks(blocks, cfg, addr_cfg)
            for i, b in enumerate(blocks):
                assert tuple(mat[i]) == segment_address(int(b), cfg, addr_cfg).segments

    def test_s1_is_binary_expansion(self, addr_cfg):
        block = 0b1011001
        seg = segment_address(block, SegmentationConfig(1), addr_cfg)
        assert "".join(map(str, seg.segments)) == bin(block)[2:].zfill(58)

    def test_segment_out_of_range_rejected(self, addr_cfg):
        cfg = SegmentationConfig(6)
        segs = list(segment_address(0x41, cfg, addr_cfg).segments)
        segs[3] = 64
        with pytest.raises(ValueError, match="out of range"):
            desegment(segs, cfg, addr_cfg)

    def test_block_too_wide_rejected(self, addr_cfg):
        with pytest.raises(ValueError, match="does not fit"):
            segment_address(1 << 58, SegmentationConfig(6), addr_cfg)

    def test_normalized_range(self, addr_cfg):
        rng = np.random.default_rng(3)
        blocks = rng.integers(0, 2**58, size=500, dtype=np.uint64)
        cfg = SegmentationConfig(6)
        norm = normalize_segments(segment_blocks(blocks, cfg, addr_cfg), cfg)
        assert norm.min() >= 0.0 and norm.max() < 1.0


class TestContexts:
    def test_pc_zero(self):
        assert pc_context(0, 16) == 0.0

    def test_pc_hand_fold(self):
        # chunks of 0x0001000200030004 low-to-high are 4, 3, 2, 1
        chunks = [(0x0001000200030004 >> (16 * k)) & 0xFFFF for k in range(4)]
        assert sum(chunks) == 10
        assert pc_context(0x0001000200030004, 16) == 10 / 65536

    def test_pc_single_chunk(self):
        assert pc_context(0xFFFF, 16) == 65535 / 65536

    def test_pc_hash_bits_bounds(self):
        with pytest.raises(ValueError):
            pc_context(1, 0)
        with pytest.raises(ValueError):
            pc_context(1, 33)

    def test_pd_same_page(self):
        assert page_distance_context(7, 7) == 1.0

    def test_pd_distance_three(self):
        assert page_distance_context(10, 7) == 0.25
        assert page_distance_context(7, 10) == 0.25

    def test_pd_extreme_distance(self):
        v = page_distance_context(2**52 - 1, 0)
        assert 0.0 < v < 1e-10 and np.isfinite(v)

    def test_range_fuzz_million(self):
        rng = np.random.default_rng(4)
        pcs = rng.integers(0, 2**64, size=1_000_000, dtype=np.uint64)
        for hb in (5, 16, 32):
            vals = pc_context(pcs, hb)
            assert vals.min() >= 0.0 and vals.max() < 1.0
        pages = rng.integers(0, 2**52, size=1_000_000, dtype=np.uint64)
        ref = rng.integers(0, 2**52, dtype=np.uint64)
        pd = page_distance_context(pages, ref)
        assert pd.min() > 0.0 and pd.max() <= 1.0

    def test_scalar_vector_agreement(self):
        rng = np.random.default_rng(5)
        pcs = rng.integers(0, 2**64, size=100, dtype=np.uint64)
        vec = pc_context(pcs, 16)
        for i, pc in enumerate(pcs):
            assert vec[i] == pc_context(int(pc), 16)


class TestBuildModelInput:
    def test_same_page_pd_all_one(self, trace_from_blocks, addr_cfg):
        trace = trace_from_blocks(list(range(100, 109)))  # blocks 100..108, pages 1
        sample = build_model_input(trace, 9, SegmentationConfig(6), addr_cfg)
        assert np.all(sample.context[:, 1] == 1.0)

    def test_default_history_shape(self, trace_from_blocks, addr_cfg):
        trace = trace_from_blocks(list(range(9)))
        sample = build_model_input(trace, 9, SegmentationConfig(6), addr_cfg)
        assert sample.history.shape == (9, 10)

    def test_short_window(self, trace_from_blocks, addr_cfg):
        trace = trace_from_blocks(list(range(8)))
        with pytest.raises(WindowError):
            build_model_input(trace, 9, SegmentationConfig(6), addr_cfg)

    def test_row_zero_is_most_recent(self, trace_from_blocks, addr_cfg):
        trace = trace_from_blocks([10, 20, 30, 40])
        sample = build_model_input(trace, 4, SegmentationConfig(6), addr_cfg)
        assert sample.history[0, -1] == 40 / 64  # low segment of the newest block
        assert sample.history[-1, -1] == 10 / 64


class TestTokenDictionary:
    def test_first_seen_ordering(self):
        d = TokenDictionary()
        assert tokenize([+1, +1, -2], d).tolist() == [0, 0, 1]
        assert len(d) == 2

    def test_frozen_maps_unknown_to_oov(self):
        d = TokenDictionary()
        assert d.lookup(+1) == 0
        d.freeze()
        assert d.lookup(-2) == d.oov_token == 1
        assert len(d) == 1  # no growth after freeze

    def test_capacity_overflow(self):
        d = TokenDictionary(capacity=2)
        tokenize([1, 2], d)
        with pytest.raises(CapacityError):
            d.lookup(3)

    def test_bijective(self):
        d = TokenDictionary()
        values = [5, -3, 99, 0]
        toks = tokenize(values, d)
        assert [d.value_of(int(t)) for t in toks] == values

    def test_pairs_roundtrip(self):
        d = TokenDictionary()
        tokenize([7, -1, 12], d)
        d.freeze()
        d2 = TokenDictionary.from_pairs(d.to_pairs())
        assert d2.lookup(-1) == d.lookup(-1)
        assert d2.lookup(555) == d2.oov_token


class TestFeatureConfig:
    def test_input_dims(self, addr_cfg):
        assert FeatureConfig("as", segment_bits=6).input_dim(addr_cfg) == 10
        assert FeatureConfig("as", segment_bits=1).input_dim(addr_cfg) == 58
        assert FeatureConfig("delta").input_dim(addr_cfg) == 1
        assert FeatureConfig("page_offset").input_dim(addr_cfg) == 2

    def test_dictionary_need(self):
        assert not FeatureConfig("as").needs_dictionary
        assert FeatureConfig("delta").needs_dictionary
        assert FeatureConfig("page_offset").needs_dictionary

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            FeatureConfig("embedding")
