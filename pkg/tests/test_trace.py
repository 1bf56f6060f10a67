import gzip

import numpy as np
import pytest

from prefetchlab.trace import (
    EmptyTraceError,
    MemoryAccess,
    PatternError,
    SplitError,
    TraceParseError,
    block_address,
    block_addresses,
    generate_trace,
    page_of_block,
    read_trace,
    split_trace,
    write_trace,
)


def block_address_oracle(vaddr, cfg):
    # independent route: binary-string slicing instead of shift/mask
    bits = bin(vaddr)[2:].zfill(cfg.addr_bits)
    return int(bits[: cfg.addr_bits - cfg.block_offset_bits][-cfg.block_bits:], 2)


class TestReadTrace:
    def test_single_csv_line(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("0,0,0x400123,0x7f0000001040\n")
        (rec,) = read_trace(p)
        assert rec == MemoryAccess(0, 0, 0x400123, 0x7F0000001040)

    def test_ordinals_follow_file_order(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("5,0,0x1,0x40\n9,1,0x2,0x80\n3,2,0x3,0xc0\n")
        recs = read_trace(p)
        assert [r.ordinal for r in recs] == [0, 1, 2]

    def test_malformed_hex_names_line(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("0,0,xyz,0x10\n")
        with pytest.raises(TraceParseError, match="line 1"):
            read_trace(p)

    def test_malformed_line_number_counts_comments(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("# header\n0,0,0x1,0x40\n1,1,0x2\n")
        with pytest.raises(TraceParseError, match="line 3"):
            read_trace(p)

    def test_empty_file(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("# only a comment\n")
        with pytest.raises(EmptyTraceError):
            read_trace(p)

    def test_decreasing_cycle_rejected(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("0,5,0x1,0x40\n1,4,0x2,0x80\n")
        with pytest.raises(TraceParseError, match="cycle"):
            read_trace(p)

    def test_pc_vaddr_format_cycle_is_ordinal(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("0x10,0x40\n0x20,0x80\n")
        recs = read_trace(p, fmt="pc_vaddr")
        assert [(r.cycle, r.pc, r.vaddr) for r in recs] == [(0, 0x10, 0x40), (1, 0x20, 0x80)]

    def test_gzip_detected_by_magic(self, tmp_path):
        p = tmp_path / "t.csv"  # no .gz suffix on purpose
        p.write_bytes(gzip.compress(b"0,0,0x1,0x40\n"))
        assert read_trace(p)[0].vaddr == 0x40


class TestWriteTrace:
    def test_roundtrip_plain(self, tmp_path):
        trace = generate_trace({"name": "stride", "stride": 3}, 50, seed=1)
        p = tmp_path / "t.csv"
        write_trace(p, trace)
        assert read_trace(p) == trace

    def test_roundtrip_gzip(self, tmp_path):
        trace = generate_trace({"name": "random"}, 50, seed=2)
        p = tmp_path / "t.csv.gz"
        write_trace(p, trace)
        assert read_trace(p) == trace

    def test_gzip_bytes_reproducible(self, tmp_path):
        trace = generate_trace({"name": "stride"}, 20, seed=3)
        p1, p2 = tmp_path / "a.csv.gz", tmp_path / "b.csv.gz"
        write_trace(p1, trace)
        write_trace(p2, trace)
        assert p1.read_bytes() == p2.read_bytes()


class TestBlockAddress:
    def test_zero(self, addr_cfg):
        assert block_address(0x0, addr_cfg) == 0x0

    def test_examples_match_oracle(self, addr_cfg):
        assert block_address(0x1040, addr_cfg) == 0x41
        assert block_address(0x103F, addr_cfg) == 0x40
        for vaddr in (0x1040, 0x103F, 0xDEADBEEF, 2**63 + 12345):
            assert block_address(vaddr, addr_cfg) == block_address_oracle(vaddr, addr_cfg)

    def test_constant_within_block_window(self, addr_cfg):
        base = 0xABCD << addr_cfg.block_offset_bits
        values = {block_address(base + off, addr_cfg) for off in range(64)}
        assert values == {0xABCD}

    def test_monotone_over_aligned_region(self, addr_cfg):
        rng = np.random.default_rng(0)
        starts = rng.integers(0, 2**40, size=100)
        for s in starts:
            a = block_address(int(s) << 6, addr_cfg)
            b = block_address((int(s) + 7) << 6, addr_cfg)
            assert b == a + 7

    def test_vectorized_matches_scalar(self, addr_cfg):
        trace = generate_trace({"name": "random"}, 200, seed=4)
        vec = block_addresses(trace, addr_cfg)
        assert [int(v) for v in vec] == [block_address(a.vaddr, addr_cfg) for a in trace]

    def test_page_of_block(self, addr_cfg):
        assert page_of_block(0x41, addr_cfg) == 0x1
        assert page_of_block(0x3F, addr_cfg) == 0x0


class TestSplitTrace:
    def test_forty_ten_fifty_proportions(self):
        s = split_trace(100, (0.4, 0.1, 0.5))
        assert (s.train, s.validation, s.test) == (range(0, 40), range(40, 50), range(50, 100))

    def test_scaled(self):
        s = split_trace(10, (0.4, 0.1, 0.5))
        assert (s.train, s.validation, s.test) == (range(0, 4), range(4, 5), range(5, 10))

    def test_too_short(self):
        with pytest.raises(SplitError):
            split_trace(2, (0.4, 0.1, 0.5))

    def test_bad_ratios(self):
        with pytest.raises(SplitError):
            split_trace(10, (0.5, 0.2, 0.2))
        with pytest.raises(SplitError):
            split_trace(10, (0.5, -0.1, 0.6))

    def test_partition_property(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            n = int(rng.integers(3, 5000))
            cuts = np.sort(rng.uniform(0.05, 0.95, size=2))
            ratios = (float(cuts[0]), float(cuts[1] - cuts[0]), float(1.0 - cuts[1]))
            s = split_trace(n, ratios)
            assert s.train.start == 0 and s.test.stop == n
            assert s.train.stop == s.validation.start
            assert s.validation.stop == s.test.start
            assert len(s.train) + len(s.validation) + len(s.test) == n


class TestGenerateTrace:
    def test_stride_one(self, addr_cfg):
        trace = generate_trace({"name": "stride", "stride": 1, "start_block": 100}, 4, seed=0)
        assert [block_address(a.vaddr, addr_cfg) for a in trace] == [100, 101, 102, 103]

    def test_stride_three(self, addr_cfg):
        trace = generate_trace({"name": "stride", "stride": 3, "start_block": 0}, 3, seed=0)
        assert [block_address(a.vaddr, addr_cfg) for a in trace] == [0, 3, 6]

    def test_stride_delta_property(self, addr_cfg):
        trace = generate_trace({"name": "stride", "stride": 7}, 500, seed=9)
        blocks = [block_address(a.vaddr, addr_cfg) for a in trace]
        assert all(b - a == 7 for a, b in zip(blocks, blocks[1:]))

    def test_determinism_byte_for_byte(self, tmp_path):
        spec = {"name": "region_walks"}
        t1 = generate_trace(spec, 300, seed=42)
        t2 = generate_trace(spec, 300, seed=42)
        assert t1 == t2
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_trace(p1, t1)
        write_trace(p2, t2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_unknown_pattern(self):
        with pytest.raises(PatternError):
            generate_trace({"name": "fibonacci"}, 10, seed=0)

    def test_bad_length(self):
        with pytest.raises(PatternError):
            generate_trace({"name": "stride"}, 0, seed=0)

    def test_pointer_walk_stays_in_page(self, addr_cfg):
        trace = generate_trace({"name": "pointer_walk", "page": 77}, 400, seed=5)
        pages = {page_of_block(block_address(a.vaddr, addr_cfg), addr_cfg) for a in trace}
        assert pages == {77}

    def test_page_skip_crosses_pages(self, addr_cfg):
        trace = generate_trace({"name": "page_skip"}, 100, seed=6)
        pages = {page_of_block(block_address(a.vaddr, addr_cfg), addr_cfg) for a in trace}
        assert len(pages) > 1

    def test_interleaved_streams_are_per_pc_strided(self, addr_cfg):
        spec = {
            "name": "interleaved",
            "streams": [
                {"pc": 0x10, "start_block": 1000, "stride": 2},
                {"pc": 0x20, "start_block": 9000, "stride": 5},
            ],
        }
        trace = generate_trace(spec, 40, seed=0)
        per_pc = {}
        for a in trace:
            per_pc.setdefault(a.pc, []).append(block_address(a.vaddr, addr_cfg))
        assert all(b - a == 2 for a, b in zip(per_pc[0x10], per_pc[0x10][1:]))
        assert all(b - a == 5 for a, b in zip(per_pc[0x20], per_pc[0x20][1:]))

    def test_random_within_region(self, addr_cfg):
        spec = {"name": "random", "region_start_block": 5000, "region_blocks": 128}
        trace = generate_trace(spec, 300, seed=1)
        blocks = [block_address(a.vaddr, addr_cfg) for a in trace]
        assert all(5000 <= b < 5128 for b in blocks)

    def test_region_walks_deltas_cross_pages(self, addr_cfg):
        trace = generate_trace({"name": "region_walks"}, 200, seed=2)
        blocks = [block_address(a.vaddr, addr_cfg) for a in trace]
        page_span = 1 << addr_cfg.block_index_bits
        assert any(abs(b - a) > page_span for a, b in zip(blocks, blocks[1:]))

    def test_cycle_step(self):
        trace = generate_trace({"name": "stride", "cycle_step": 25}, 5, seed=0)
        assert [a.cycle for a in trace] == [0, 25, 50, 75, 100]
