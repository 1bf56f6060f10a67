import pytest

from prefetchlab.trace import AddressConfig, MemoryAccess


@pytest.fixture
def addr_cfg():
    return AddressConfig()


def make_trace(blocks, pcs=None, cycle_step=1, addr_cfg=None):
    """Trace from a list of block addresses (offset 0 within each block)."""
    cfg = addr_cfg or AddressConfig()
    if pcs is None:
        pcs = [0x400000] * len(blocks)
    return [
        MemoryAccess(i, i * cycle_step, pc, b << cfg.block_offset_bits)
        for i, (b, pc) in enumerate(zip(blocks, pcs))
    ]


@pytest.fixture
def trace_from_blocks():
    return make_trace
