"""Generate the synthetic trace families and inspect their block-level structure.

Run:  python demos/01_synthetic_traces.py
"""

import collections

from prefetchlab import AddressConfig, block_address, generate_trace, read_trace, write_trace
from prefetchlab.trace import page_of_block

addr = AddressConfig()
print(f"address layout: {addr.page_bits}-bit page + {addr.block_index_bits}-bit block index "
      f"({addr.block_bits}-bit block addresses, {1 << addr.block_offset_bits}B lines)\n")

specs = {
    "stride":        {"name": "stride", "stride": 3},
    "pointer_walk":  {"name": "pointer_walk", "page": 0x1234},
    "page_skip":     {"name": "page_skip", "deltas": [2, 3, 91]},
    "interleaved":   {"name": "interleaved"},
    "random":        {"name": "random", "region_blocks": 4096},
    "region_walks":  {"name": "region_walks"},
}

for label, spec in specs.items():
    trace = generate_trace(spec, 2000, seed=42)
    blocks = [block_address(a.vaddr, addr) for a in trace]
    deltas = [b - a for a, b in zip(blocks, blocks[1:])]
    pages = {page_of_block(b, addr) for b in blocks}
    top = collections.Counter(deltas).most_common(4)
    print(f"{label:13s} pages touched: {len(pages):5d}   most common deltas: {top}")

# round trip through the CSV format (gzip selected by suffix)
trace = generate_trace(specs["stride"], 100, seed=7)
write_trace("/tmp/demo_trace.csv.gz", trace)
again = read_trace("/tmp/demo_trace.csv.gz")
print(f"\ncsv.gz round trip: {len(again)} records, identical={again == trace}")
