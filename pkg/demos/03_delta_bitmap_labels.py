"""Delta-bitmap labels: unordered future deltas as a fixed-size training target.

Run:  python demos/03_delta_bitmap_labels.py
"""

import numpy as np

from prefetchlab import (
    AddressConfig,
    MemoryAccess,
    bitmap_to_deltas,
    collect_future_deltas,
    deltas_to_bitmap,
    prefetch_addresses,
)
from prefetchlab.labeling import LabelConfig

addr = AddressConfig()
cfg = LabelConfig(look_forward=128, delta_bound=128)
print(f"look-forward window W={cfg.look_forward}, delta bound +-{cfg.delta_bound}, "
      f"bitmap size B={cfg.bitmap_size}\n")


def trace_of(blocks):
    return [MemoryAccess(i, i, 0x400000, b << addr.block_offset_bits)
            for i, b in enumerate(blocks)]


# a page-crossing access burst after the trigger at block 1000
trace = trace_of([1000, 1001, 1005, 998, 1130, 1000, 1064])
deltas = collect_future_deltas(trace, 0, cfg, addr)
print("future deltas seen from block 1000:", sorted(deltas))
print("  (delta 0 and out-of-bound jumps are dropped; +64 crosses a page)")

bitmap = deltas_to_bitmap(deltas, cfg)
print(f"bitmap: {int(bitmap.sum())} bits set at indices {np.flatnonzero(bitmap).tolist()}")
print("inverse mapping restores the set:", sorted(bitmap_to_deltas(bitmap, cfg)) == sorted(deltas))

print("\nprefetch addresses = current block + predicted deltas:")
print("  block 1000 with {+1, -2, +64}:", sorted(prefetch_addresses(1000, {+1, -2, +64}, addr)))
print("  block 0 with {-1} (underflow dropped):", prefetch_addresses(0, {-1}, addr))

# distance labeling: the same window pushed past an inference-latency skip
skip_cfg = LabelConfig(look_forward=3, delta_bound=128, skip=2)
trace = trace_of([500, 501, 502, 507, 509, 511])
print("\ndistance labeling (skip=2, W=3) from block 500:",
      sorted(collect_future_deltas(trace, 0, skip_cfg, addr)))
