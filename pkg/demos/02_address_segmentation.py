"""Fine-grained address segmentation: the dictionary-free model input.

Shows how one block address becomes a segment vector, the two special segment
widths (1 bit = raw binary; 6 bits = block-index-aligned), and the storage cost
the dictionary-backed input modes pay that segmentation avoids.

Run:  python demos/02_address_segmentation.py
"""

import numpy as np

from prefetchlab import AddressConfig, SegmentationConfig, desegment, segment_address
from prefetchlab.datasets import build_datasets
from prefetchlab.features import FeatureConfig
from prefetchlab.labeling import LabelConfig
from prefetchlab.trace import generate_trace, split_trace

addr = AddressConfig()
block = 0x7F00_0000_1040 >> addr.block_offset_bits

print(f"block address {block:#x} under different segment widths:")
for s in (1, 4, 6, 8, 12, 16):
    cfg = SegmentationConfig(s)
    seg = segment_address(block, cfg, addr)
    shown = list(seg.segments[-6:])
    print(f"  s={s:2d}: {cfg.segment_count(addr):2d} segments, low six {shown}, "
          f"restored={desegment(seg.segments, cfg, addr) == block}")

print("\nsegment values scale into [0,1) for direct model input:")
seg = segment_address(block, SegmentationConfig(6), addr)
print("  normalized:", np.round(seg.normalized, 4).tolist())

# storage accounting: segmentation needs no token dictionary, the ablation
# input modes do
trace = generate_trace({"name": "region_walks"}, 6000, seed=1)
split = split_trace(trace, (0.4, 0.1, 0.5))
label_cfg = LabelConfig(look_forward=16, delta_bound=64)
print("\ntoken dictionary entries by input mode (frozen on the training split):")
for fc in (FeatureConfig("as", 6), FeatureConfig("delta"), FeatureConfig("page_offset")):
    bundle = build_datasets(trace, split, fc, label_cfg, addr, history_len=9)
    sizes = bundle.dictionary_sizes()
    print(f"  {fc.mode:12s} -> {sizes if sizes else 'none (dictionary-free)'}")
