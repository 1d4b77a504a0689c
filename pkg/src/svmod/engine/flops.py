"""Arithmetic-cost instrumentation for the sparse engine.

Sparse convolutions report exactly sum_over_offsets(|pairs| * C_in * C_out)
multiply-accumulates, so measured cost scales with active pairs and never
with the dense T*H*W volume.
"""

from __future__ import annotations


class FlopCounter:
    def __init__(self):
        self.macs = 0
        self.flops = 0

    def add_conv(self, n_pairs: int, c_in: int, c_out: int, n_out_bias: int = 0):
        macs = n_pairs * c_in * c_out
        self.macs += macs
        self.flops += 2 * macs + n_out_bias * c_out

    def add_elementwise(self, count: int):
        self.flops += count

    def reset(self):
        self.macs = 0
        self.flops = 0


COUNTER = FlopCounter()


def reset():
    COUNTER.reset()


def totals():
    return COUNTER.macs, COUNTER.flops
