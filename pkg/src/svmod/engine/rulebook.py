"""Rulebook construction: per-kernel-offset (input_row, output_row) pairs.

Convention (shared with the dense reference): an output site at p receives
``sum_over_offsets W[d] . input[p * stride + d]`` with offsets d centered on
zero, so kernels are odd. Strided output grids have ceil(size/stride)
extent and contain every position whose receptive field touches an active
input. Transposed rulebooks invert a recorded strided map, restoring
exactly the pre-downsampling coordinate set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidKernel
from .tensor import SparseTensor, linear_keys, lookup_keys, sort_coords


def kernel_offsets(kernel) -> np.ndarray:
    """Centered (dt, dy, dx) offsets in fixed enumeration order."""
    kt, ky, kx = kernel
    for k in (kt, ky, kx):
        if k < 1 or k % 2 == 0:
            raise InvalidKernel(f"kernel dims must be odd and >= 1, got {kernel}")
    rt, ry, rx = kt // 2, ky // 2, kx // 2
    offs = [(dt, dy, dx)
            for dt in range(-rt, rt + 1)
            for dy in range(-ry, ry + 1)
            for dx in range(-rx, rx + 1)]
    return np.array(offs, dtype=np.int64)


@dataclass
class Rulebook:
    offsets: np.ndarray                 # (K, 3)
    pairs: list                         # K entries of (in_rows, out_rows)
    in_coords: np.ndarray
    out_coords: np.ndarray
    in_shape: tuple
    out_shape: tuple
    kernel: tuple
    stride: tuple
    mode: str

    @property
    def n_in(self) -> int:
        return self.in_coords.shape[0]

    @property
    def n_out(self) -> int:
        return self.out_coords.shape[0]

    def pair_count(self) -> int:
        return sum(len(i) for i, _ in self.pairs)

    def macs(self, c_in: int, c_out: int) -> int:
        return self.pair_count() * c_in * c_out


def _out_size(n: int, s: int) -> int:
    return (n + s - 1) // s


def build_rulebook(tensor: SparseTensor, kernel, stride=(1, 1, 1),
                   mode: str = "submanifold", record: Rulebook | None = None):
    """Build the gather/scatter pairs for one layer; returns (rulebook, out_coords).

    mode 'transposed' requires `record`, the rulebook of the strided layer
    being inverted; the transposed output coordinates are the recorded
    input coordinates.
    """
    kernel = tuple(int(k) for k in kernel)
    stride = tuple(int(s) for s in stride)
    if mode == "submanifold":
        if any(s != 1 for s in stride):
            raise InvalidKernel("submanifold convolution requires stride 1")
        return _build_submanifold(tensor, kernel)
    if mode == "strided":
        return _build_strided(tensor, kernel, stride)
    if mode == "transposed":
        if record is None:
            raise ValueError("transposed mode needs the recorded strided rulebook")
        return _invert_recorded(tensor, record)
    raise ValueError(f"unknown rulebook mode {mode!r}")


def _build_submanifold(tensor: SparseTensor, kernel):
    offsets = kernel_offsets(kernel)
    coords = tensor.coords
    shape = np.array(tensor.shape, dtype=np.int64)
    pairs = []
    rows = np.arange(coords.shape[0], dtype=np.int64)
    for d in offsets:
        cand = coords + d
        inb = np.all((cand >= 0) & (cand < shape), axis=1)
        in_rows = lookup_keys(tensor.keys, linear_keys(cand[inb], tensor.shape))
        hit = in_rows >= 0
        pairs.append((in_rows[hit], rows[inb][hit]))
    rb = Rulebook(offsets, pairs, coords, coords, tensor.shape, tensor.shape,
                  kernel, (1, 1, 1), "submanifold")
    return rb, coords


def _build_strided(tensor: SparseTensor, kernel, stride):
    offsets = kernel_offsets(kernel)
    coords = tensor.coords
    s = np.array(stride, dtype=np.int64)
    out_shape = tuple(_out_size(n, st) for n, st in zip(tensor.shape, stride))
    oshape = np.array(out_shape, dtype=np.int64)

    # Output support: every strided-grid position whose receptive field
    # covers at least one active input.
    cand_keys = []
    for d in offsets:
        q = coords - d
        ok = np.all(q >= 0, axis=1) & np.all(q % s == 0, axis=1)
        p = q[ok] // s
        ok2 = np.all(p < oshape, axis=1)
        if ok2.any():
            cand_keys.append(linear_keys(p[ok2], out_shape))
    if cand_keys:
        out_keys = np.unique(np.concatenate(cand_keys))
    else:
        out_keys = np.empty(0, dtype=np.int64)
    from .tensor import keys_to_coords
    out_coords = keys_to_coords(out_keys, out_shape)

    shape_in = np.array(tensor.shape, dtype=np.int64)
    pairs = []
    out_rows_all = np.arange(out_coords.shape[0], dtype=np.int64)
    for d in offsets:
        cand = out_coords * s + d
        inb = np.all((cand >= 0) & (cand < shape_in), axis=1)
        in_rows = lookup_keys(tensor.keys, linear_keys(cand[inb], tensor.shape))
        hit = in_rows >= 0
        pairs.append((in_rows[hit], out_rows_all[inb][hit]))
    rb = Rulebook(offsets, pairs, coords, out_coords, tensor.shape, out_shape,
                  kernel, stride, "strided")
    return rb, out_coords


def _invert_recorded(tensor: SparseTensor, record: Rulebook):
    if tensor.n != record.n_out or not np.array_equal(tensor.coords,
                                                      record.out_coords):
        raise ValueError("transposed input coordinates do not match the "
                         "recorded strided output")
    pairs = [(out_rows, in_rows) for in_rows, out_rows in record.pairs]
    rb = Rulebook(record.offsets, pairs, record.out_coords, record.in_coords,
                  record.out_shape, record.in_shape, record.kernel,
                  record.stride, "transposed")
    return rb, record.in_coords
