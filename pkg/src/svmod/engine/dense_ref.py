"""Brute-force dense 3D convolution: the oracle and benchmark reference.

Same convention as the sparse rulebooks: centered odd kernels, output site
p reads input p*stride + offset, zero outside the volume, output extent
ceil(size/stride). No sparsity is exploited anywhere here.
"""

from __future__ import annotations

import numpy as np

from .rulebook import kernel_offsets


def _out_size(n, s):
    return (n + s - 1) // s


def dense_conv3d(x: np.ndarray, w: np.ndarray, bias=None, stride=(1, 1, 1)):
    """x: (T, H, W, Cin); w: (K, Cin, Cout) in kernel_offsets order."""
    kernel = _infer_kernel(w.shape[0])
    offsets = kernel_offsets(kernel)
    in_shape = x.shape[:3]
    out_shape = tuple(_out_size(n, s) for n, s in zip(in_shape, stride))
    c_out = w.shape[2]
    out = np.zeros(out_shape + (c_out,), dtype=x.dtype)
    for k, d in enumerate(offsets):
        src, dst = _strided_windows(in_shape, out_shape, stride, d)
        if src is None:
            continue
        out[dst] += x[src] @ w[k]
    if bias is not None:
        out += bias
    return out


def dense_transposed_conv3d(g: np.ndarray, w: np.ndarray, bias=None,
                            stride=(1, 1, 1), fine_shape=None):
    """Adjoint map: coarse (To,Ho,Wo,Cin) features to the fine grid.

    fine[q] += W[d] . g[p] wherever q = p*stride + d.
    """
    kernel = _infer_kernel(w.shape[0])
    offsets = kernel_offsets(kernel)
    coarse_shape = g.shape[:3]
    c_out = w.shape[2]
    out = np.zeros(tuple(fine_shape) + (c_out,), dtype=g.dtype)
    for k, d in enumerate(offsets):
        src, dst = _strided_windows(fine_shape, coarse_shape, stride, d)
        if src is None:
            continue
        out[src] += g[dst] @ w[k]
    if bias is not None:
        out += bias
    return out


def _infer_kernel(k_vol: int):
    for kernel in ((1, 1, 1), (3, 3, 3), (1, 3, 3), (3, 1, 1), (5, 5, 5)):
        if int(np.prod(kernel)) == k_vol:
            return kernel
    k = round(k_vol ** (1 / 3))
    if k ** 3 == k_vol:
        return (k, k, k)
    raise ValueError(f"cannot infer kernel dims from volume {k_vol}")


def _strided_windows(fine_shape, coarse_shape, stride, d):
    """Aligned slices: fine[q] at q = p*stride + d for in-range p.

    Returns (fine_slices, coarse_slices) or (None, None) if empty.
    """
    fine_sl, coarse_sl = [], []
    for n, m, s, delta in zip(fine_shape, coarse_shape, stride, d):
        delta = int(delta)
        p_min = 0 if delta >= 0 else (-delta + s - 1) // s
        p_max = min(m - 1, (n - 1 - delta) // s)
        if p_min > p_max:
            return None, None
        coarse_sl.append(slice(p_min, p_max + 1))
        fine_sl.append(slice(p_min * s + delta, p_max * s + delta + 1, s))
    return tuple(fine_sl), tuple(coarse_sl)


def dense_conv_macs(out_shape, k_vol: int, c_in: int, c_out: int) -> int:
    """Dense multiply-accumulates: every output site pays the full kernel."""
    return int(np.prod(out_shape)) * k_vol * c_in * c_out


class DenseReference:
    """Runs a sparse detector's weights densely over a residual volume.

    Used for wall-clock and FLOP comparisons; the channel-concat in the
    decoder is folded into a weight split so the concatenated volume is
    never materialized.
    """

    def __init__(self, detector):
        self.det = detector

    def conv_macs(self, t, h, w) -> int:
        """Analytic dense MAC count for the detector run at (t, h, w)."""
        det = self.det
        shapes = [(t, h, w)]
        for _ in range(det.depth - 1):
            pt, ph, pw = shapes[-1]
            shapes.append((pt, _out_size(ph, 2), _out_size(pw, 2)))
        total = dense_conv_macs(shapes[0], 27, det.in_channels, det.channels[0])
        for lvl in range(1, det.depth):
            c_prev, c_cur = det.channels[lvl - 1], det.channels[lvl]
            total += dense_conv_macs(shapes[lvl], 27, c_prev, c_cur)
            total += dense_conv_macs(shapes[lvl], 27, c_cur, c_cur)
        for lvl in range(det.depth - 1, 0, -1):
            c_prev, c_cur = det.channels[lvl - 1], det.channels[lvl]
            total += dense_conv_macs(shapes[lvl - 1], 27, c_cur, c_prev)
            total += dense_conv_macs(shapes[lvl - 1], 27, 2 * c_prev, c_prev)
        c0 = det.channels[0]
        for c_head in (1, 2, 2):
            total += dense_conv_macs(shapes[0], 27, c0, c0)
            total += dense_conv_macs(shapes[0], 1, c0, c_head)
        return total

    def forward(self, residuals: np.ndarray):
        """Dense forward over (T, H, W) residuals; returns head maps."""
        det = self.det
        x = (residuals[..., None] / 255.0).astype(np.float32)

        def bias(conv):
            return None if conv.b is None else conv.b.data

        def bn_relu(v, bn):
            inv = 1.0 / np.sqrt(bn.running_var + bn.eps)
            v *= (bn.gamma.data * inv)
            v += (bn.beta.data - bn.running_mean * bn.gamma.data * inv)
            np.maximum(v, 0, out=v)
            return v

        x = bn_relu(dense_conv3d(x, det.stem.w.data, bias(det.stem)),
                    det.stem_bn)
        skips = []
        for lvl in range(1, det.depth):
            skips.append(x)
            x = bn_relu(dense_conv3d(x, det.downs[lvl - 1].w.data,
                                     bias(det.downs[lvl - 1]),
                                     stride=(1, 2, 2)), det.down_bns[lvl - 1])
            x = bn_relu(dense_conv3d(x, det.mids[lvl - 1].w.data,
                                     bias(det.mids[lvl - 1])),
                        det.mid_bns[lvl - 1])
        for i, lvl in enumerate(range(det.depth - 1, 0, -1)):
            skip = skips[lvl - 1]
            up = self.det.ups[i]
            x = bn_relu(dense_transposed_conv3d(
                x, up.w.data, bias(up), stride=(1, 2, 2),
                fine_shape=skip.shape[:3]), det.up_bns[i])
            fuse = det.fuses[i]
            c_half = x.shape[-1]
            # split-weight fusion instead of materializing the concat
            y = dense_conv3d(x, fuse.w.data[:, :c_half], bias(fuse))
            del x
            y += dense_conv3d(skip, fuse.w.data[:, c_half:])
            del skip
            x = bn_relu(y, det.fuse_bns[i])
        heads = []
        for conv3, conv1 in det.head_layers:
            h1 = dense_conv3d(x, conv3.w.data, bias(conv3))
            np.maximum(h1, 0, out=h1)
            heads.append(dense_conv3d(h1, conv1.w.data, bias(conv1)))
            del h1
        return heads
