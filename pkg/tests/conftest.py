import numpy as np
import pytest

from svmod.engine.tensor import SparseTensor, keys_to_coords


def random_sparse(rng, shape, c=3, density=0.15, dtype=np.float64,
                  requires_grad=False):
    """Random sparse tensor with at least one active site."""
    n_all = int(np.prod(shape))
    n = max(1, int(round(density * n_all)))
    keys = np.sort(rng.choice(n_all, size=n, replace=False))
    coords = keys_to_coords(keys, shape)
    feats = rng.normal(size=(n, c)).astype(dtype)
    if requires_grad:
        from svmod.engine import Tensor
        feats = Tensor(feats, requires_grad=True)
    return SparseTensor(coords, feats, shape)


def naive_dense_conv3d(x, w, bias, stride=(1, 1, 1)):
    """Triple-loop dense conv oracle (centered offsets, ceil output size)."""
    from svmod.engine.rulebook import kernel_offsets

    t, h, wd, cin = x.shape
    k_vol, _, cout = w.shape
    if k_vol == 27:
        kernel = (3, 3, 3)
    elif k_vol == 1:
        kernel = (1, 1, 1)
    else:
        raise ValueError(k_vol)
    offsets = kernel_offsets(kernel)
    out_shape = tuple(-(-n // s) for n, s in zip((t, h, wd), stride))
    out = np.zeros(out_shape + (cout,), dtype=x.dtype)
    for pt in range(out_shape[0]):
        for py in range(out_shape[1]):
            for px in range(out_shape[2]):
                acc = np.zeros(cout, dtype=x.dtype)
                for k, (dt, dy, dx) in enumerate(offsets):
                    it = pt * stride[0] + dt
                    iy = py * stride[1] + dy
                    ix = px * stride[2] + dx
                    if 0 <= it < t and 0 <= iy < h and 0 <= ix < wd:
                        acc += x[it, iy, ix] @ w[k]
                out[pt, py, px] = acc
    if bias is not None:
        out += bias
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
