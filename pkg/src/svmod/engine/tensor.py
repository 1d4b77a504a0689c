"""Sparse spatio-temporal tensors: active (t, y, x) sites plus features.

Coordinates are kept lexicographically sorted; the row order doubles as a
deterministic iteration order and as the coordinate index (binary search on
linearized keys).
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor


def linear_keys(coords: np.ndarray, shape) -> np.ndarray:
    """Linearize (t, y, x) rows into sortable int64 keys."""
    t, h, w = shape
    c = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
    return (c[:, 0] * h + c[:, 1]) * w + c[:, 2]


def keys_to_coords(keys: np.ndarray, shape) -> np.ndarray:
    t, h, w = shape
    keys = np.asarray(keys, dtype=np.int64)
    x = keys % w
    rest = keys // w
    y = rest % h
    tt = rest // h
    return np.stack([tt, y, x], axis=1)


def sort_coords(coords: np.ndarray, feats: np.ndarray | None, shape):
    """Sort rows lexicographically by (t, y, x); feats reordered alongside."""
    keys = linear_keys(coords, shape)
    order = np.argsort(keys, kind="stable")
    coords = np.asarray(coords, dtype=np.int64).reshape(-1, 3)[order]
    if feats is not None:
        feats = np.asarray(feats)[order]
    return coords, feats


class SparseTensor:
    """Active coordinates + per-site feature rows.

    `feats` may be a plain ndarray or an autodiff Tensor; `fdata` always
    yields the underlying array. Construction requires sorted, unique,
    in-bounds coordinates (use `from_unsorted` otherwise).
    """

    __slots__ = ("coords", "feats", "shape", "keys")

    def __init__(self, coords, feats, shape, keys=None, _checked=False):
        self.coords = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
        self.feats = feats
        self.shape = tuple(int(s) for s in shape)
        self.keys = linear_keys(self.coords, self.shape) if keys is None else keys
        if not _checked:
            self._validate()

    def _validate(self):
        n = self.coords.shape[0]
        fshape = self.fdata.shape
        if fshape[0] != n:
            raise ValueError(f"feats rows {fshape[0]} != coords rows {n}")
        if n == 0:
            return
        t, h, w = self.shape
        c = self.coords
        if (c < 0).any() or (c[:, 0] >= t).any() or (c[:, 1] >= h).any() \
                or (c[:, 2] >= w).any():
            raise ValueError("coordinates out of bounds")
        if (np.diff(self.keys) <= 0).any():
            raise ValueError("coordinates must be sorted and unique")

    @classmethod
    def from_unsorted(cls, coords, feats, shape):
        coords, feats = sort_coords(coords, feats, shape)
        return cls(coords, feats, shape)

    @property
    def fdata(self) -> np.ndarray:
        return self.feats.data if isinstance(self.feats, Tensor) else self.feats

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def c(self) -> int:
        return self.fdata.shape[1] if self.fdata.ndim > 1 else 1

    def lookup(self, coords) -> np.ndarray:
        """Row indices of `coords`; -1 where absent."""
        q = linear_keys(coords, self.shape)
        return lookup_keys(self.keys, q)

    def with_feats(self, feats) -> "SparseTensor":
        return SparseTensor(self.coords, feats, self.shape, keys=self.keys,
                            _checked=True)

    def to_dense(self) -> np.ndarray:
        """(T, H, W, C) dense embedding, zero off the active set."""
        t, h, w = self.shape
        f = self.fdata
        out = np.zeros((t, h, w, f.shape[1]), dtype=f.dtype)
        out[self.coords[:, 0], self.coords[:, 1], self.coords[:, 2]] = f
        return out


def lookup_keys(sorted_keys: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Binary-search rows of `query` in `sorted_keys`; -1 where missing."""
    query = np.asarray(query, dtype=np.int64)
    if sorted_keys.size == 0:
        return np.full(query.shape, -1, dtype=np.int64)
    pos = np.searchsorted(sorted_keys, query)
    pos_c = np.minimum(pos, sorted_keys.size - 1)
    hit = sorted_keys[pos_c] == query
    return np.where(hit, pos_c, -1)
