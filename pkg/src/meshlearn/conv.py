"""Order-invariant face convolution over BFS-grown regions.

For a face f with surrounding faces n in its region:

    out_f = W0 d_f + W1 sum_n d_n + W2 sum_n |d_f - d_n| + bias

followed by an optional ReLU. Both sums are order invariant; in addition
contributions are accumulated in ascending face-id order so the result
is bit-identical under any permutation of the stored region list.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import NONE, AdjacencyMatrix


@dataclass
class RegionTable:
    """Per-face convolution support.

    ``members[f]`` holds up to ``kernel_size`` surrounding face ids in BFS
    discovery order, padded with -1; ``counts[f]`` is the actual number.
    A row is shorter than K only when the face's connected component has
    fewer than K+1 faces.
    """

    kernel_size: int
    members: np.ndarray  # (F, K) int64, -1 padding
    counts: np.ndarray   # (F,) int64

    @property
    def num_faces(self) -> int:
        return self.members.shape[0]

    def row(self, f: int) -> list[int]:
        return self.members[f, : self.counts[f]].tolist()


def build_regions(adj: AdjacencyMatrix, kernel_size: int) -> RegionTable:
    """Grow each face's region breadth-first until K surrounding faces.

    The frontier starts at the face's adjacency slots (in sorted-slot
    order) and expands each frontier face's slots in turn, skipping NONE
    and already-included faces. Deterministic, and invariant under rigid
    transforms because the slot order is.
    """
    if kernel_size < 3:
        raise ValueError("kernel_size must be >= 3")
    F = adj.num_faces
    nb = adj.neighbors
    members = np.full((F, kernel_size), -1, dtype=np.int64)
    counts = np.zeros(F, dtype=np.int64)
    for f in range(F):
        seen = {f}
        out: list[int] = []
        for s in range(3):
            g = int(nb[f, s])
            if g != NONE and g not in seen and len(out) < kernel_size:
                seen.add(g)
                out.append(g)
        head = 0
        while head < len(out) and len(out) < kernel_size:
            g = out[head]
            head += 1
            for s in range(3):
                h = int(nb[g, s])
                if h != NONE and h not in seen:
                    seen.add(h)
                    out.append(h)
                    if len(out) >= kernel_size:
                        break
        members[f, : len(out)] = out
        counts[f] = len(out)
    return RegionTable(kernel_size, members, counts)


@dataclass
class ConvParams:
    """Three C_out x C_in maps (center, neighbor-sum, abs-diff-sum) + bias."""

    w0: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.w0 = np.atleast_2d(np.asarray(self.w0, dtype=np.float64))
        self.w1 = np.atleast_2d(np.asarray(self.w1, dtype=np.float64))
        self.w2 = np.atleast_2d(np.asarray(self.w2, dtype=np.float64))
        self.bias = np.atleast_1d(np.asarray(self.bias, dtype=np.float64))
        if not (self.w0.shape == self.w1.shape == self.w2.shape):
            raise ValueError("w0/w1/w2 must share one C_out x C_in shape")
        if self.bias.shape != (self.w0.shape[0],):
            raise ValueError("bias shape must be (C_out,)")

    @property
    def in_channels(self) -> int:
        return self.w0.shape[1]

    @property
    def out_channels(self) -> int:
        return self.w0.shape[0]


def init_conv_params(c_in: int, c_out: int, rng: np.random.Generator) -> ConvParams:
    # fan-in of the three-term combination
    s = 1.0 / np.sqrt(3.0 * c_in)
    return ConvParams(
        w0=rng.uniform(-s, s, size=(c_out, c_in)),
        w1=rng.uniform(-s, s, size=(c_out, c_in)),
        w2=rng.uniform(-s, s, size=(c_out, c_in)),
        # small positive bias keeps all-zero feature rows off the exact
        # ReLU kink (z = bias when the input row is fully clipped)
        bias=np.full(c_out, 0.01),
    )


def _canonical_members(regions: RegionTable) -> tuple[np.ndarray, np.ndarray]:
    """Region members sorted ascending per row (canonical accumulation
    order), with a boolean validity mask. Padding sorts last."""
    big = regions.num_faces + 1
    m = np.where(regions.members < 0, big, regions.members)
    m = np.sort(m, axis=1)
    valid = m < big
    return np.where(valid, m, 0), valid


def _gather_sums(features: np.ndarray, regions: RegionTable):
    idx, valid = _canonical_members(regions)
    gathered = features[idx] * valid[:, :, None]          # (F, K, C)
    s1 = gathered.sum(axis=1)
    diff = np.where(valid[:, :, None], features[:, None, :] - gathered, 0.0)
    s2 = np.abs(diff).sum(axis=1)
    return idx, valid, diff, s1, s2


def conv_forward(features: np.ndarray, regions: RegionTable, params: ConvParams,
                 activation: bool = True, normalize: bool = False,
                 return_cache: bool = False):
    """Apply the three-term convolution; optionally keep a backward cache."""
    if features.shape[0] != regions.num_faces:
        raise ValueError("features row count does not match region table")
    if features.shape[1] != params.in_channels:
        raise ValueError("feature channels do not match conv params")
    idx, valid, diff, s1, s2 = _gather_sums(features, regions)
    if normalize:
        denom = np.maximum(regions.counts, 1).astype(np.float64)[:, None]
        s1, s2 = s1 / denom, s2 / denom
    z = features @ params.w0.T + s1 @ params.w1.T + s2 @ params.w2.T + params.bias
    out = np.maximum(z, 0.0) if activation else z
    if return_cache:
        return out, {"idx": idx, "valid": valid, "diff": diff, "s1": s1,
                     "s2": s2, "z": z, "normalize": normalize}
    return out


def conv_backward(features: np.ndarray, regions: RegionTable, params: ConvParams,
                  grad_out: np.ndarray, activation: bool = True,
                  normalize: bool = False, cache: dict | None = None):
    """Adjoint of conv_forward.

    Returns (grad_features, grad_params). The |x| subgradient at 0 is 0.
    """
    if grad_out.shape != (features.shape[0], params.out_channels):
        raise ValueError("grad_out shape mismatch")
    if cache is None:
        _, cache = conv_forward(features, regions, params, activation=activation,
                                normalize=normalize, return_cache=True)
    idx, valid, diff = cache["idx"], cache["valid"], cache["diff"]
    s1, s2, z = cache["s1"], cache["s2"], cache["z"]
    gz = grad_out * (z > 0) if activation else grad_out

    grad_w0 = gz.T @ features
    grad_w1 = gz.T @ s1
    grad_w2 = gz.T @ s2
    grad_bias = gz.sum(axis=0)

    h1 = gz @ params.w1   # (F, C_in) pull-back of the neighbor sum
    h2 = gz @ params.w2   # pull-back of the abs-diff sum
    if normalize:
        denom = np.maximum(regions.counts, 1).astype(np.float64)[:, None]
        h1, h2 = h1 / denom, h2 / denom
    sign = np.sign(diff)                                   # (F, K, C_in)
    grad_features = gz @ params.w0
    grad_features += h2 * sign.sum(axis=1)
    scatter = (h1[:, None, :] - h2[:, None, :] * sign) * valid[:, :, None]
    np.add.at(grad_features, idx.ravel(), scatter.reshape(-1, features.shape[1]))
    return grad_features, ConvParams(grad_w0, grad_w1, grad_w2, grad_bias)
