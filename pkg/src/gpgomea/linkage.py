"""Linkage-tree family of subsets learned from pairwise mutual information."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "N_CONST_BINS",
    "LinkageTree",
    "discretize_population",
    "pairwise_mi",
    "build_linkage_tree",
    "learn_linkage_tree",
]

N_CONST_BINS = 25
# MI values equal up to summation-order noise count as ties
TIE_TOL = 1e-12


@dataclass(frozen=True)
class LinkageTree:
    subsets: tuple[tuple[int, ...], ...]

    def __len__(self):
        return len(self.subsets)

    def __iter__(self):
        return iter(self.subsets)


def discretize_population(pop, n_bins: int = N_CONST_BINS) -> np.ndarray:
    """Category matrix of shape (node_count, pop_size).

    Non-constant symbols keep their opset code. Constants are binned into
    ``n_bins`` equal-width bins over the range observed in the whole
    population; each bin becomes one extra category.
    """
    genos = [getattr(p, "genotype", p) for p in pop]
    if not genos:
        raise ValueError("empty population")
    opset = genos[0].opset
    codes = np.array([g.codes for g in genos], dtype=np.int64).T
    consts = np.array([g.consts for g in genos], dtype=np.float64).T
    is_const = np.array([s.is_constant for s in opset.symbols])[codes]
    cats = codes.copy()
    if is_const.any():
        vals = consts[is_const]
        lo, hi = vals.min(), vals.max()
        if hi > lo:
            bins = np.floor(n_bins * (vals - lo) / (hi - lo)).astype(np.int64)
            bins = np.clip(bins, 0, n_bins - 1)
        else:
            bins = np.zeros(len(vals), dtype=np.int64)
        cats[is_const] = len(opset.symbols) + bins
    return cats


def _entropy_from_counts(counts: np.ndarray, total: int) -> np.ndarray:
    p = counts / total
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(counts > 0, -p * np.log(np.where(counts > 0, p, 1.0)), 0.0)
    return terms.sum(axis=-1)


def pairwise_mi(cats: np.ndarray) -> np.ndarray:
    """Plug-in mutual information (natural log) between every pair of rows."""
    cats = np.asarray(cats)
    n, m = cats.shape
    if m < 2:
        raise ValueError("need at least two individuals")
    # relabel each row to 0..k_i-1
    dense = np.empty_like(cats)
    ks = np.empty(n, dtype=np.int64)
    for i in range(n):
        _, inv = np.unique(cats[i], return_inverse=True)
        dense[i] = inv
        ks[i] = inv.max() + 1
    kmax = int(ks.max())
    h = _entropy_from_counts(
        np.stack([np.bincount(dense[i], minlength=kmax) for i in range(n)]), m)
    mi = np.zeros((n, n))
    offsets = np.arange(n)[:, None] * (kmax * kmax)
    for i in range(n - 1):
        rest = dense[i + 1:]
        joint = dense[i][None, :] * kmax + rest + offsets[: n - i - 1]
        counts = np.bincount(joint.ravel(), minlength=(n - i - 1) * kmax * kmax)
        hij = _entropy_from_counts(counts.reshape(n - i - 1, kmax * kmax), m)
        row = h[i] + h[i + 1:] - hij
        mi[i, i + 1:] = row
        mi[i + 1:, i] = row
    np.maximum(mi, 0.0, out=mi)
    mi[np.diag_indices(n)] = h
    return mi


def build_linkage_tree(mi: np.ndarray, rng) -> LinkageTree:
    """UPGMA on similarity: merge the pair with the largest average MI.

    Ties are broken uniformly at random. Returns all singletons followed by
    every merged cluster in merge order, ending with the full set.
    """
    mi = np.asarray(mi, dtype=np.float64)
    n = mi.shape[0]
    subsets = [(i,) for i in range(n)]
    if n == 1:
        return LinkageTree(tuple(subsets))
    sim = (mi + mi.T) / 2  # exact for symmetric input
    np.fill_diagonal(sim, -np.inf)
    clusters: list[tuple[int, ...] | None] = [(i,) for i in range(n)]
    sizes = np.ones(n)
    for _ in range(n - 1):
        best = sim.max()
        ii, jj = np.nonzero(np.triu(sim >= best - TIE_TOL, 1))
        pick = int(rng.integers(len(ii))) if len(ii) > 1 else 0
        a, b = int(ii[pick]), int(jj[pick])
        merged = tuple(sorted(clusters[a] + clusters[b]))
        subsets.append(merged)
        # weighted average keeps every entry the mean over member pairs
        new = (sizes[a] * sim[a] + sizes[b] * sim[b]) / (sizes[a] + sizes[b])
        sim[a] = new
        sim[:, a] = new
        sim[a, a] = -np.inf
        sim[b] = -np.inf
        sim[:, b] = -np.inf
        sizes[a] += sizes[b]
        clusters[a], clusters[b] = merged, None
    return LinkageTree(tuple(subsets))


def learn_linkage_tree(pop, rng) -> LinkageTree:
    return build_linkage_tree(pairwise_mi(discretize_population(pop)), rng)
