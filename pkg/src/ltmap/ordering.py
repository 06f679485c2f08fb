"""Site orderings, neighborhood stencils, and conditioning-set analysis.

A triangular map needs a bijective labeling of lattice sites.  Three
orderings are provided: lexicographic (row-major), checkerboard (even-parity
sites first), and greedy max-min distance.  Sparse conditioning sets restrict
each site's parents to a periodic stencil of earlier-labeled neighbors; exact
dependency sets come from symbolic graph elimination and quantify the fill-in
incurred when later sites are marginalized out.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .lattice import LatticeGeometry

__all__ = [
    "Ordering",
    "NeighborhoodSpec",
    "ConditioningSets",
    "FillInRow",
    "ORDERING_NAMES",
    "lexicographic_ordering",
    "checkerboard_ordering",
    "maxmin_ordering",
    "make_ordering",
    "neighborhood",
    "conditioning_sets",
    "dense_conditioning_sets",
    "eliminate_graph",
    "exact_dependency_sets",
    "fill_in_stats",
    "fill_in_csv",
]

ORDERING_NAMES = ("lexicographic", "checkerboard", "maxmin")


@dataclass(frozen=True)
class Ordering:
    """A bijective site labeling: perm[k] = site with label k, inv[site] = its label."""

    perm: np.ndarray
    inv: np.ndarray

    def __post_init__(self):
        perm = np.asarray(self.perm, dtype=np.intp)
        n = perm.size
        if not np.array_equal(np.sort(perm), np.arange(n)):
            raise ValueError("perm is not a permutation of 0..N-1")
        inv = np.asarray(self.inv, dtype=np.intp)
        if not np.array_equal(inv[perm], np.arange(n)):
            raise ValueError("inv is not the inverse of perm")
        perm.setflags(write=False)
        inv.setflags(write=False)
        object.__setattr__(self, "perm", perm)
        object.__setattr__(self, "inv", inv)

    @property
    def n_sites(self) -> int:
        return self.perm.size


def _ordering_from_perm(perm: np.ndarray) -> Ordering:
    perm = np.asarray(perm, dtype=np.intp)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)
    return Ordering(perm=perm, inv=inv)


def lexicographic_ordering(geom: LatticeGeometry) -> Ordering:
    """Row-major labeling: label k is site k."""
    return _ordering_from_perm(np.arange(geom.N))


def checkerboard_ordering(geom: LatticeGeometry) -> Ordering:
    """Even-parity sites first, then odd-parity, each block row-major.

    Parity is sum of coordinates mod 2.  Requires even L so that the two
    classes have equal size and the lattice graph is bipartite under wrap.
    """
    if geom.L % 2 != 0:
        raise ValueError("checkerboard ordering requires even L")
    shape = (geom.L,) * geom.D
    coords = np.stack(np.unravel_index(np.arange(geom.N), shape), axis=1)
    parity = coords.sum(axis=1) % 2
    sites = np.arange(geom.N)
    return _ordering_from_perm(np.concatenate([sites[parity == 0], sites[parity == 1]]))


def periodic_sq_distance(a: int, b: int, geom: LatticeGeometry) -> int:
    """Squared Euclidean distance on the torus between two sites."""
    shape = (geom.L,) * geom.D
    ca = np.array(np.unravel_index(a, shape))
    cb = np.array(np.unravel_index(b, shape))
    d = np.abs(ca - cb)
    d = np.minimum(d, geom.L - d)
    return int(np.sum(d * d))


def maxmin_ordering(geom: LatticeGeometry, start_site: int = 0) -> Ordering:
    """Greedy max-min labeling: each new label goes to the remaining site
    farthest (periodic squared distance) from all already-labeled sites.

    Ties broken by smallest site index, so the result is deterministic.
    """
    if not 0 <= start_site < geom.N:
        raise ValueError(f"start_site {start_site} outside [0, {geom.N})")
    shape = (geom.L,) * geom.D
    coords = np.stack(np.unravel_index(np.arange(geom.N), shape), axis=1)

    def sq_dist_to(site):
        d = np.abs(coords - coords[site])
        d = np.minimum(d, geom.L - d)
        return np.sum(d * d, axis=1)

    perm = np.empty(geom.N, dtype=np.intp)
    perm[0] = start_site
    mind = sq_dist_to(start_site)
    mind[start_site] = -1  # mark chosen; real distances are >= 0
    for k in range(1, geom.N):
        nxt = int(np.argmax(mind))  # argmax takes the smallest index on ties
        perm[k] = nxt
        mind = np.minimum(mind, sq_dist_to(nxt))
        mind[nxt] = -1
    return _ordering_from_perm(perm)


def make_ordering(name: str, geom: LatticeGeometry, start_site: int = 0) -> Ordering:
    """Construct an ordering by name: lexicographic, checkerboard, or maxmin."""
    if name == "lexicographic":
        return lexicographic_ordering(geom)
    if name == "checkerboard":
        return checkerboard_ordering(geom)
    if name == "maxmin":
        return maxmin_ordering(geom, start_site=start_site)
    raise ValueError(f"unknown ordering {name!r}; expected one of {ORDERING_NAMES}")


@dataclass(frozen=True)
class NeighborhoodSpec:
    """Cumulative stencil order: 1 = nearest neighbors, 2 adds diagonals,
    3 adds knight moves."""

    order: int = 1

    # squared offset norms admitted at each order
    _NORMS = {1: (1,), 2: (1, 2), 3: (1, 2, 5)}

    def __post_init__(self):
        if self.order not in self._NORMS:
            raise ValueError(f"neighborhood order must be in {sorted(self._NORMS)}")

    def offsets(self, D: int) -> np.ndarray:
        """All integer offsets in {-2..2}^D whose squared norm is admitted."""
        norms = self._NORMS[self.order]
        offs = [o for o in itertools.product(range(-2, 3), repeat=D)
                if sum(c * c for c in o) in norms]
        return np.array(sorted(offs), dtype=np.intp)


def neighborhood(site: int, spec: NeighborhoodSpec, geom: LatticeGeometry) -> set:
    """Stencil neighbors of a site under periodic wrap (self excluded,
    duplicates collapsed when L is small)."""
    if not 0 <= site < geom.N:
        raise ValueError(f"site {site} outside [0, {geom.N})")
    shape = (geom.L,) * geom.D
    base = np.array(np.unravel_index(site, shape))
    wrapped = (base + spec.offsets(geom.D)) % geom.L
    ids = set(np.ravel_multi_index(wrapped.T, shape).tolist())
    ids.discard(site)
    return ids


@dataclass(frozen=True)
class ConditioningSets:
    """Per-label parent sets: sets[j] lists the labels (< j, ascending) that
    label j's site conditions on."""

    sets: tuple

    def __post_init__(self):
        sets = tuple(np.asarray(s, dtype=np.intp) for s in self.sets)
        for j, s in enumerate(sets):
            if s.size and (s.max() >= j or s.min() < 0):
                raise ValueError(f"set {j} contains labels outside [0, {j})")
            if s.size and np.any(np.diff(s) <= 0):
                raise ValueError(f"set {j} is not sorted ascending without duplicates")
            s.setflags(write=False)
        object.__setattr__(self, "sets", sets)

    @property
    def n_sites(self) -> int:
        return len(self.sets)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([s.size for s in self.sets])

    @property
    def total_size(self) -> int:
        return int(self.sizes.sum())


def conditioning_sets(ordering: Ordering, spec: NeighborhoodSpec,
                      geom: LatticeGeometry) -> ConditioningSets:
    """Sparse parents: stencil neighbors of each site with earlier labels."""
    if ordering.n_sites != geom.N:
        raise ValueError("ordering and geometry disagree on site count")
    sets = []
    for j in range(geom.N):
        labels = ordering.inv[sorted(neighborhood(int(ordering.perm[j]), spec, geom))]
        sets.append(np.sort(labels[labels < j]))
    return ConditioningSets(sets=tuple(sets))


def dense_conditioning_sets(n_sites: int) -> ConditioningSets:
    """Full-past parents: sets[j] = {0, ..., j-1}."""
    return ConditioningSets(sets=tuple(np.arange(j) for j in range(n_sites)))


def eliminate_graph(adjacency, perm) -> ConditioningSets:
    """Symbolic elimination of an undirected graph in reverse label order.

    `adjacency` maps each vertex to an iterable of its neighbors; `perm` is
    the labeling (perm[k] = vertex with label k).  Vertices are eliminated
    from the highest label down; eliminating a vertex connects all of its
    remaining lower-labeled neighbors pairwise.  The returned sets[j] are the
    lower labels adjacent to label j in the filled graph, i.e. the variables
    the exact conditional of label j depends on after all later labels are
    marginalized out of a distribution with this Markov structure.
    """
    perm = np.asarray(perm, dtype=np.intp)
    n = perm.size
    inv = np.empty(n, dtype=np.intp)
    inv[perm] = np.arange(n)
    # work in label space: lbl_adj[j] = labels adjacent to label j
    lbl_adj = [set() for _ in range(n)]
    for v, nbrs in adjacency.items():
        for w in nbrs:
            if v != w:
                lbl_adj[inv[v]].add(int(inv[w]))
                lbl_adj[inv[w]].add(int(inv[v]))
    sets = []
    for j in range(n - 1, -1, -1):
        lower = sorted(k for k in lbl_adj[j] if k < j)
        sets.append(np.array(lower, dtype=np.intp))
        for a, b in itertools.combinations(lower, 2):
            lbl_adj[a].add(b)
            lbl_adj[b].add(a)
    return ConditioningSets(sets=tuple(reversed(sets)))


def exact_dependency_sets(ordering: Ordering, geom: LatticeGeometry) -> ConditioningSets:
    """Exact parents of each conditional under the lattice Markov structure.

    The action couples only nearest neighbors, so the joint density factors
    over lattice bonds; eliminating sites in reverse label order yields, for
    each label j, every earlier label its exact conditional can depend on.
    """
    if ordering.n_sites != geom.N:
        raise ValueError("ordering and geometry disagree on site count")
    adjacency = {v: set(geom.neighbor_table[v].tolist()) - {v} for v in range(geom.N)}
    return eliminate_graph(adjacency, ordering.perm)


@dataclass(frozen=True)
class FillInRow:
    ordering: str
    L: int
    avg_sparse: float
    avg_exact: float
    fill_ratio: float


def fill_in_stats(ordering_names, sizes, D: int = 2) -> list:
    """Average order-1 sparse and exact parent-set sizes per (ordering, L).

    fill_ratio = (total exact - total sparse) / N^2 measures the density of
    marginalization-induced dependencies relative to a fully dense map.
    """
    spec = NeighborhoodSpec(order=1)
    rows = []
    for name in ordering_names:
        for L in sizes:
            if L < 3:
                raise ValueError("lattice sizes below 3 not supported here")
            geom = LatticeGeometry(L=L, D=D)
            ordering = make_ordering(name, geom)
            sparse = conditioning_sets(ordering, spec, geom).total_size
            exact = exact_dependency_sets(ordering, geom).total_size
            rows.append(FillInRow(
                ordering=name, L=L,
                avg_sparse=sparse / geom.N,
                avg_exact=exact / geom.N,
                fill_ratio=(exact - sparse) / geom.N**2,
            ))
    return rows


def fill_in_csv(rows) -> str:
    """CSV text for fill-in rows, with header."""
    lines = ["ordering,L,avg_sparse,avg_exact,fill_ratio"]
    for r in rows:
        lines.append(f"{r.ordering},{r.L},{r.avg_sparse:.6g},{r.avg_exact:.6g},{r.fill_ratio:.6g}")
    return "\n".join(lines) + "\n"
