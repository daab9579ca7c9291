"""Undirected spatial adjacency graph and the edge-count queries used by the
partition prior.

The graph is immutable after construction: adjacency is stored both as a set
of index pairs (for edge counting) and as per-vertex neighbor sets (for the
incremental neighbor queries in the sampler's hot loop).
"""

from __future__ import annotations

import warnings
from typing import Iterable, Optional, Sequence

from .errors import ParseError, ValidationError


class SpatialGraph:
    """Undirected graph over ``n_locations`` dense indices ``0..N-1``.

    Parameters
    ----------
    n_locations : int
        Number of vertices, must be positive.
    edges : iterable of (int, int)
        Undirected edges; pairs are normalized to ``a < b`` and deduplicated.
        Self-loops are rejected.
    labels : sequence of str, optional
        Original location names, index-aligned.
    """

    def __init__(self, n_locations: int, edges: Iterable[tuple[int, int]],
                 labels: Optional[Sequence[str]] = None):
        n = int(n_locations)
        if n <= 0:
            raise ValidationError(f"n_locations must be positive, got {n_locations}")
        norm = set()
        for a, b in edges:
            a, b = int(a), int(b)
            if a == b:
                raise ValidationError(f"self-loop at vertex {a}")
            if not (0 <= a < n and 0 <= b < n):
                raise ValidationError(f"edge ({a},{b}) out of range [0,{n})")
            norm.add((a, b) if a < b else (b, a))
        if labels is not None:
            labels = tuple(str(s) for s in labels)
            if len(labels) != n:
                raise ValidationError(
                    f"got {len(labels)} labels for {n} locations")
        self.n_locations = n
        self.edges = frozenset(norm)
        self.labels = labels
        nbr = [set() for _ in range(n)]
        for a, b in self.edges:
            nbr[a].add(b)
            nbr[b].add(a)
        self._neighbor_sets = tuple(frozenset(s) for s in nbr)
        self.neighbor_lists = tuple(tuple(sorted(s)) for s in nbr)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def neighbors(self, i: int) -> frozenset:
        self._check_index(i)
        return self._neighbor_sets[i]

    def degree(self, i: int) -> int:
        return len(self.neighbors(i))

    def isolated(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.n_locations) if not self._neighbor_sets[i])

    def _check_index(self, i) -> None:
        if not (0 <= int(i) < self.n_locations):
            raise ValidationError(
                f"location index {i} out of range [0,{self.n_locations})")

    def within_cluster_edges(self, cluster: Iterable[int]) -> int:
        """Number of edges with both endpoints inside ``cluster``."""
        members = set(int(i) for i in cluster)
        for i in members:
            self._check_index(i)
        total = 0
        for i in members:
            total += len(self._neighbor_sets[i] & members)
        return total // 2

    def neighbors_in(self, i: int, cluster: Iterable[int]) -> int:
        """Number of graph neighbors of ``i`` inside ``cluster`` (``i``
        itself never counts: the graph has no self-loops)."""
        self._check_index(i)
        members = (cluster if isinstance(cluster, (set, frozenset))
                   else set(int(j) for j in cluster))
        if members and not (0 <= min(members) and max(members) < self.n_locations):
            raise ValidationError(
                f"cluster indices out of range [0,{self.n_locations})")
        return len(self._neighbor_sets[int(i)] & members)

    def __eq__(self, other):
        return (isinstance(other, SpatialGraph)
                and self.n_locations == other.n_locations
                and self.edges == other.edges)

    def __hash__(self):
        return hash((self.n_locations, self.edges))

    def __repr__(self):
        return f"SpatialGraph(n_locations={self.n_locations}, n_edges={self.n_edges})"


def load_adjacency(path) -> SpatialGraph:
    """Read an adjacency file into a :class:`SpatialGraph`.

    File format: UTF-8 text, ``#`` starts a comment, blank lines ignored.
    An optional first content line ``vertices: id1,id2,...`` fixes the index
    order and may declare isolated locations. Every other content line holds
    one whitespace-separated pair ``idA idB``. Identifiers not listed in an
    explicit vertex list are an error when that list is present; otherwise
    indices are assigned in first-appearance order.
    """
    index: dict[str, int] = {}
    explicit = False
    edges: list[tuple[int, int]] = []
    with open(path, "r", encoding="utf-8") as fh:
        first_content = True
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if first_content and line.lower().startswith("vertices:"):
                explicit = True
                names = [s.strip() for s in line.split(":", 1)[1].split(",")]
                names = [s for s in names if s]
                if not names:
                    raise ParseError("empty vertex list", line_no)
                for name in names:
                    if name in index:
                        raise ParseError(f"duplicate vertex {name!r}", line_no)
                    index[name] = len(index)
                first_content = False
                continue
            first_content = False
            parts = line.split()
            if len(parts) != 2:
                raise ParseError(
                    f"expected two identifiers, got {len(parts)}: {line!r}", line_no)
            a_name, b_name = parts
            if a_name == b_name:
                raise ValidationError(
                    f"line {line_no}: self-loop on {a_name!r}")
            pair = []
            for name in (a_name, b_name):
                if name not in index:
                    if explicit:
                        raise ValidationError(
                            f"line {line_no}: unknown identifier {name!r} "
                            "not in the declared vertex list")
                    index[name] = len(index)
                pair.append(index[name])
            edges.append((pair[0], pair[1]))
    if not index:
        raise ParseError(f"no vertices found in {path}")
    labels = [None] * len(index)
    for name, i in index.items():
        labels[i] = name
    g = SpatialGraph(len(index), edges, labels=labels)
    iso = g.isolated()
    if iso:
        names = ", ".join(labels[i] for i in iso)
        warnings.warn(f"isolated locations in {path}: {names}", stacklevel=2)
    return g
