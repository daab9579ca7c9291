"""Set partitions of ``[N]`` with canonical labels.

Cluster ids are relabeled by order of first appearance, so two partitions are
equal exactly when they induce the same grouping. This makes partitions
hashable and directly comparable, which the posterior summaries and the
small-N enumeration oracles rely on.
"""

from __future__ import annotations

from typing import Iterable, Iterator

from .errors import ValidationError


def canonical_labels(labels: Iterable[int]) -> tuple[int, ...]:
    """Relabel cluster ids by first appearance: [2,2,5,2,1] -> (0,0,1,0,2)."""
    seen: dict[int, int] = {}
    out = []
    for lab in labels:
        lab = int(lab)
        if lab not in seen:
            seen[lab] = len(seen)
        out.append(seen[lab])
    return tuple(out)


class Partition:
    """Immutable partition of ``{0,...,n-1}`` with canonical cluster ids."""

    __slots__ = ("labels", "_blocks")

    def __init__(self, labels: Iterable[int]):
        self.labels = canonical_labels(labels)
        if not self.labels:
            raise ValidationError("partition of zero elements")
        k = max(self.labels) + 1
        blocks: list[list[int]] = [[] for _ in range(k)]
        for i, lab in enumerate(self.labels):
            blocks[lab].append(i)
        self._blocks = tuple(frozenset(b) for b in blocks)

    @classmethod
    def from_labels(cls, labels: Iterable[int]) -> "Partition":
        return cls(labels)

    @classmethod
    def singletons(cls, n: int) -> "Partition":
        return cls(range(n))

    @classmethod
    def one_block(cls, n: int) -> "Partition":
        return cls([0] * n)

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def n_clusters(self) -> int:
        return len(self._blocks)

    @property
    def blocks(self) -> tuple[frozenset, ...]:
        """Clusters ordered by canonical id (first appearance)."""
        return self._blocks

    def members(self, cluster_id: int) -> frozenset:
        return self._blocks[cluster_id]

    def cluster_of(self, i: int) -> int:
        return self.labels[i]

    def __eq__(self, other):
        return isinstance(other, Partition) and self.labels == other.labels

    def __hash__(self):
        return hash(self.labels)

    def __repr__(self):
        return f"Partition({list(self.labels)})"


def iter_partitions(n: int) -> Iterator[Partition]:
    """Yield every set partition of ``[n]`` exactly once.

    Enumerates restricted growth strings: a[0] = 0 and
    a[i] <= 1 + max(a[0..i-1]).
    """
    if n <= 0:
        raise ValidationError(f"n must be positive, got {n}")
    a = [0] * n
    while True:
        yield Partition(a)
        # advance to the next restricted growth string
        i = n - 1
        while i > 0:
            prefix_max = max(a[:i])
            if a[i] <= prefix_max:
                a[i] += 1
                for j in range(i + 1, n):
                    a[j] = 0
                break
            i -= 1
        else:
            return
