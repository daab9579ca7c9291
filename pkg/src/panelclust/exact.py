"""Exact small-N enumeration utilities.

Test-support namespace: brute-force normalizations over all set partitions,
used as oracles for the prior, the Gibbs conditionals, and the sampler's
stationary distribution. Enumeration is Bell-number exponential, so inputs
are capped at N <= 12 (Bell(12) = 4,213,597).
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from .errors import ValidationError
from .partition import Partition, iter_partitions
from .prior import MfmPrior, MrfCohesion, log_prior_score

_MAX_N = 12


def _check_size(n: int, max_n: int) -> None:
    if max_n > _MAX_N:
        raise ValidationError(f"max_n={max_n} exceeds the Bell-number cap {_MAX_N}")
    if n > max_n:
        raise ValidationError(
            f"refusing enumeration for N={n} > {max_n}: the number of set "
            f"partitions grows as the Bell numbers (Bell({_MAX_N}) ~ 4.2e6)")


def normalized_scores(n: int, log_score: Callable[[Partition], float],
                      max_n: int = _MAX_N) -> dict[Partition, float]:
    """Normalize ``exp(log_score)`` over every partition of ``[n]``."""
    _check_size(n, max_n)
    parts = list(iter_partitions(n))
    logs = np.array([log_score(p) for p in parts])
    probs = np.exp(logs - logs.max())
    probs /= probs.sum()
    return dict(zip(parts, probs))


def normalized_prior_small_n(mfm: MfmPrior, mrf: Optional[MrfCohesion],
                             max_n: int = _MAX_N) -> dict[Partition, float]:
    """Exactly normalized partition prior for small N."""
    n = mrf.graph.n_locations if mrf is not None else mfm.n_locations
    return normalized_scores(
        n, lambda p: log_prior_score(p, mfm, mrf), max_n=max_n)


def conditional_from_joint(joint: dict[Partition, float], i: int
                           ) -> dict[Partition, dict[Optional[int], float]]:
    """Conditional law of item ``i``'s assignment given the rest, from a joint.

    Returns, for each partition of the remaining items (re-indexed over
    ``[N-1]`` by dropping ``i``), a map from choice to probability. Choices
    are the index of an existing cluster of the reduced partition (in
    canonical order) or ``None`` for "own cluster".
    """
    out: dict[Partition, dict[Optional[int], float]] = {}
    for part, prob in joint.items():
        rest_labels = [lab for j, lab in enumerate(part.labels) if j != i]
        rest = Partition(rest_labels)
        own = part.members(part.cluster_of(i)) == frozenset([i])
        if own:
            choice: Optional[int] = None
        else:
            # index of i's cluster among the reduced partition's blocks
            target = part.members(part.cluster_of(i)) - {i}
            reduced = {j - 1 if j > i else j for j in target}
            choice = next(k for k, b in enumerate(rest.blocks) if b == reduced)
        out.setdefault(rest, {})
        out[rest][choice] = out[rest].get(choice, 0.0) + prob
    for rest, table in out.items():
        total = sum(table.values())
        for key in table:
            table[key] /= total
    return out


def bell_number(n: int) -> int:
    """Number of set partitions of [n], via the Bell triangle recurrence."""
    row = [1]
    for _ in range(n - 1):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
    return row[-1] if n >= 1 else 1
