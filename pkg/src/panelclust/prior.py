"""Partition prior: finite-mixture coefficient series and graph cost.

The prior over partitions is, up to normalization,

    score(C) = V_N(|C|) * prod_c  gamma^(|c|) * exp(lam * E_c)

where ``gamma^(m)`` is the rising factorial, ``E_c`` the number of graph
edges inside cluster ``c``, and ``V_N(t)`` the coefficient series of a finite
mixture with a prior on the number of components,

    V_N(t) = sum_k  k_(t) / (gamma*k)^(N) * p_K(k),

with falling factorial ``k_(t)`` (zero for k < t). All scores are kept in the
log domain; the series is evaluated via log-gamma with a relative-tail
truncation rule.

The graph cost is pluggable: any object exposing ``lam``,
``log_cluster_cost(members)`` and ``log_join_gain(i, members)`` can replace
:class:`MrfCohesion` (for instance to experiment with other Markov cost
functions). An optional parameter tilt hook ``log_param_tilt`` is accepted by
the interface but no shipped instance uses it; all computations here are
ratio-based and never materialize the prior's normalizing constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.special import gammaln

from .errors import ValidationError
from .graph import SpatialGraph
from .partition import Partition

_LOG_TAIL = math.log(1e-15)
_TAIL_RUN = 5
_K_HARD_CAP = 1_000_000


def _log_pmf_shifted_poisson(rate: float) -> Callable[[int], float]:
    # p(k) = rate^(k-1) e^-rate / (k-1)!  for k >= 1
    def log_pmf(k: int) -> float:
        return (k - 1) * math.log(rate) - rate - math.lgamma(k)
    return log_pmf


def _log_pmf_truncated_poisson(rate: float) -> Callable[[int], float]:
    # Poisson(rate) conditioned on k >= 1
    log_norm = math.log1p(-math.exp(-rate))
    def log_pmf(k: int) -> float:
        return k * math.log(rate) - rate - math.lgamma(k + 1) - log_norm
    return log_pmf


K_PRIORS = {
    "shifted_poisson": _log_pmf_shifted_poisson,
    "truncated_poisson": _log_pmf_truncated_poisson,
}


def _series_log_vn(gamma: float, n: int, t: int, log_pmf) -> float:
    """log V_n(t) by direct summation over k >= t."""
    if not 1 <= t <= n:
        raise ValidationError(f"need 1 <= t <= n, got t={t}, n={n}")
    log_sum = -np.inf
    run = 0
    for k in range(t, _K_HARD_CAP):
        log_term = (gammaln(k + 1.0) - gammaln(k - t + 1.0)
                    - gammaln(gamma * k + n) + gammaln(gamma * k)
                    + log_pmf(k))
        log_sum = np.logaddexp(log_sum, log_term)
        if log_term - log_sum < _LOG_TAIL:
            run += 1
            if run >= _TAIL_RUN:
                break
        else:
            run = 0
    return float(log_sum)


class MfmPrior:
    """Mixture-of-finite-mixtures partition prior component.

    Parameters
    ----------
    gamma : float
        Symmetric Dirichlet weight, positive.
    n_locations : int
        Number of items being partitioned; ``log V_N(t)`` is tabulated
        eagerly for t = 1..N and immutable afterwards.
    k_prior : str
        Prior on the number of components: ``"shifted_poisson"`` (default,
        p(k) = rate^(k-1) e^-rate / (k-1)!) or ``"truncated_poisson"``
        (Poisson conditioned on k >= 1).
    k_rate : float
        Rate of the Poisson, default 10.
    """

    def __init__(self, gamma: float = 1.0, n_locations: int = 1,
                 k_prior: str = "shifted_poisson", k_rate: float = 10.0):
        if gamma <= 0:
            raise ValidationError(f"gamma must be positive, got {gamma}")
        if k_prior not in K_PRIORS:
            raise ValidationError(
                f"unknown k_prior {k_prior!r}; choose from {sorted(K_PRIORS)}")
        if k_rate <= 0:
            raise ValidationError(f"k_rate must be positive, got {k_rate}")
        n_locations = int(n_locations)
        if n_locations < 1:
            raise ValidationError("n_locations must be >= 1")
        self.gamma = float(gamma)
        self.n_locations = n_locations
        self.k_prior = k_prior
        self.k_rate = float(k_rate)
        self._log_pmf = K_PRIORS[k_prior](self.k_rate)
        self._check_pmf_mass()
        self._vn_table = tuple(
            _series_log_vn(self.gamma, n_locations, t, self._log_pmf)
            for t in range(1, n_locations + 1))

    def _check_pmf_mass(self) -> None:
        total = -np.inf
        run = 0
        for k in range(1, _K_HARD_CAP):
            lp = self._log_pmf(k)
            total = np.logaddexp(total, lp)
            if lp - total < _LOG_TAIL:
                run += 1
                if run >= _TAIL_RUN:
                    break
            else:
                run = 0
        if abs(math.exp(total) - 1.0) > 1e-12:
            raise ValidationError(
                f"k_prior mass sums to {math.exp(total)!r}, expected 1")

    def log_k_pmf(self, k: int) -> float:
        return self._log_pmf(k) if k >= 1 else -np.inf

    def log_vn(self, t: int, n: Optional[int] = None) -> float:
        """log V_n(t); cached for ``n == n_locations``, recomputed otherwise."""
        if n is None or n == self.n_locations:
            if not 1 <= t <= self.n_locations:
                raise ValidationError(
                    f"need 1 <= t <= {self.n_locations}, got t={t}")
            return self._vn_table[t - 1]
        return _series_log_vn(self.gamma, int(n), int(t), self._log_pmf)

    def log_rising(self, size: int) -> float:
        """log gamma^(size), the rising factorial of the Dirichlet weight."""
        return float(gammaln(self.gamma + size) - gammaln(self.gamma))

    def __repr__(self):
        return (f"MfmPrior(gamma={self.gamma}, n_locations={self.n_locations}, "
                f"k_prior={self.k_prior!r}, k_rate={self.k_rate})")


@dataclass(frozen=True)
class MrfCohesion:
    """Exponential edge-count graph cost ``exp(lam * E_c)``.

    ``lam = 0`` removes all graph dependence and reduces the prior exactly
    to the plain finite-mixture partition prior.
    """

    lam: float
    graph: SpatialGraph
    # Optional tilt on cluster parameters; accepted by the cohesion
    # interface for extensions, unused by the shipped model (tilt = 1).
    log_param_tilt: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if self.lam < 0:
            raise ValidationError(f"lam must be >= 0, got {self.lam}")

    def log_cluster_cost(self, members: Iterable[int]) -> float:
        if self.lam == 0.0:
            return 0.0
        return self.lam * self.graph.within_cluster_edges(members)

    def log_join_gain(self, i: int, members: Iterable[int]) -> float:
        """Log cost increment from adding ``i`` to the cluster (Markov form)."""
        if self.lam == 0.0:
            return 0.0
        return self.lam * self.graph.neighbors_in(i, members)


def log_prior_score(partition: Partition, mfm: MfmPrior,
                    mrf: Optional[MrfCohesion] = None) -> float:
    """Unnormalized log prior of a partition.

    ``log V_N(|C|) + sum_c [log gamma^(|c|) + lam * E_c]``; pass
    ``mrf=None`` (or ``lam=0``) for the plain mixture prior.
    """
    if mrf is not None and partition.n != mrf.graph.n_locations:
        raise ValidationError(
            f"partition over {partition.n} items vs graph with "
            f"{mrf.graph.n_locations} locations")
    score = mfm.log_vn(partition.n_clusters, n=partition.n)
    for block in partition.blocks:
        score += mfm.log_rising(len(block))
        if mrf is not None:
            score += mrf.log_cluster_cost(block)
    return score


def conditional_log_weights(
        clusters: Sequence[Iterable[int]], i: int, mfm: MfmPrior,
        mrf: Optional[MrfCohesion] = None) -> tuple[list[float], float]:
    """Log reassignment weights for item ``i`` given the partition of the rest.

    Returns ``(existing, new)`` where ``existing[j]`` is the log weight of
    joining ``clusters[j]`` and ``new`` the log weight of opening a cluster:

        existing cluster c : lam * |neighbors(i) & c| + log(|c| + gamma)
        new cluster        : log gamma + log V_N(t+1) - log V_N(t)

    with ``t = len(clusters)`` and ``N = t_items + 1`` the total item count.
    The ``gamma`` factor on the new-cluster weight makes these exactly the
    conditionals of :func:`log_prior_score` for every ``gamma`` (it is
    invisible at the default ``gamma = 1``).
    """
    t = len(clusters)
    if t < 1:
        raise ValidationError("need at least one existing cluster")
    i = int(i)
    existing = []
    n_rest = 0
    for c in clusters:
        members = (c if isinstance(c, (set, frozenset))
                   else set(int(j) for j in c))
        if i in members:
            raise ValidationError(f"item {i} already assigned")
        n_rest += len(members)
        lw = math.log(len(members) + mfm.gamma)
        if mrf is not None:
            lw += mrf.log_join_gain(i, members)
        existing.append(lw)
    n_total = n_rest + 1
    new = (math.log(mfm.gamma)
           + mfm.log_vn(t + 1, n=n_total) - mfm.log_vn(t, n=n_total))
    return existing, new


def conditional_weights(
        clusters: Sequence[Iterable[int]], i: int, mfm: MfmPrior,
        mrf: Optional[MrfCohesion] = None) -> list[tuple[Optional[int], float]]:
    """Reassignment weights on the natural scale.

    One ``(cluster_index, weight)`` pair per existing cluster plus a final
    ``(None, weight)`` entry for opening a new cluster. Ratios of these
    weights equal ratios of the joint prior of the completed partitions.
    """
    existing, new = conditional_log_weights(clusters, i, mfm, mrf)
    out: list[tuple[Optional[int], float]] = [
        (j, math.exp(lw)) for j, lw in enumerate(existing)]
    out.append((None, math.exp(new)))
    return out
