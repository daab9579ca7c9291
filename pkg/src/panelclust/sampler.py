"""Posterior sampler for the graph-constrained panel clustering model.

Each iteration alternates two moves:

* Step 1 holds the partition fixed and refreshes every cluster's parameters:
  an exact normal-inverse-gamma draw of (beta, sigma2), then random-walk
  Metropolis updates of (alpha, ell) whose target integrates (beta, sigma2)
  out, repeated ``n_rep`` times per cluster. A final exact (beta, sigma2)
  draw after the loop keeps the stored parameters coherent with the final
  (alpha, ell), which the reassignment step conditions on.

* Step 2 holds the parameters fixed and sweeps the locations, removing each
  one and reassigning it among the existing clusters and ``m_aux`` auxiliary
  parameter pairs, each auxiliary pair carrying 1/m of the new-cluster mass.
  A removed singleton's (alpha, ell) is recycled as the first auxiliary pair.
  The new-cluster weight uses the (beta, sigma2)-integrated likelihood of the
  single location; on acceptance (beta, sigma2) are drawn from the singleton
  posterior at the chosen (alpha, ell).

A prior-only variant of the partition sweep (no data terms) drives the
marginal-likelihood estimator used for smoothness selection.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from . import streams
from .data import PanelData
from .errors import NumericalError, ValidationError
from .graph import SpatialGraph
from .likelihood import (ClusterParams, ClusterSuffStats, GramCache,
                         Hyperparams, cluster_suffstats, conditional_loglik,
                         draw_beta_sigma2, gamma_logpdf, integrated_loglik,
                         integrated_loglik_from_stats)
from .partition import Partition
from .prior import MfmPrior, MrfCohesion, conditional_log_weights, log_prior_score


@dataclass
class McmcConfig:
    """Sampler settings.

    ``n_rep`` inner parameter refreshes per cluster per iteration, ``m_aux``
    auxiliary (alpha, ell) pairs for new-cluster proposals, ``proposal_sd``
    the random-walk standard deviation for the Metropolis updates.
    ``fix_phi`` pins (alpha, ell) globally and disables their updates (a
    testing mode that makes the partition target exactly enumerable);
    ``collapsed_phi_mh=False`` switches the Metropolis target to the
    likelihood conditioned on the current (beta, sigma2) draw.
    """

    n_iter: int
    n_burnin: int
    n_rep: int = 30
    m_aux: int = 3
    proposal_sd: float = 0.01
    seed: int = 0
    thin: int = 1
    collapsed_phi_mh: bool = True
    random_scan: bool = False
    fix_phi: Optional[tuple[float, float]] = None

    def __post_init__(self):
        if self.n_iter <= 0 or not 0 <= self.n_burnin < self.n_iter:
            raise ValidationError(
                f"need 0 <= n_burnin < n_iter, got {self.n_burnin}, {self.n_iter}")
        if self.n_rep < 1 or self.m_aux < 1 or self.thin < 1:
            raise ValidationError("n_rep, m_aux and thin must be >= 1")
        if self.proposal_sd <= 0:
            raise ValidationError("proposal_sd must be positive")
        if self.fix_phi is not None:
            a, l = self.fix_phi
            if a <= 0 or l <= 0:
                raise ValidationError("fix_phi values must be positive")


@dataclass
class ChainState:
    """Mutable sampler state: partition bookkeeping plus cluster parameters."""

    labels: np.ndarray                  # location -> internal cluster id
    clusters: dict[int, set[int]]       # internal cluster id -> members
    params: dict[int, ClusterParams]
    rng: np.random.Generator
    iteration: int = 0
    next_cid: int = 0
    mh_accept: dict = field(default_factory=lambda: {
        "alpha": [0, 0], "ell": [0, 0]})

    def partition(self) -> Partition:
        return Partition(self.labels)

    def canonical_params(self) -> dict[int, ClusterParams]:
        seen: dict[int, int] = {}
        for cid in self.labels:
            cid = int(cid)
            if cid not in seen:
                seen[cid] = len(seen)
        return {canon: self.params[cid] for cid, canon in seen.items()}

    def check(self) -> None:
        assert set(self.clusters) == set(self.params), "params/cluster key mismatch"
        for cid, members in self.clusters.items():
            assert members, f"empty cluster {cid}"
            for i in members:
                assert self.labels[i] == cid


@dataclass
class ChainOutput:
    """Kept samples plus diagnostics."""

    samples: list[tuple[Partition, dict[int, ClusterParams]]]
    sample_iterations: tuple[int, ...]
    acceptance_rates: dict[str, float]
    log_post_trace: np.ndarray

    @property
    def partitions(self) -> list[Partition]:
        return [p for p, _ in self.samples]


class ChainNumericalError(NumericalError):
    """Numerical failure mid-chain; carries a restartable state snapshot."""

    def __init__(self, message, iteration, labels, params):
        super().__init__(message)
        self.iteration = iteration
        self.labels = list(int(v) for v in labels)
        self.params = params


def random_walk_mh(current: float, current_lp: float, log_target, sd: float,
                   rng: np.random.Generator) -> tuple[float, float, bool]:
    """One normal random-walk Metropolis step on (0, inf).

    Proposals at or below zero are rejected outright (zero prior density
    there); otherwise accept with probability min(1, target ratio).
    """
    prop = current + sd * rng.standard_normal()
    if prop <= 0.0:
        return current, current_lp, False
    prop_lp = log_target(prop)
    if math.log(rng.random()) < prop_lp - current_lp:
        return float(prop), float(prop_lp), True
    return current, current_lp, False


def _sample_index(log_weights: list[float], rng: np.random.Generator) -> int:
    lw = np.asarray(log_weights, dtype=float)
    if not np.all(np.isfinite(np.maximum(lw, -np.inf))):
        raise NumericalError("non-finite reassignment weight")
    probs = np.exp(lw - lw.max())
    probs /= probs.sum()
    idx = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
    return min(idx, len(probs) - 1)


def _draw_phi(hp: Hyperparams, rng: np.random.Generator) -> tuple[float, float]:
    alpha = rng.gamma(shape=hp.a1, scale=1.0 / hp.b1)
    ell = rng.gamma(shape=hp.a2, scale=1.0 / hp.b2)
    return float(alpha), float(ell)


def _prior_suffstats(hp: Hyperparams) -> ClusterSuffStats:
    return ClusterSuffStats(hp.lambda0, hp.mu0, hp.a0, hp.b0,
                            0, 0.0, hp.chol_lambda0)


def step1_update_params(state: ChainState, data: PanelData, hp: Hyperparams,
                        mfm: MfmPrior, mrf: Optional[MrfCohesion],
                        cfg: McmcConfig, cache: Optional[GramCache] = None
                        ) -> ChainState:
    """Refresh every cluster's parameters with the partition held fixed."""
    if cache is None:
        cache = GramCache(data)
    rng = state.rng
    sd = cfg.proposal_sd
    for cid in sorted(state.clusters):
        members = sorted(state.clusters[cid])
        prm = state.params[cid]
        alpha, ell = prm.alpha, prm.ell
        beta, sigma2 = prm.beta, prm.sigma2
        ll_cur = None   # collapsed log likelihood at the current (alpha, ell)
        for _ in range(cfg.n_rep):
            ss = cluster_suffstats(data, members, hp, alpha, ell, cache)
            beta, sigma2 = draw_beta_sigma2(ss, rng)
            if cfg.fix_phi is not None:
                continue
            if cfg.collapsed_phi_mh:
                if ll_cur is None:
                    ll_cur = integrated_loglik_from_stats(ss, hp)
                for name, prior_a, prior_b in (("alpha", hp.a1, hp.b1),
                                               ("ell", hp.a2, hp.b2)):
                    cur = alpha if name == "alpha" else ell
                    prop = cur + sd * rng.standard_normal()
                    state.mh_accept[name][1] += 1
                    if prop > 0.0:
                        if name == "alpha":
                            ll_prop = integrated_loglik(
                                data, members, hp, prop, ell, cache)
                        else:
                            ll_prop = integrated_loglik(
                                data, members, hp, alpha, prop, cache)
                        log_ratio = (ll_prop + gamma_logpdf(prop, prior_a, prior_b)
                                     - ll_cur - gamma_logpdf(cur, prior_a, prior_b))
                        if math.log(rng.random()) < log_ratio:
                            ll_cur = ll_prop
                            state.mh_accept[name][0] += 1
                            if name == "alpha":
                                alpha = float(prop)
                            else:
                                ell = float(prop)
            else:
                def target_alpha(a, beta=beta, sigma2=sigma2, ell=ell):
                    theta = ClusterParams(beta, sigma2, a, ell)
                    return (sum(conditional_loglik(data, i, theta, cache)
                                for i in members)
                            + gamma_logpdf(a, hp.a1, hp.b1))
                alpha, _, acc = random_walk_mh(
                    alpha, target_alpha(alpha), target_alpha, sd, rng)
                state.mh_accept["alpha"][0] += acc
                state.mh_accept["alpha"][1] += 1
                def target_ell(l, beta=beta, sigma2=sigma2, alpha=alpha):
                    theta = ClusterParams(beta, sigma2, alpha, l)
                    return (sum(conditional_loglik(data, i, theta, cache)
                                for i in members)
                            + gamma_logpdf(l, hp.a2, hp.b2))
                ell, _, acc = random_walk_mh(
                    ell, target_ell(ell), target_ell, sd, rng)
                state.mh_accept["ell"][0] += acc
                state.mh_accept["ell"][1] += 1
        if cfg.fix_phi is None:
            # final exact draw so the stored (beta, sigma2) condition on the
            # final (alpha, ell); the reassignment step relies on this
            # coherence (with pinned (alpha, ell) the loop draw already does)
            ss = cluster_suffstats(data, members, hp, alpha, ell, cache)
            beta, sigma2 = draw_beta_sigma2(ss, rng)
        state.params[cid] = ClusterParams(beta, sigma2, alpha, ell)
    return state


def step2_update_partition(state: ChainState, data: PanelData, hp: Hyperparams,
                           mfm: MfmPrior, mrf: Optional[MrfCohesion],
                           cfg: McmcConfig, cache: Optional[GramCache] = None
                           ) -> ChainState:
    """Sweep the locations, reassigning each given all cluster parameters."""
    if cache is None:
        cache = GramCache(data)
    rng = state.rng
    n = data.n_locations
    order = rng.permutation(n) if cfg.random_scan else range(n)
    gamma = mfm.gamma
    for i in order:
        i = int(i)
        old_cid = int(state.labels[i])
        state.clusters[old_cid].discard(i)
        was_singleton = not state.clusters[old_cid]
        if was_singleton:
            old_params = state.params.pop(old_cid)
            del state.clusters[old_cid]
        existing = sorted(state.clusters)
        t_rest = len(existing)

        if cfg.fix_phi is not None:
            aux = [cfg.fix_phi]
            log_aux_share = 0.0
        elif was_singleton:
            aux = [(old_params.alpha, old_params.ell)]
            aux += [_draw_phi(hp, rng) for _ in range(cfg.m_aux - 1)]
            log_aux_share = -math.log(cfg.m_aux)
        else:
            aux = [_draw_phi(hp, rng) for _ in range(cfg.m_aux)]
            log_aux_share = -math.log(cfg.m_aux)

        log_w = []
        for cid in existing:
            members = state.clusters[cid]
            prm = state.params[cid]
            lw = math.log(len(members) + gamma)
            if mrf is not None and mrf.lam != 0.0:
                lw += mrf.lam * state_neighbors_in(mrf.graph, i, members)
            lw += conditional_loglik(data, i, prm, cache)
            log_w.append(lw)
        if t_rest > 0:
            log_v_ratio = (mfm.log_vn(t_rest + 1) - mfm.log_vn(t_rest)
                           + math.log(gamma))
        else:
            log_v_ratio = 0.0  # no competing choice; any finite value works
        for (a_k, l_k) in aux:
            log_w.append(log_aux_share + log_v_ratio
                         + integrated_loglik(data, (i,), hp, a_k, l_k, cache))

        choice = _sample_index(log_w, rng)
        if choice < t_rest:
            cid = existing[choice]
            state.clusters[cid].add(i)
            state.labels[i] = cid
        else:
            a_k, l_k = aux[choice - t_rest]
            ss = cluster_suffstats(data, (i,), hp, a_k, l_k, cache)
            beta, sigma2 = draw_beta_sigma2(ss, rng)
            cid = state.next_cid
            state.next_cid += 1
            state.clusters[cid] = {i}
            state.params[cid] = ClusterParams(beta, sigma2, a_k, l_k)
            state.labels[i] = cid
    return state


def state_neighbors_in(graph: SpatialGraph, i: int, members: set) -> int:
    # hot-path variant of SpatialGraph.neighbors_in: members is an internal,
    # already-validated set
    return len(graph._neighbor_sets[i] & members)


def _log_posterior(state: ChainState, data: PanelData, hp: Hyperparams,
                   mfm: MfmPrior, mrf: Optional[MrfCohesion],
                   cache: GramCache) -> float:
    lp = log_prior_score(state.partition(), mfm, mrf)
    for cid in sorted(state.clusters):
        prm = state.params[cid]
        lp += integrated_loglik(data, state.clusters[cid], hp,
                                prm.alpha, prm.ell, cache)
        lp += gamma_logpdf(prm.alpha, hp.a1, hp.b1)
        lp += gamma_logpdf(prm.ell, hp.a2, hp.b2)
    return lp


def init_state(data: PanelData, hp: Hyperparams, cfg: McmcConfig,
               rng: np.random.Generator, init: Optional[Partition] = None
               ) -> ChainState:
    """All-singletons default initialization with prior-drawn parameters."""
    n = data.n_locations
    part = init if init is not None else Partition.singletons(n)
    if part.n != n:
        raise ValidationError(
            f"initial partition covers {part.n} items, data has {n}")
    labels = np.array(part.labels, dtype=int)
    clusters = {cid: set(block) for cid, block in enumerate(part.blocks)}
    params: dict[int, ClusterParams] = {}
    prior_ss = _prior_suffstats(hp)
    for cid in sorted(clusters):
        phi = cfg.fix_phi if cfg.fix_phi is not None else _draw_phi(hp, rng)
        beta, sigma2 = draw_beta_sigma2(prior_ss, rng)
        params[cid] = ClusterParams(beta, sigma2, phi[0], phi[1])
    return ChainState(labels=labels, clusters=clusters, params=params,
                      rng=rng, next_cid=len(clusters))


def run_chain(data: PanelData, graph: Optional[SpatialGraph], hp: Hyperparams,
              mfm: MfmPrior, mrf: Optional[MrfCohesion], cfg: McmcConfig,
              init: Optional[Partition] = None) -> ChainOutput:
    """Run the full two-step sampler; reproducible given (seed, inputs)."""
    n = data.n_locations
    if graph is not None and graph.n_locations != n:
        raise ValidationError(
            f"graph has {graph.n_locations} locations, data has {n}")
    if mrf is not None and mrf.graph.n_locations != n:
        raise ValidationError("cohesion graph does not match the data")
    if mfm.n_locations != n:
        raise ValidationError(
            f"mixture prior tabulated for N={mfm.n_locations}, data has {n}")
    rng = streams.generator(cfg.seed, streams.CHAIN)
    state = init_state(data, hp, cfg, rng, init)
    cache = GramCache(data)
    samples: list[tuple[Partition, dict[int, ClusterParams]]] = []
    kept_iters: list[int] = []
    trace = np.empty(cfg.n_iter)
    for it in range(1, cfg.n_iter + 1):
        state.iteration = it
        try:
            step1_update_params(state, data, hp, mfm, mrf, cfg, cache)
            step2_update_partition(state, data, hp, mfm, mrf, cfg, cache)
            trace[it - 1] = _log_posterior(state, data, hp, mfm, mrf, cache)
        except NumericalError as exc:
            raise ChainNumericalError(
                f"iteration {it}: {exc}", it, state.labels,
                state.canonical_params()) from exc
        if it > cfg.n_burnin and (it - cfg.n_burnin) % cfg.thin == 0:
            samples.append((state.partition(), state.canonical_params()))
            kept_iters.append(it)
    rates = {name: (acc / tot if tot else float("nan"))
             for name, (acc, tot) in state.mh_accept.items()}
    return ChainOutput(samples=samples, sample_iterations=tuple(kept_iters),
                       acceptance_rates=rates, log_post_trace=trace)


def run_prior_chain(graph: Optional[SpatialGraph], mfm: MfmPrior,
                    mrf: Optional[MrfCohesion], hp: Hyperparams,
                    n_sweeps: int, init: Partition, rng: np.random.Generator,
                    init_phi: Optional[dict[int, tuple[float, float]]] = None,
                    ) -> Iterator[tuple[Partition, dict[int, tuple[float, float]]]]:
    """Prior-only Gibbs chain over partitions; yields after every sweep.

    Uses the reassignment conditionals of the partition prior with no data
    terms. Every cluster carries an (alpha, ell) pair drawn fresh from the
    gamma priors at creation; yields ``(partition, {cluster_id: (alpha, ell)})``
    with canonical ids.
    """
    n = mfm.n_locations
    if init.n != n:
        raise ValidationError(f"init partition covers {init.n} items, prior has {n}")
    if mrf is not None and mrf.graph.n_locations != n:
        raise ValidationError("cohesion graph does not match the prior size")
    labels = np.array(init.labels, dtype=int)
    clusters = {cid: set(block) for cid, block in enumerate(init.blocks)}
    phi: dict[int, tuple[float, float]] = {}
    for cid in sorted(clusters):
        if init_phi is not None and cid in init_phi:
            phi[cid] = (float(init_phi[cid][0]), float(init_phi[cid][1]))
        else:
            phi[cid] = _draw_phi(hp, rng)
    next_cid = len(clusters)
    for _ in range(n_sweeps):
        for i in range(n):
            old = int(labels[i])
            clusters[old].discard(i)
            if not clusters[old]:
                del clusters[old]
                del phi[old]
            existing = sorted(clusters)
            if existing:
                lws, lw_new = conditional_log_weights(
                    [clusters[cid] for cid in existing], i, mfm, mrf)
                choice = _sample_index(lws + [lw_new], rng)
            else:
                choice = 0  # only option: own cluster
            if existing and choice < len(existing):
                cid = existing[choice]
                clusters[cid].add(i)
                labels[i] = cid
            else:
                cid = next_cid
                next_cid += 1
                clusters[cid] = {i}
                phi[cid] = _draw_phi(hp, rng)
                labels[i] = cid
        part = Partition(labels)
        seen: dict[int, int] = {}
        for lab in labels:
            lab = int(lab)
            if lab not in seen:
                seen[lab] = len(seen)
        yield part, {canon: phi[cid] for cid, canon in seen.items()}


def sample_record(iteration: int, partition: Partition,
                  params: dict[int, ClusterParams], log_post: float) -> dict:
    return {
        "iteration": int(iteration),
        "assignment": [int(v) for v in partition.labels],
        "clusters": {
            str(cid): {
                "beta": [float(v) for v in prm.beta],
                "sigma2": float(prm.sigma2),
                "alpha": float(prm.alpha),
                "ell": float(prm.ell),
            } for cid, prm in sorted(params.items())
        },
        "log_post": float(log_post),
    }


def write_chain_jsonl(output: ChainOutput, path) -> None:
    """One JSON record per kept sample."""
    with open(path, "w", encoding="utf-8") as fh:
        for it, (part, params) in zip(output.sample_iterations, output.samples):
            rec = sample_record(it, part, params,
                                output.log_post_trace[it - 1])
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_chain_jsonl(path) -> list[dict]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records
