"""Acceptance suite.

One test per criterion; each prints a single pass/fail line with the
measured quantity next to its threshold (run pytest with -s or check the
captured output). The heavy clustering-recovery criteria run real
desk-scale replications and dominate the suite's runtime.
"""

import math
import time
from collections import Counter

import numpy as np
import pytest
from scipy.special import logsumexp, roots_genlaguerre

import panelclust as pc
from panelclust import (Hyperparams, McmcConfig, MfmPrior, MrfCohesion,
                        PanelData, Partition, SelectionConfig, SpatialGraph,
                        iter_partitions, log_prior_score)
from panelclust.cli import main as cli_main
from panelclust.exact import conditional_from_joint, normalized_scores
from panelclust.likelihood import nig_logpdf

from conftest import random_graph, random_panel


def report(num: int, ok: bool, detail: str) -> None:
    print(f"\n[criterion {num}] {'PASS' if ok else 'FAIL'} - {detail}")


def toy_spread_problem():
    """N=3 panel whose posterior puts visible mass on all five partitions."""
    t = [np.array([-0.5, 0.5])] * 3
    x = [np.ones((2, 1))] * 3
    ys = ([0.2, 0.4], [0.5, 0.1], [1.8, 2.1])
    data = PanelData([np.array(v) for v in ys], x, t)
    graph = SpatialGraph(3, [(0, 1), (1, 2)])
    hp = Hyperparams(np.zeros(1), np.eye(1), a0=2.0, b0=2.0)
    mfm = MfmPrior(1.0, 3)
    return data, graph, hp, mfm


def test_criterion_1_exact_enumeration_prior_agreement():
    started = time.process_time()
    rng = np.random.default_rng(101)
    worst = 0.0
    for trial in range(20):
        n = int(rng.integers(2, 7))
        graph = random_graph(n, rng)
        for lam in (0.0, 0.3, 1.0):
            mfm = MfmPrior(1.0, n)
            mrf = MrfCohesion(lam, graph)
            joint = normalized_scores(
                n, lambda p: log_prior_score(p, mfm, mrf))
            assert sum(joint.values()) == pytest.approx(1.0, abs=1e-10)
            for i in range(n):
                derived = conditional_from_joint(joint, i)
                others = [j for j in range(n) if j != i]
                for rest, table in derived.items():
                    clusters = [frozenset(others[j] for j in block)
                                for block in rest.blocks]
                    weights = pc.conditional_weights(clusters, i, mfm, mrf)
                    total = sum(w for _, w in weights)
                    for choice, w in weights:
                        err = abs(w / total - table.get(choice, 0.0))
                        worst = max(worst, err)
    elapsed = time.process_time() - started
    ok = worst < 1e-10 and elapsed < 60
    report(1, ok, f"max conditional error {worst:.2e} (limit 1e-10), "
                  f"{elapsed:.1f}s cpu (limit 60s)")
    assert worst < 1e-10
    assert elapsed < 60


def test_criterion_2_conjugacy_identity():
    rng = np.random.default_rng(202)
    worst = 0.0
    for _ in range(100):
        p = int(rng.integers(1, 4))
        data = random_panel(int(rng.integers(1, 4)), rng, p=p)
        a_mat = rng.standard_normal((p, p))
        hp = Hyperparams(rng.standard_normal(p), a_mat @ a_mat.T + p * np.eye(p),
                         a0=rng.uniform(0.2, 3), b0=rng.uniform(0.2, 3))
        alpha, ell = rng.uniform(0.1, 2.0), rng.uniform(0.1, 2.0)
        members = list(range(data.n_locations))
        ss = pc.cluster_suffstats(data, members, hp, alpha, ell)
        beta = rng.standard_normal(p)
        sigma2 = rng.uniform(0.3, 4.0)
        theta = pc.ClusterParams(beta, sigma2, alpha, ell)
        lhs = (pc.integrated_loglik(data, members, hp, alpha, ell)
               + nig_logpdf(beta, sigma2, ss.mu_c, ss.lambda_c, ss.a_c, ss.b_c))
        rhs = (nig_logpdf(beta, sigma2, hp.mu0, hp.lambda0, hp.a0, hp.b0)
               + sum(pc.conditional_loglik(data, i, theta) for i in members))
        worst = max(worst, abs(lhs - rhs))
    ok = worst < 1e-8
    report(2, ok, f"max |identity error| {worst:.2e} over 100 points "
                  f"(limit 1e-8)")
    assert worst < 1e-8


def test_criterion_3_exact_target_mcmc():
    started = time.process_time()
    data, graph, hp, mfm = toy_spread_problem()
    mrf = MrfCohesion(0.5, graph)
    phi = (0.3, 1.0)

    def score(p):
        s = log_prior_score(p, mfm, mrf)
        for block in p.blocks:
            s += pc.integrated_loglik(data, block, hp, phi[0], phi[1])
        return s

    exact = normalized_scores(3, score)
    assert max(exact.values()) < 0.5  # the target is genuinely spread out

    cfg = McmcConfig(n_iter=100_000, n_burnin=0, n_rep=1, seed=2718,
                     fix_phi=phi)
    out = pc.run_chain(data, graph, hp, mfm, mrf, cfg)
    counts = Counter(p for p, _ in out.samples)
    m = len(out.samples)
    tv = 0.5 * sum(abs(counts.get(p, 0) / m - q) for p, q in exact.items())
    elapsed = time.process_time() - started
    ok = tv < 0.02 and elapsed < 300
    report(3, ok, f"total variation {tv:.4f} over {m} sweeps (limit 0.02), "
                  f"{elapsed:.0f}s cpu (limit 300s)")
    assert tv < 0.02
    assert elapsed < 300


def test_criterion_4_prior_sampling_marginal_estimator():
    started = time.process_time()
    data, graph, hp, mfm = toy_spread_problem()

    def log_cluster_integral(block, n_nodes):
        nodes1, w1 = roots_genlaguerre(n_nodes, hp.a1 - 1.0)
        nodes2, w2 = roots_genlaguerre(n_nodes, hp.a2 - 1.0)
        vals = np.empty((n_nodes, n_nodes))
        for i, a_node in enumerate(nodes1):
            for j, l_node in enumerate(nodes2):
                vals[i, j] = pc.integrated_loglik(
                    data, block, hp, a_node / hp.b1, l_node / hp.b2)
        logw = (np.log(w1)[:, None] + np.log(w2)[None, :]
                - math.lgamma(hp.a1) - math.lgamma(hp.a2))
        return float(logsumexp(vals + logw))

    def exact_log_marginal(n_nodes):
        parts = list(iter_partitions(3))
        blocks = {b for p in parts for b in p.blocks}
        integrals = {b: log_cluster_integral(b, n_nodes) for b in blocks}
        prior = normalized_scores(
            3, lambda p: log_prior_score(p, mfm, None))
        terms = [math.log(prior[p]) + sum(integrals[b] for b in p.blocks)
                 for p in parts]
        return float(logsumexp(terms))

    exact = exact_log_marginal(64)
    # quadrature self-consistency guard, and a frozen value computed from
    # the 96-node rule during development
    assert exact == pytest.approx(exact_log_marginal(96), abs=1e-4)
    assert exact == pytest.approx(-9.66047949, abs=1e-4)

    cfg = SelectionConfig(lambda_grid=(0.0,), m_total=100_000, m_burnin=1000,
                          warmstart_iters=200, warmstart_burnin=100,
                          shared_seed=99, mcmc={"n_rep": 2})
    estimate = pc.estimate_log_marginal(data, graph, hp, mfm, 0.0, cfg)
    err = abs(estimate - exact)
    elapsed = time.process_time() - started
    ok = err < 0.05 and elapsed < 300
    report(4, ok, f"|log estimate - exact| = {err:.4f} at M=1e5 (limit 0.05), "
                  f"{elapsed:.0f}s cpu (limit 300s)")
    assert err < 0.05
    assert elapsed < 300


def _fit_builtin(dgp: int, seed: int, lam: float) -> float:
    data, graph, truth = pc.builtin_dgp(dgp, seed=seed)
    hp = Hyperparams.default(2)
    mfm = MfmPrior(1.0, 48)
    cfg = McmcConfig(n_iter=1000, n_burnin=500, n_rep=30, m_aux=3,
                     proposal_sd=0.01, seed=seed)
    out = pc.run_chain(data, graph, hp, mfm, MrfCohesion(lam, graph), cfg)
    est, _ = pc.dahl_estimate(out.partitions)
    return pc.rand_index(est, truth)


@pytest.mark.slow
def test_criterion_5_desk_scale_recovery_bands():
    # the full selection protocol tunes the smoothness per replication;
    # this desk-scale check fixes the mid-grid value 0.5 instead
    lam = 0.5
    ri8 = [_fit_builtin(8, seed, lam) for seed in range(10)]
    ri7 = [_fit_builtin(7, seed, lam) for seed in range(10)]
    med8, med7 = float(np.median(ri8)), float(np.median(ri7))
    ok = med8 >= 0.95 and med7 >= 0.88
    report(5, ok, f"weak-noise median RI {med8:.3f} (floor 0.95), "
                  f"strong-noise median RI {med7:.3f} (floor 0.88), "
                  f"10 replications each at lam={lam}")
    assert med8 >= 0.95
    assert med7 >= 0.88


def _split_cluster_grid(seed: int):
    """Scenario-1 style lattice: the two outer bands share coefficients."""
    blocks = [(0, 0, 3, 0), (0, 1, 3, 2), (0, 3, 3, 4), (0, 5, 3, 5)]
    split = ((0.0, 1.0), 36.0, 0.1, 10.0)
    params = [split, ((28.0, 1.0), 36.0, 0.1, 10.0),
              ((-28.0, 1.0), 36.0, 0.1, 10.0), split]
    return pc.grid_dgp(4, 6, blocks, params, 0.01, seed=seed)


@pytest.mark.slow
def test_criterion_6_tuned_smoothness_does_not_over_cluster():
    wins = 0
    details = []
    for seed in range(10):
        data, graph, _ = _split_cluster_grid(seed)
        hp = Hyperparams.default(2)
        mfm = MfmPrior(1.0, 24)
        sel = SelectionConfig(lambda_grid=(0.0, 0.5), m_total=2000,
                              m_burnin=200, warmstart_iters=150,
                              warmstart_burnin=50, shared_seed=seed,
                              mcmc={"n_rep": 2})
        lam_star, _ = pc.select_lambda(data, graph, hp, mfm, sel)
        modal = {}
        for lam in {lam_star, 0.0}:
            cfg = McmcConfig(n_iter=400, n_burnin=200, n_rep=2, seed=seed)
            out = pc.run_chain(data, graph, hp, mfm,
                               MrfCohesion(lam, graph), cfg)
            modal[lam] = Counter(
                p.n_clusters for p, _ in out.samples).most_common(1)[0][0]
        wins += modal[lam_star] <= modal[0.0]
        details.append((seed, lam_star, modal[lam_star], modal[0.0]))
    ok = wins >= 8
    report(6, ok, f"tuned-vs-0 modal cluster count held in {wins}/10 "
                  f"replications (floor 8/10); per-seed {details}")
    assert wins >= 8


def test_criterion_7_degenerate_smoothness_limits():
    rng = np.random.default_rng(77)
    data = random_panel(6, rng, p=1, n_lo=3, n_hi=3)
    graph = pc.grid_dgp(2, 3, [(0, 0, 1, 2)], [((0.0,), 1.0, 0.5, 1.0)],
                        0.0, 0)[1]
    hp = Hyperparams.default(1)
    mfm = MfmPrior(1.0, 6)
    cfg = McmcConfig(n_iter=60, n_burnin=20, n_rep=2, seed=13)
    zero = pc.run_chain(data, graph, hp, mfm, MrfCohesion(0.0, graph), cfg)
    disabled = pc.run_chain(data, None, hp, mfm, None, cfg)
    identical = (
        np.array_equal(zero.log_post_trace, disabled.log_post_trace)
        and [p.labels for p, _ in zero.samples]
        == [p.labels for p, _ in disabled.samples]
        and all(
            np.array_equal(pa[c].beta, pb[c].beta)
            and pa[c].sigma2 == pb[c].sigma2
            and pa[c].alpha == pb[c].alpha and pa[c].ell == pb[c].ell
            for (_, pa), (_, pb) in zip(zero.samples, disabled.samples)
            for c in pa))

    hits, total = 0, 0
    chain = pc.run_prior_chain(graph, mfm, MrfCohesion(50.0, graph), hp,
                               3000, Partition.singletons(6),
                               np.random.default_rng(7))
    for k, (part, _) in enumerate(chain):
        if k >= 100:
            total += 1
            hits += part == Partition.one_block(6)
    absorption = hits / total
    ok = identical and absorption > 0.99
    report(7, ok, f"zero-smoothness chains identical: {identical}; "
                  f"one-block frequency at lam=50: {absorption:.4f} "
                  f"(floor 0.99)")
    assert identical
    assert absorption > 0.99


def test_criterion_8_manifest_reproduces_runs_byte_identically(tmp_path):
    sim = tmp_path / "sim"
    assert cli_main(["simulate", "--grid", "2x3",
                     "--blocks", "0,0,1,1;0,2,1,2",
                     "--block-params", "8,2,4,0.1,1;-8,-2,4,0.1,1",
                     "--noise-sd", "0.05", "--seed", "3",
                     "--outdir", str(sim)]) == 0
    fit = tmp_path / "fit"
    assert cli_main(["fit", "--data", str(sim / "panel.csv"),
                     "--adjacency", str(sim / "adjacency.txt"),
                     "--lam", "0.3", "--n-iter", "40", "--n-burnin", "10",
                     "--n-rep", "2", "--seed", "11",
                     "--outdir", str(fit)]) == 0
    tune = tmp_path / "tune"
    assert cli_main(["tune", "--data", str(sim / "panel.csv"),
                     "--adjacency", str(sim / "adjacency.txt"),
                     "--lambda-grid", "0,0.5", "--m-total", "300",
                     "--m-burnin", "50", "--warmstart-iters", "20",
                     "--warmstart-burnin", "5", "--n-rep", "1",
                     "--seed", "2", "--outdir", str(tune)]) == 0

    outputs = [sim / "panel.csv", sim / "adjacency.txt", sim / "truth.txt",
               fit / "chain.jsonl", fit / "summary.json",
               tune / "selection.json"]
    before = {path: path.read_bytes() for path in outputs}
    for manifest in (sim / "manifest.ini", fit / "manifest.ini",
                     tune / "manifest.ini"):
        command = [line.split("=", 1)[1].strip()
                   for line in manifest.read_text().splitlines()
                   if line.startswith("command")][0]
        assert cli_main([command, "--config", str(manifest)]) == 0
    identical = {str(path.name): path.read_bytes() == before[path]
                 for path in outputs}
    ok = all(identical.values())
    report(8, ok, f"byte-identical reruns from manifests: {identical}")
    assert ok
