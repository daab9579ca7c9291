"""Synthetic spatial panel data with known ground-truth partitions.

Data are drawn from the latent-Gaussian-process model: per location i in
cluster c, a smooth temporal effect f_i ~ N(0, sigma2_c * R(ell_c)) plus
observation noise with variance sigma2_c * alpha_c around the regression
mean X_i beta_c. Covariates are an intercept column plus i.i.d. Uniform(-5,5)
entries; time grids are equally spaced on [-1, 1].

Eight built-in generating processes run on the bundled 48-state contiguity
graph with two partition scenarios (three clusters, one spatially split;
or two contiguous clusters). Grid analogues on small lattice graphs serve
desk-scale tests.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import cholesky

from . import streams
from .data import PanelData
from .errors import NumericalError, ParseError, ValidationError
from .graph import SpatialGraph, load_adjacency
from .partition import Partition


def _data_path(name: str):
    return importlib.resources.files("panelclust") / "_data" / name


def us48_graph() -> SpatialGraph:
    """The bundled 48-state contiguity graph (105 edges)."""
    with importlib.resources.as_file(_data_path("us48_adjacency.txt")) as path:
        return load_adjacency(path)


def us48_scenario(which: int) -> Partition:
    """Bundled ground-truth partition scenario (1 or 2), aligned to
    :func:`us48_graph` indices."""
    if which not in (1, 2):
        raise ValidationError(f"scenario must be 1 or 2, got {which}")
    graph = us48_graph()
    with importlib.resources.as_file(
            _data_path(f"us48_scenario{which}.txt")) as path:
        return load_assignment(path, labels=graph.labels)


def load_assignment(path, labels: Optional[Sequence[str]] = None) -> Partition:
    """Read ``location cluster`` lines into a partition.

    With ``labels`` given, locations are matched by name and ordered
    accordingly; otherwise file order defines the indices.
    """
    pairs: dict[str, int] = {}
    order: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != 2:
                raise ParseError(
                    f"expected 'location cluster', got {line!r}", line_no)
            name, cluster = parts
            if name in pairs:
                raise ParseError(f"duplicate location {name!r}", line_no)
            try:
                pairs[name] = int(cluster)
            except ValueError:
                raise ParseError(
                    f"cluster id must be an integer, got {cluster!r}", line_no
                ) from None
            order.append(name)
    if not pairs:
        raise ParseError(f"no assignments found in {path}")
    if labels is not None:
        missing = [s for s in labels if s not in pairs]
        if missing or len(pairs) != len(labels):
            raise ValidationError(
                f"assignment file does not cover the expected locations "
                f"(missing: {missing[:5]})")
        return Partition([pairs[s] for s in labels])
    return Partition([pairs[s] for s in order])


def write_assignment(partition: Partition, labels: Optional[Sequence[str]],
                     path) -> None:
    labels = labels or [str(i) for i in range(partition.n)]
    with open(path, "w", encoding="utf-8") as fh:
        for name, lab in zip(labels, partition.labels):
            fh.write(f"{name} {lab}\n")


@dataclass(frozen=True)
class DgpSpec:
    """Cluster-wise truth for one generating process.

    ``betas`` are ordered by the scenario's canonical cluster ids;
    ``perturbed`` names the cluster whose coefficients receive one
    N(0, eps_sd^2) shift per coefficient, drawn once per replication.
    """

    scenario: int                     # bundled partition scenario id
    betas: tuple[tuple[float, ...], ...]
    sigma2: float
    alpha: float
    ell: float
    eps_sd: float
    perturbed: int
    n_times: int = 20


# Scenario 1 canonical ids: 0 = eastern block, 1 = western/plains block,
# 2 = the spatially split cluster (Pacific + Northeast), which carries the
# perturbed coefficients. Scenario 2: 0 = East, 1 = West.
DGPS: dict[int, DgpSpec] = {
    1: DgpSpec(1, ((28.0, 1.0), (-28.0, 1.0), (0.0, 1.0)), 36.0, 0.1, 10.0, 0.1, 2),
    2: DgpSpec(1, ((28.0, 1.0), (-28.0, 1.0), (0.0, 1.0)), 36.0, 0.1, 10.0, 0.01, 2),
    3: DgpSpec(2, ((14.0, 1.0), (-14.0, 1.0)), 36.0, 0.1, 10.0, 0.1, 0),
    4: DgpSpec(2, ((14.0, 1.0), (-14.0, 1.0)), 36.0, 0.1, 10.0, 0.01, 0),
    5: DgpSpec(1, ((-20.0, 4.0), (20.0, 6.0), (0.0, 5.0)), 36.0, 0.1, 10.0, 0.1, 2),
    6: DgpSpec(1, ((-20.0, 4.0), (20.0, 6.0), (0.0, 5.0)), 36.0, 0.1, 10.0, 0.01, 2),
    7: DgpSpec(2, ((10.0, 5.0), (-10.0, 4.0)), 36.0, 0.1, 10.0, 0.1, 0),
    8: DgpSpec(2, ((10.0, 5.0), (-10.0, 4.0)), 36.0, 0.1, 10.0, 0.01, 0),
}


def _gp_cholesky(t: np.ndarray, sigma2: float, ell: float) -> np.ndarray:
    """Cholesky of the latent-effect covariance; the squared-exponential
    kernel is near rank-one at large length-scales, so a small diagonal
    jitter is escalated until factorization succeeds."""
    diff = t[:, None] - t[None, :]
    cov = sigma2 * np.exp(-(diff * diff) / (2.0 * ell))
    jitter = 1e-10
    for _ in range(8):
        try:
            return cholesky(cov + jitter * np.eye(t.shape[0]), lower=True)
        except np.linalg.LinAlgError:
            jitter *= 100.0
    raise NumericalError("latent covariance not factorizable")


def _draw_panel(truth: Partition, spec_betas: Sequence[Sequence[float]],
                sigma2s: Sequence[float], alphas: Sequence[float],
                ells: Sequence[float], n_times: int,
                rng: np.random.Generator,
                labels: Optional[Sequence[str]] = None,
                return_latent: bool = False):
    n = truth.n
    p = len(spec_betas[0])
    t = np.linspace(-1.0, 1.0, n_times)
    chols = [_gp_cholesky(t, sigma2s[c], ells[c]) for c in range(truth.n_clusters)]
    ys, xs, ts, latent = [], [], [], []
    for i in range(n):
        c = truth.cluster_of(i)
        x = np.empty((n_times, p))
        x[:, 0] = 1.0
        if p > 1:
            x[:, 1:] = rng.uniform(-5.0, 5.0, size=(n_times, p - 1))
        f = chols[c] @ rng.standard_normal(n_times)
        noise_sd = np.sqrt(sigma2s[c] * alphas[c])
        y = x @ np.asarray(spec_betas[c]) + f + noise_sd * rng.standard_normal(n_times)
        ys.append(y)
        xs.append(x)
        ts.append(t.copy())
        latent.append(f)
    data = PanelData(ys, xs, ts, labels=labels)
    if return_latent:
        return data, latent
    return data


def builtin_dgp(dgp_id: int, seed: int
                ) -> tuple[PanelData, SpatialGraph, Partition]:
    """One replication of a built-in generating process on the 48-state graph."""
    if dgp_id not in DGPS:
        raise ValidationError(f"unknown generating process id {dgp_id}; use 1..8")
    spec = DGPS[dgp_id]
    graph = us48_graph()
    truth = us48_scenario(spec.scenario)
    if truth.n_clusters != len(spec.betas):
        raise ValidationError(
            "scenario cluster count does not match the parameter table")
    rng = streams.generator(seed, streams.SIMULATION, dgp_id)
    p = len(spec.betas[0])
    eps = rng.normal(0.0, spec.eps_sd, size=p)
    betas = [np.asarray(b, dtype=float) for b in spec.betas]
    betas[spec.perturbed] = betas[spec.perturbed] + eps
    k = truth.n_clusters
    data = _draw_panel(truth, betas, [spec.sigma2] * k, [spec.alpha] * k,
                       [spec.ell] * k, spec.n_times, rng, labels=graph.labels)
    return data, graph, truth


def grid_graph(rows: int, cols: int) -> SpatialGraph:
    """4-neighbor lattice; location index is row-major."""
    if rows < 1 or cols < 1 or rows * cols < 2:
        raise ValidationError("grid needs at least two cells")
    edges = []
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                edges.append((i, i + 1))
            if r + 1 < rows:
                edges.append((i, i + cols))
    return SpatialGraph(rows * cols, edges)


def grid_blocks_partition(rows: int, cols: int,
                          blocks: Sequence[tuple[int, int, int, int]]) -> Partition:
    """Partition a lattice into rectangular blocks (r0, c0, r1, c1), inclusive.

    The rectangles must tile the grid exactly.
    """
    labels = -np.ones(rows * cols, dtype=int)
    for b, (r0, c0, r1, c1) in enumerate(blocks):
        if not (0 <= r0 <= r1 < rows and 0 <= c0 <= c1 < cols):
            raise ValidationError(f"block {b} out of range: {(r0, c0, r1, c1)}")
        for r in range(r0, r1 + 1):
            for c in range(c0, c1 + 1):
                i = r * cols + c
                if labels[i] != -1:
                    raise ValidationError(
                        f"blocks overlap at cell ({r},{c})")
                labels[i] = b
    if np.any(labels < 0):
        missing = int(np.argmax(labels < 0))
        raise ValidationError(
            f"blocks do not tile the grid (cell {missing} uncovered)")
    return Partition(labels)


def grid_dgp(rows: int, cols: int, blocks: Sequence[tuple[int, int, int, int]],
             block_params: Sequence[tuple], noise_sd: float, seed: int,
             n_times: int = 20) -> tuple[PanelData, SpatialGraph, Partition]:
    """Desk-scale analogue on a lattice graph.

    ``block_params[b] = (beta, sigma2, alpha, ell)`` for rectangle ``b``;
    ``noise_sd`` perturbs the first block's coefficients once per call.
    """
    truth = grid_blocks_partition(rows, cols, blocks)
    if len(block_params) != truth.n_clusters:
        raise ValidationError(
            f"got {len(block_params)} parameter sets for {truth.n_clusters} blocks")
    graph = grid_graph(rows, cols)
    rng = streams.generator(seed, streams.SIMULATION, rows, cols)
    betas = [np.atleast_1d(np.asarray(bp[0], dtype=float)) for bp in block_params]
    p = betas[0].shape[0]
    if any(b.shape[0] != p for b in betas):
        raise ValidationError("all blocks must share one coefficient length")
    eps = rng.normal(0.0, noise_sd, size=p) if noise_sd > 0 else np.zeros(p)
    betas[0] = betas[0] + eps
    sigma2s = [float(bp[1]) for bp in block_params]
    alphas = [float(bp[2]) for bp in block_params]
    ells = [float(bp[3]) for bp in block_params]
    if any(v <= 0 for v in sigma2s + alphas + ells):
        raise ValidationError("sigma2, alpha, ell must be positive")
    data = _draw_panel(truth, betas, sigma2s, alphas, ells, n_times, rng)
    return data, graph, truth
