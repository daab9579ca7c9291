"""Gaussian-process panel likelihood with conjugate regression updates.

Per location i the model is

    Y_i | beta, sigma2 ~ N(X_i beta, sigma2 * K_i),
    K_i = exp(-(t_k - t_l)^2 / (2 ell)) + alpha * I,

so ``K_i`` is the sigma2-free correlation-plus-nugget matrix: the signal
variance sigma2 scales the whole covariance and the observation noise is
sigma2 * alpha. Under the conjugate prior

    beta | sigma2 ~ N(mu0, sigma2 * Lambda0^-1),   1/sigma2 ~ Gamma(a0, b0),

(beta, sigma2) integrate out analytically. A cluster's posterior is
characterized by the sufficient statistics

    Lambda_c = sum_i X_i' K_i^-1 X_i + Lambda0
    mu_c     = Lambda_c^-1 (sum_i X_i' K_i^-1 Y_i + Lambda0 mu0)
    a_c      = sum_i n_i / 2 + a0
    b_c      = b0 + (sum_i Y_i' K_i^-1 Y_i + mu0' Lambda0 mu0
                     - mu_c' Lambda_c mu_c) / 2

accumulated with Cholesky solves only (no explicit inverses). The marginal
likelihood of a cluster given (alpha, ell) follows in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.special import gammaln

from .data import PanelData
from .errors import NumericalError, ValidationError

LOG_2PI = math.log(2.0 * math.pi)
_COND_LIMIT = 1e12


@dataclass(frozen=True)
class ClusterParams:
    """One cluster's regression parameters.

    beta : coefficient vector, length p
    sigma2 : signal variance, > 0
    alpha : noise-to-signal ratio (nugget), > 0
    ell : squared-exponential length-scale, > 0
    """

    beta: np.ndarray
    sigma2: float
    alpha: float
    ell: float

    def __post_init__(self):
        object.__setattr__(self, "beta", np.atleast_1d(np.asarray(self.beta, dtype=float)))
        for name in ("sigma2", "alpha", "ell"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive, got {getattr(self, name)}")


class Hyperparams:
    """Conjugate prior settings for (beta, sigma2, alpha, ell).

    ``mu0``/``lambda0`` are the normal mean and (SPD) precision of beta given
    sigma2; ``(a0, b0)`` the inverse-gamma shape/rate on sigma2; ``(a1, b1)``
    and ``(a2, b2)`` the gamma shape/rate on alpha and ell.
    """

    def __init__(self, mu0, lambda0, a0=0.1, b0=1.0, a1=2.0, b1=1.0,
                 a2=2.0, b2=1.0):
        self.mu0 = np.atleast_1d(np.asarray(mu0, dtype=float))
        self.lambda0 = np.atleast_2d(np.asarray(lambda0, dtype=float))
        p = self.mu0.shape[0]
        if self.lambda0.shape != (p, p):
            raise ValidationError(
                f"lambda0 shape {self.lambda0.shape} does not match mu0 length {p}")
        if not np.allclose(self.lambda0, self.lambda0.T):
            raise ValidationError("lambda0 must be symmetric")
        try:
            self._chol0 = cholesky(self.lambda0, lower=True)
        except np.linalg.LinAlgError as exc:
            raise ValidationError("lambda0 must be positive-definite") from exc
        for name, val in (("a0", a0), ("b0", b0), ("a1", a1), ("b1", b1),
                          ("a2", a2), ("b2", b2)):
            if val <= 0:
                raise ValidationError(f"{name} must be positive, got {val}")
        self.a0, self.b0 = float(a0), float(b0)
        self.a1, self.b1 = float(a1), float(b1)
        self.a2, self.b2 = float(a2), float(b2)
        self.log_det_lambda0 = 2.0 * float(np.sum(np.log(np.diag(self._chol0))))

    @property
    def p(self) -> int:
        return self.mu0.shape[0]

    @property
    def chol_lambda0(self) -> np.ndarray:
        return self._chol0

    @classmethod
    def default(cls, p: int, lambda0_scale: float = 1e-6, **kwargs) -> "Hyperparams":
        """Vague defaults: mu0 = 0, Lambda0 = lambda0_scale * I."""
        return cls(np.zeros(p), lambda0_scale * np.eye(p), **kwargs)

    def __repr__(self):
        return (f"Hyperparams(p={self.p}, a0={self.a0}, b0={self.b0}, "
                f"a1={self.a1}, b1={self.b1}, a2={self.a2}, b2={self.b2})")


@dataclass
class ClusterSuffStats:
    """Posterior NIG characterization of one cluster at fixed (alpha, ell)."""

    lambda_c: np.ndarray
    mu_c: np.ndarray
    a_c: float
    b_c: float
    n_total: int
    log_det_sum: float          # sum_i log det K_i
    chol_lambda_c: np.ndarray   # lower Cholesky factor of lambda_c
    cond_warning: Optional[str] = None

    @property
    def log_det_lambda_c(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.chol_lambda_c))))


class CorrelationFactor(NamedTuple):
    matrix: np.ndarray
    chol: np.ndarray     # lower triangular
    log_det: float


def correlation_matrix(t, alpha: float, ell: float) -> CorrelationFactor:
    """Squared-exponential correlation plus nugget, with its Cholesky factor.

    Entries ``exp(-(t_k - t_l)^2 / (2 ell))`` plus ``alpha`` on the diagonal;
    positive-definite for every ``alpha > 0``. The signal variance sigma2 is
    deliberately absent: cov(Y_i | beta, sigma2) = sigma2 * K_i, and sigma2
    is integrated analytically through the conjugate updates, so it never
    enters this matrix.
    """
    t = np.asarray(t, dtype=float)
    if alpha <= 0 or ell <= 0:
        raise ValidationError(f"alpha and ell must be positive, got {alpha}, {ell}")
    diff = t[:, None] - t[None, :]
    mat = np.exp(-(diff * diff) / (2.0 * ell))
    mat[np.diag_indices_from(mat)] += alpha
    try:
        chol = cholesky(mat, lower=True, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(
            f"correlation matrix not positive-definite (alpha={alpha}, ell={ell})"
        ) from exc
    log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
    return CorrelationFactor(mat, chol, log_det)


class GramCache:
    """Memo for per-location kernel factorizations and Gram terms.

    Keys are exact float pairs (alpha, ell): Cholesky factors and whitened
    design blocks are shared by locations with identical time grids, Gram
    terms are per location. One triangular solve of the stacked [X | Y]
    blocks serves every location on a grid, which is what makes repeated
    cluster scoring at fresh (alpha, ell) values affordable. Values are pure
    functions of their keys, so entries never go stale; caches are cleared
    wholesale when they outgrow their bounds.
    """

    def __init__(self, data: PanelData, max_entries: int = 200_000):
        self._data = data
        self._max = int(max_entries)
        self._chol: dict = {}
        self._tensor: dict = {}
        self._gram: dict = {}
        grid_ids: dict[bytes, int] = {}
        self._grid_of: list[int] = []
        for ti in data.t:
            key = ti.tobytes()
            if key not in grid_ids:
                grid_ids[key] = len(grid_ids)
            self._grid_of.append(grid_ids[key])
        n_grids = len(grid_ids)
        members: list[list[int]] = [[] for _ in range(n_grids)]
        for i, g in enumerate(self._grid_of):
            members[g].append(i)
        self._grid_members = members
        # squared time differences per grid, and stacked [x_i, y_i] blocks
        self._d2 = []
        self._stack = []
        self._pos_of: dict[int, tuple[int, int]] = {}
        width = data.p + 1
        for g, locs in enumerate(members):
            t = data.t[locs[0]]
            diff = t[:, None] - t[None, :]
            self._d2.append(diff * diff)
            blocks = []
            for pos, i in enumerate(locs):
                blocks.append(np.column_stack([data.x[i], data.y[i]]))
                self._pos_of[i] = (g, pos)
            self._stack.append(np.hstack(blocks))
        self._width = width

    def _grid_kernel(self, grid: int, alpha: float, ell: float
                     ) -> tuple[np.ndarray, float]:
        key = (grid, alpha, ell)
        hit = self._chol.get(key)
        if hit is None:
            if alpha <= 0 or ell <= 0:
                raise ValidationError(
                    f"alpha and ell must be positive, got {alpha}, {ell}")
            mat = np.exp(self._d2[grid] * (-0.5 / ell))
            n = mat.shape[0]
            mat.flat[:: n + 1] += alpha
            try:
                chol = cholesky(mat, lower=True, check_finite=False)
            except (np.linalg.LinAlgError, ValueError) as exc:
                raise NumericalError(
                    f"correlation matrix not positive-definite "
                    f"(alpha={alpha}, ell={ell})") from exc
            log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
            hit = (chol, log_det)
            if len(self._chol) > self._max:
                self._chol.clear()
            self._chol[key] = hit
        return hit

    def kernel(self, i: int, alpha: float, ell: float) -> tuple[np.ndarray, float]:
        """(lower Cholesky of K_i, log det K_i) for location ``i``."""
        return self._grid_kernel(self._grid_of[i], alpha, ell)

    def gram_tensor(self, grid: int, alpha: float, ell: float
                    ) -> tuple[np.ndarray, float]:
        """All per-location Gram blocks of one grid: array of shape
        (n_locations_on_grid, p+1, p+1) in location-position order, plus
        the shared log det K."""
        key = (grid, alpha, ell)
        hit = self._tensor.get(key)
        if hit is None:
            chol, log_det = self._grid_kernel(grid, alpha, ell)
            s = solve_triangular(chol, self._stack[grid], lower=True,
                                 check_finite=False)
            n = s.shape[0]
            s3 = s.reshape(n, -1, self._width)
            g = np.einsum("tiw,tiv->iwv", s3, s3)
            hit = (g, log_det)
            if len(self._tensor) > 4000:
                self._tensor.clear()
            self._tensor[key] = hit
        return hit

    def gram(self, i: int, alpha: float, ell: float
             ) -> tuple[np.ndarray, np.ndarray, float, float]:
        """(X'K^-1 X, X'K^-1 Y, Y'K^-1 Y, log det K) for location ``i``."""
        key = (i, alpha, ell)
        hit = self._gram.get(key)
        if hit is None:
            grid, pos = self._pos_of[i]
            tensor = self._tensor.get((grid, alpha, ell))
            if tensor is not None:
                full, log_det = tensor[0][pos], tensor[1]
            else:
                # single-location path: solve only this location's columns
                chol, log_det = self._grid_kernel(grid, alpha, ell)
                block = self._stack[grid][:, pos * self._width:
                                          (pos + 1) * self._width]
                s = solve_triangular(chol, block, lower=True, check_finite=False)
                full = s.T @ s
            hit = (full[:-1, :-1], full[:-1, -1], float(full[-1, -1]), log_det)
            if len(self._gram) > self._max:
                self._gram.clear()
            self._gram[key] = hit
        return hit

    def cluster_grams(self, members: list[int], alpha: float, ell: float
                      ) -> tuple[np.ndarray, float]:
        """Summed [X|Y] Gram block and summed log det K over a cluster."""
        if len(members) == 1:
            g, v, q, log_det = self.gram(members[0], alpha, ell)
            full = np.empty((self._width, self._width))
            full[:-1, :-1] = g
            full[:-1, -1] = v
            full[-1, :-1] = v
            full[-1, -1] = q
            return full, log_det
        by_grid: dict[int, list[int]] = {}
        for i in members:
            grid, pos = self._pos_of[i]
            by_grid.setdefault(grid, []).append(pos)
        total = np.zeros((self._width, self._width))
        log_det_sum = 0.0
        for grid, positions in by_grid.items():
            tensor, log_det = self.gram_tensor(grid, alpha, ell)
            total += tensor[positions].sum(axis=0)
            log_det_sum += log_det * len(positions)
        return total, log_det_sum


def cluster_suffstats(data: PanelData, cluster: Iterable[int], hp: Hyperparams,
                      alpha: float, ell: float,
                      cache: Optional[GramCache] = None) -> ClusterSuffStats:
    """Accumulate a cluster's NIG sufficient statistics at fixed (alpha, ell).

    A singleton cluster yields exactly the per-location statistics; a cluster
    equals the sum of its members' Gram contributions plus one prior term.
    """
    members = sorted(set(int(i) for i in cluster))
    if not members:
        raise ValidationError("empty cluster")
    for i in members:
        if not 0 <= i < data.n_locations:
            raise ValidationError(f"location index {i} out of range")
    if cache is None:
        cache = GramCache(data)
    p = hp.p
    if data.p != p:
        raise ValidationError(f"data has p={data.p} covariates, prior has p={p}")
    gram_sum, log_det_sum = cache.cluster_grams(members, alpha, ell)
    lam = hp.lambda0 + gram_sum[:-1, :-1]
    rhs = hp.lambda0 @ hp.mu0 + gram_sum[:-1, -1]
    quad = float(hp.mu0 @ (hp.lambda0 @ hp.mu0)) + float(gram_sum[-1, -1])
    n_total = sum(data.n_obs(i) for i in members)
    try:
        chol_l = cholesky(lam, lower=True, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError("posterior precision not positive-definite") from exc
    mu = cho_solve((chol_l, True), rhs, check_finite=False)
    a_c = 0.5 * n_total + hp.a0
    b_c = hp.b0 + 0.5 * (quad - float(mu @ lam @ mu))
    if not (np.isfinite(b_c) and b_c > -1e-8 * abs(hp.b0 + 0.5 * quad)):
        raise NumericalError(f"posterior rate b_c = {b_c} is not positive")
    b_c = max(b_c, np.finfo(float).tiny)
    warning = None
    diag = np.diag(chol_l)
    cond_est = float((diag.max() / diag.min()) ** 2)
    if cond_est > _COND_LIMIT:
        warning = f"posterior precision nearly singular (cond ~ {cond_est:.2e})"
    return ClusterSuffStats(lam, mu, float(a_c), float(b_c), n_total,
                            log_det_sum, chol_l, warning)


def integrated_loglik_from_stats(ss: ClusterSuffStats, hp: Hyperparams) -> float:
    """Log marginal likelihood from already-accumulated sufficient statistics."""
    return float(
        -0.5 * ss.n_total * LOG_2PI
        - 0.5 * ss.log_det_sum
        + 0.5 * hp.log_det_lambda0
        - 0.5 * ss.log_det_lambda_c
        + hp.a0 * math.log(hp.b0) - ss.a_c * math.log(ss.b_c)
        + gammaln(ss.a_c) - gammaln(hp.a0))


def integrated_loglik(data: PanelData, cluster: Iterable[int], hp: Hyperparams,
                      alpha: float, ell: float,
                      cache: Optional[GramCache] = None) -> float:
    """Log marginal likelihood of a cluster with (beta, sigma2) integrated out."""
    ss = cluster_suffstats(data, cluster, hp, alpha, ell, cache)
    return integrated_loglik_from_stats(ss, hp)


def conditional_loglik(data: PanelData, i: int, theta: ClusterParams,
                       cache: Optional[GramCache] = None) -> float:
    """Gaussian log density of Y_i given explicit cluster parameters."""
    if not 0 <= int(i) < data.n_locations:
        raise ValidationError(f"location index {i} out of range")
    i = int(i)
    if cache is None:
        cache = GramCache(data)
    chol, log_det = cache.kernel(i, theta.alpha, theta.ell)
    resid = data.y[i] - data.x[i] @ theta.beta
    z = solve_triangular(chol, resid, lower=True, check_finite=False)
    n = data.n_obs(i)
    return float(-0.5 * n * (LOG_2PI + math.log(theta.sigma2))
                 - 0.5 * log_det
                 - 0.5 * float(z @ z) / theta.sigma2)


def draw_beta_sigma2(ss: ClusterSuffStats, rng: np.random.Generator
                     ) -> tuple[np.ndarray, float]:
    """One draw from the cluster's posterior: 1/sigma2 ~ Gamma(a_c, b_c),
    beta | sigma2 ~ N(mu_c, sigma2 * Lambda_c^-1)."""
    precision = rng.gamma(shape=ss.a_c, scale=1.0 / ss.b_c)
    if precision <= 0:
        raise NumericalError("degenerate gamma draw for the precision")
    sigma2 = 1.0 / precision
    z = rng.standard_normal(ss.mu_c.shape[0])
    beta = ss.mu_c + math.sqrt(sigma2) * solve_triangular(
        ss.chol_lambda_c.T, z, lower=False, check_finite=False)
    return beta, float(sigma2)


def gamma_logpdf(x: float, shape: float, rate: float) -> float:
    """Log density of Gamma(shape, rate) at ``x`` (``-inf`` for x <= 0)."""
    if x <= 0:
        return -np.inf
    return float(shape * math.log(rate) - gammaln(shape)
                 + (shape - 1.0) * math.log(x) - rate * x)


def nig_logpdf(beta, sigma2: float, mu, lam, a: float, b: float) -> float:
    """Log density of the normal-inverse-gamma law
    ``sigma2 ~ IG(a, b), beta | sigma2 ~ N(mu, sigma2 * lam^-1)``."""
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    lam = np.atleast_2d(np.asarray(lam, dtype=float))
    if sigma2 <= 0:
        return -np.inf
    p = beta.shape[0]
    chol = cholesky(lam, lower=True)
    log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
    diff = beta - mu
    quad = float(diff @ lam @ diff)
    log_ig = (a * math.log(b) - gammaln(a)
              - (a + 1.0) * math.log(sigma2) - b / sigma2)
    log_norm = (-0.5 * p * (LOG_2PI + math.log(sigma2))
                + 0.5 * log_det - 0.5 * quad / sigma2)
    return float(log_ig + log_norm)
