"""Local convex losses, the centralized oracle and the local prox step.

All losses use the ``1/2 ||.||^2`` convention with no ``1/m`` averaging, so
a penalty ``rho`` means the same thing whatever the shard sizes are::

    least-squares  f_n(t) = 1/2 ||A_n t - y_n||^2
    ridge          f_n(t) = 1/2 ||A_n t - y_n||^2 + mu/2 ||t||^2
    logistic       f_n(t) = sum_i log(1 + exp(-y_i a_i^T t)) + mu/2 ||t||^2

Logistic targets are in {-1, +1}; a {0, 1} column is mapped on load.
The global objective is ``F(t) = sum_n f_n(t)``.
"""
from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import expit

from .errors import InvalidArgumentError, SingularSystemError

LOSS_KINDS = ("least-squares", "ridge", "logistic")
NEWTON_TOL = 1e-10


@dataclass(frozen=True)
class ProblemInstance:
    shards: tuple[tuple[np.ndarray, np.ndarray], ...]
    loss_kind: str = "least-squares"
    mu: float = 0.0

    def __post_init__(self):
        if self.loss_kind not in LOSS_KINDS:
            raise InvalidArgumentError(f"unknown loss kind {self.loss_kind!r}")
        if self.mu < 0:
            raise InvalidArgumentError("regularizer mu must be nonnegative")
        if self.loss_kind == "least-squares" and self.mu != 0:
            raise InvalidArgumentError("least-squares takes mu=0; use ridge")
        if not self.shards:
            raise InvalidArgumentError("need at least one shard")
        frozen = []
        d = None
        for n, (A, y) in enumerate(self.shards):
            A = np.array(A, dtype=float, ndmin=2)
            y = np.array(y, dtype=float).reshape(-1)
            if A.shape[0] < 1 or A.shape[0] != y.shape[0]:
                raise InvalidArgumentError(f"shard {n}: {A.shape[0]} rows vs {y.shape[0]} targets")
            if d is None:
                d = A.shape[1]
            if A.shape[1] != d or d < 1:
                raise InvalidArgumentError(f"shard {n} has {A.shape[1]} columns, expected {d}")
            if not (np.all(np.isfinite(A)) and np.all(np.isfinite(y))):
                raise InvalidArgumentError(f"shard {n} holds non-finite values")
            if self.loss_kind == "logistic":
                if set(np.unique(y)) <= {0.0, 1.0}:
                    y = 2.0 * y - 1.0
                if not set(np.unique(y)) <= {-1.0, 1.0}:
                    raise InvalidArgumentError(f"shard {n}: logistic targets must be binary")
            A.setflags(write=False)
            y.setflags(write=False)
            frozen.append((A, y))
        object.__setattr__(self, "shards", tuple(frozen))

    @property
    def num_workers(self) -> int:
        return len(self.shards)

    @property
    def dim(self) -> int:
        return self.shards[0][0].shape[1]

    @property
    def is_quadratic(self) -> bool:
        return self.loss_kind != "logistic"

    @cached_property
    def grams(self) -> np.ndarray:
        """``A_n^T A_n + mu I`` stacked, shape (N, d, d); quadratic kinds only."""
        eye = np.eye(self.dim)
        return np.stack([A.T @ A + self.mu * eye for A, _ in self.shards])

    @cached_property
    def moments(self) -> np.ndarray:
        """``A_n^T y_n`` stacked, shape (N, d)."""
        return np.stack([A.T @ y for A, y in self.shards])

    @cached_property
    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.loss_kind}|{self.mu!r}|{self.num_workers}|{self.dim}".encode())
        for A, y in self.shards:
            h.update(np.ascontiguousarray(A).tobytes())
            h.update(np.ascontiguousarray(y).tobytes())
        return h.hexdigest()[:16]

    def objective(self, theta) -> float:
        theta = _check_vector(self, theta)
        return float(sum(local_loss(self, n, theta) for n in range(self.num_workers)))

    def gradient(self, theta) -> np.ndarray:
        theta = _check_vector(self, theta)
        return sum(local_gradient(self, n, theta) for n in range(self.num_workers))


def _check_vector(problem: ProblemInstance, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (problem.dim,):
        raise InvalidArgumentError(f"expected a length-{problem.dim} vector, got shape {theta.shape}")
    return theta


def _check_worker(problem: ProblemInstance, worker_id: int) -> None:
    if not 0 <= worker_id < problem.num_workers:
        raise InvalidArgumentError(f"worker {worker_id} out of range [0, {problem.num_workers})")


def local_loss(problem: ProblemInstance, worker_id: int, theta) -> float:
    _check_worker(problem, worker_id)
    theta = _check_vector(problem, theta)
    A, y = problem.shards[worker_id]
    reg = 0.5 * problem.mu * float(theta @ theta)
    if problem.loss_kind == "logistic":
        margins = y * (A @ theta)
        return float(np.sum(np.logaddexp(0.0, -margins))) + reg
    r = A @ theta - y
    return 0.5 * float(r @ r) + reg


def local_gradient(problem: ProblemInstance, worker_id: int, theta) -> np.ndarray:
    _check_worker(problem, worker_id)
    theta = _check_vector(problem, theta)
    A, y = problem.shards[worker_id]
    if problem.loss_kind == "logistic":
        margins = y * (A @ theta)
        return -A.T @ (y * expit(-margins)) + problem.mu * theta
    return A.T @ (A @ theta - y) + problem.mu * theta


def _local_hessian(problem: ProblemInstance, worker_id: int, theta: np.ndarray) -> np.ndarray:
    if problem.is_quadratic:
        return problem.grams[worker_id]
    A, y = problem.shards[worker_id]
    s = expit(y * (A @ theta))
    w = s * (1.0 - s)
    return (A.T * w) @ A + problem.mu * np.eye(problem.dim)


def _newton(obj, grad, hess, x0: np.ndarray, tol: float = NEWTON_TOL, max_iter: int = 200) -> np.ndarray:
    """Damped Newton with Armijo backtracking until ``||grad||_inf <= tol``."""
    x = x0.copy()
    for _ in range(max_iter):
        g = grad(x)
        if np.max(np.abs(g)) <= tol:
            return x
        H = hess(x)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, g, rcond=None)[0]
        f0, t = obj(x), 1.0
        slope = float(g @ step)
        gnorm = np.max(np.abs(g))
        while t > 1e-12 and obj(x - t * step) > f0 - 1e-4 * t * slope:
            # near the optimum objective differences drown in rounding; fall back on the gradient
            if np.max(np.abs(grad(x - t * step))) < gnorm:
                break
            t *= 0.5
        x_new = x - t * step
        if np.array_equal(x_new, x):
            break
        x = x_new
    if np.max(np.abs(grad(x))) > max(tol, 1e-8):
        raise SingularSystemError("Newton iteration failed to reach the stationarity tolerance")
    return x


def centralized_solution(problem: ProblemInstance) -> np.ndarray:
    """Exact minimizer of ``sum_n f_n``: normal equations, or Newton for logistic."""
    d = problem.dim
    if problem.is_quadratic:
        G = problem.grams.sum(axis=0)
        b = problem.moments.sum(axis=0)
        if problem.mu == 0 and np.linalg.matrix_rank(G) < d:
            raise SingularSystemError("stacked design matrix is rank deficient and mu=0")
        return np.linalg.solve(G, b)
    hess = lambda t: sum(_local_hessian(problem, n, t) for n in range(problem.num_workers))
    try:
        return _newton(problem.objective, problem.gradient, hess, np.zeros(d))
    except SingularSystemError as exc:
        raise SingularSystemError("logistic problem has no finite minimizer (separable data with mu=0?)") from exc


def prox_quadratic(problem: ProblemInstance, worker_id: int, neighbor_models: Sequence,
                   neighbor_duals: Sequence, rho: float, signs: Sequence[int] | None = None) -> np.ndarray:
    """Minimize the worker's augmented Lagrangian over its incident edges.

    Solves ``min_t f_n(t) + sum_e s_e <lam_e, t> + rho/2 sum_e ||t - t_e||^2``
    where ``s_e`` is +1 when the worker is the head end of edge ``e`` and -1
    when it is the tail end (all +1 by default).
    """
    if not rho > 0:
        raise InvalidArgumentError("penalty rho must be positive")
    _check_worker(problem, worker_id)
    models = [_check_vector(problem, m) for m in neighbor_models]
    duals = [_check_vector(problem, lam) for lam in neighbor_duals]
    if len(models) != len(duals):
        raise InvalidArgumentError("need one dual per neighbor model")
    signs = [1] * len(models) if signs is None else list(signs)
    if len(signs) != len(models):
        raise InvalidArgumentError("need one sign per neighbor model")
    d = problem.dim
    nbr_sum = np.sum(models, axis=0) if models else np.zeros(d)
    dual_sum = np.sum([s * lam for s, lam in zip(signs, duals)], axis=0) if duals else np.zeros(d)
    return prox_solve(problem, [worker_id], dual_sum[None], nbr_sum[None], np.array([len(models)]), rho)[0]


def prox_solve(problem: ProblemInstance, workers, dual_sums: np.ndarray, neighbor_sums: np.ndarray,
               weights, rho: float, warm: np.ndarray | None = None) -> np.ndarray:
    """Batched prox step for several workers from pre-summed edge terms.

    Row ``j`` solves ``grad f_w(t) + dual_sums[j] + rho (w_j * t - neighbor_sums[j]) = 0``
    for ``w = workers[j]``. ``weights`` is the per-worker degree, shape (k,),
    or a per-coordinate penalty weight of shape (k, d).
    """
    workers = np.asarray(workers, dtype=int)
    d = problem.dim
    weights = np.asarray(weights, dtype=float)
    if weights.ndim == 1:
        weights = np.repeat(weights[:, None], d, axis=1)
    if problem.is_quadratic:
        H = problem.grams[workers].copy()
        idx = np.arange(d)
        H[:, idx, idx] += rho * weights
        rhs = problem.moments[workers] - dual_sums + rho * neighbor_sums
        return np.linalg.solve(H, rhs[..., None])[..., 0]
    out = np.empty((len(workers), d))
    for j, w in enumerate(workers):
        c, s, wt = dual_sums[j], neighbor_sums[j], weights[j]
        obj = lambda t: local_loss(problem, w, t) + c @ t + 0.5 * rho * (wt @ (t * t) - 2 * (s @ t))
        grad = lambda t: local_gradient(problem, w, t) + c + rho * (wt * t - s)
        hess = lambda t: _local_hessian(problem, w, t) + rho * np.diag(wt)
        if warm is not None:
            x0 = warm[j]
        else:
            x0 = np.divide(s, wt, out=np.zeros(d), where=wt > 0)
        out[j] = _newton(obj, grad, hess, np.asarray(x0, dtype=float))
    return out


def make_synthetic(num_workers: int, dim: int, samples_per_worker: int = 20, noise_std: float = 0.1,
                   condition: float = 1.0, heterogeneity: float = 0.0, model_scale: float = 1.0,
                   loss_kind: str = "least-squares", mu: float = 0.0, seed: int = 0) -> ProblemInstance:
    """Gaussian features with a planted model plus additive noise.

    ``condition`` spreads the feature scales log-uniformly over
    ``[1/sqrt(condition), 1]`` so the pooled Gram matrix has roughly that
    condition number. ``heterogeneity`` perturbs the planted model per worker
    (non-IID shards).
    """
    if num_workers < 1 or dim < 1 or samples_per_worker < 1:
        raise InvalidArgumentError("num_workers, dim and samples_per_worker must be positive")
    if condition < 1:
        raise InvalidArgumentError("condition must be >= 1")
    rng = np.random.default_rng(seed)
    scales = np.logspace(0.0, -0.5 * np.log10(condition), dim)
    theta_star = model_scale * rng.standard_normal(dim)
    shards = []
    for _ in range(num_workers):
        A = rng.standard_normal((samples_per_worker, dim)) * scales
        planted = theta_star + heterogeneity * model_scale * rng.standard_normal(dim)
        z = A @ planted + noise_std * rng.standard_normal(samples_per_worker)
        y = np.where(z >= 0, 1.0, -1.0) if loss_kind == "logistic" else z
        shards.append((A, y))
    return ProblemInstance(tuple(shards), loss_kind=loss_kind, mu=mu)


def load_csv_shards(paths, worker_column: bool = False, loss_kind: str = "least-squares",
                    mu: float = 0.0) -> ProblemInstance:
    """Read header-less float CSV shards; last column is the target.

    ``paths`` is one file per worker, or a single file whose first column is
    the integer worker id when ``worker_column`` is set.
    """
    if isinstance(paths, (str, Path)):
        paths = [paths]
    paths = [Path(p) for p in paths]
    if worker_column:
        if len(paths) != 1:
            raise InvalidArgumentError("worker-id layout takes exactly one file")
        rows = _read_rows(paths[0])
        if rows.shape[1] < 3:
            raise InvalidArgumentError(f"{paths[0]}: need worker id, >=1 feature and a target")
        ids = rows[:, 0]
        if not np.all(ids == np.round(ids)) or ids.min() < 0:
            raise InvalidArgumentError(f"{paths[0]}: first column must hold worker ids")
        ids = ids.astype(int)
        missing = sorted(set(range(ids.max() + 1)) - set(ids.tolist()))
        if missing:
            raise InvalidArgumentError(f"{paths[0]}: no rows for workers {missing}")
        shards = tuple((rows[ids == n, 1:-1], rows[ids == n, -1]) for n in range(ids.max() + 1))
    else:
        shards = []
        for p in paths:
            rows = _read_rows(p)
            if rows.shape[1] < 2:
                raise InvalidArgumentError(f"{p}: need >=1 feature column and a target")
            shards.append((rows[:, :-1], rows[:, -1]))
        shards = tuple(shards)
    return ProblemInstance(shards, loss_kind=loss_kind, mu=mu)


def _read_rows(path: Path) -> np.ndarray:
    with open(path, newline="") as fh:
        try:
            rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
        except ValueError as exc:
            raise InvalidArgumentError(f"{path}: {exc}") from None
    if not rows:
        raise InvalidArgumentError(f"{path}: empty shard file")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise InvalidArgumentError(f"{path}: ragged rows")
    return np.array(rows, dtype=float)
