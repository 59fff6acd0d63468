"""Covariance Matrix Adaptation Evolution Strategy (CMA-ES).

Canonical CMA-ES with cumulative step-size adaptation and rank-1 plus
rank-mu covariance updates, maximizing the objective. Candidate evaluation
may run in a process pool; fitnesses are re-ordered by candidate index
before any state update, so results are independent of the parallelism
degree.
"""

from __future__ import annotations

import math
import multiprocessing
from dataclasses import dataclass, field

import numpy as np

DEFAULT_SIGMA = 0.5
DEFAULT_BUDGET = 10_000


def population_size(dim):
    """lambda = 3 * floor(ln dim)."""
    lam = 3 * int(math.floor(math.log(dim)))
    if lam < 2:
        raise ValueError(f"dimension {dim} yields population size {lam} < 2")
    return lam


@dataclass
class CmaesState:
    dim: int
    rng: np.random.Generator
    mean: np.ndarray
    sigma: float
    C: np.ndarray
    p_sigma: np.ndarray
    p_c: np.ndarray
    lam: int
    mu: int
    weights: np.ndarray
    mu_eff: float
    c_sigma: float
    d_sigma: float
    c_c: float
    c_1: float
    c_mu: float
    chi_n: float
    generation: int = 0
    evaluations: int = 0
    # Eigendecomposition cache, refreshed lazily.
    B: np.ndarray | None = None
    D: np.ndarray | None = None
    eigen_evaluations: int = -1


def cmaes_init(dim, seed, sigma=DEFAULT_SIGMA, lam=None):
    """Fresh optimizer state with mean sampled uniformly from [-1, 1]^dim."""
    if dim < 1:
        raise ValueError("dimension must be at least 1")
    rng = np.random.default_rng(seed)
    mean = rng.uniform(-1.0, 1.0, dim)
    if lam is None:
        lam = population_size(dim)
    mu = lam // 2
    weights = np.log(lam / 2.0 + 0.5) - np.log(np.arange(1, mu + 1))
    weights /= weights.sum()
    mu_eff = 1.0 / np.sum(weights ** 2)
    c_sigma = (mu_eff + 2.0) / (dim + mu_eff + 5.0)
    d_sigma = (1.0 + 2.0 * max(0.0, math.sqrt((mu_eff - 1.0) / (dim + 1.0)) - 1.0)
               + c_sigma)
    c_c = (4.0 + mu_eff / dim) / (dim + 4.0 + 2.0 * mu_eff / dim)
    c_1 = 2.0 / ((dim + 1.3) ** 2 + mu_eff)
    c_mu = min(1.0 - c_1,
               2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((dim + 2.0) ** 2 + mu_eff))
    chi_n = math.sqrt(dim) * (1.0 - 1.0 / (4.0 * dim) + 1.0 / (21.0 * dim ** 2))
    return CmaesState(
        dim=dim, rng=rng, mean=mean, sigma=float(sigma), C=np.eye(dim),
        p_sigma=np.zeros(dim), p_c=np.zeros(dim), lam=lam, mu=mu,
        weights=weights, mu_eff=float(mu_eff), c_sigma=c_sigma,
        d_sigma=d_sigma, c_c=c_c, c_1=c_1, c_mu=c_mu, chi_n=chi_n)


def _decompose(state: CmaesState):
    """Eigendecomposition of C with clamping repair, cached lazily."""
    gap = state.lam / (state.c_1 + state.c_mu) / state.dim / 10.0
    if (state.B is not None
            and state.evaluations - state.eigen_evaluations <= gap):
        return
    state.C = (state.C + state.C.T) / 2.0
    eigvals, eigvecs = np.linalg.eigh(state.C)
    floor = 1e-14 * max(eigvals.max(), 1e-300)
    if eigvals[0] <= floor:
        eigvals = np.maximum(eigvals, floor)
        state.C = (eigvecs * eigvals) @ eigvecs.T
    state.B = eigvecs
    state.D = np.sqrt(eigvals)
    state.eigen_evaluations = state.evaluations


def ask(state: CmaesState):
    """Sample lambda candidates; deterministic in the rng state."""
    _decompose(state)
    z = state.rng.standard_normal((state.lam, state.dim))
    y = (z * state.D) @ state.B.T
    return state.mean + state.sigma * y


def tell(state: CmaesState, candidates, fitnesses):
    """Update the search distribution from the evaluated population.

    Fitness is maximized; ties are broken by candidate index (stable sort).
    """
    candidates = np.asarray(candidates, np.float64)
    fitnesses = np.asarray(fitnesses, np.float64)
    if candidates.shape != (state.lam, state.dim) or fitnesses.shape != (state.lam,):
        raise ValueError("population shape mismatch")
    order = np.argsort(-fitnesses, kind="stable")
    selected = candidates[order[:state.mu]]

    old_mean = state.mean
    y_sel = (selected - old_mean) / state.sigma
    y_w = state.weights @ y_sel
    state.mean = old_mean + state.sigma * y_w

    # C^(-1/2) y_w through the cached eigendecomposition.
    c_inv_half_yw = state.B @ ((state.B.T @ y_w) / state.D)
    state.p_sigma = ((1.0 - state.c_sigma) * state.p_sigma
                     + math.sqrt(state.c_sigma * (2.0 - state.c_sigma)
                                 * state.mu_eff) * c_inv_half_yw)
    state.evaluations += state.lam
    state.generation += 1
    ps_norm = float(np.linalg.norm(state.p_sigma))
    h_sigma = (ps_norm
               / math.sqrt(1.0 - (1.0 - state.c_sigma)
                           ** (2.0 * state.evaluations / state.lam))
               < (1.4 + 2.0 / (state.dim + 1.0)) * state.chi_n)
    state.p_c = ((1.0 - state.c_c) * state.p_c
                 + (math.sqrt(state.c_c * (2.0 - state.c_c) * state.mu_eff)
                    * y_w if h_sigma else 0.0))
    rank_one = np.outer(state.p_c, state.p_c)
    if not h_sigma:
        rank_one = rank_one + state.c_c * (2.0 - state.c_c) * state.C
    rank_mu = (y_sel.T * state.weights) @ y_sel
    state.C = ((1.0 - state.c_1 - state.c_mu) * state.C
               + state.c_1 * rank_one + state.c_mu * rank_mu)
    state.sigma *= math.exp((state.c_sigma / state.d_sigma)
                            * (ps_norm / state.chi_n - 1.0))
    if not (math.isfinite(state.sigma) and state.sigma > 0.0):
        raise FloatingPointError("step size left (0, inf)")
    return state


@dataclass
class RunLog:
    """Per-generation optimization records."""

    rows: list = field(default_factory=list)  # (evals, best, gen_best, gen_median)

    def append(self, evaluations, best, gen_best, gen_median):
        self.rows.append((int(evaluations), float(best), float(gen_best),
                          float(gen_median)))

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write("evaluations,best,gen_best,gen_median\n")
            for evals, best, gen_best, gen_median in self.rows:
                fh.write(f"{evals},{best!r},{gen_best!r},{gen_median!r}\n")

    @classmethod
    def read_csv(cls, path):
        log = cls()
        with open(path) as fh:
            header = fh.readline().strip()
            while header.startswith("#"):
                header = fh.readline().strip()
            if header != "evaluations,best,gen_best,gen_median":
                raise ValueError(f"unexpected run log header: {header}")
            for line in fh:
                if line.startswith("#") or not line.strip():
                    continue
                evals, best, gen_best, gen_median = line.strip().split(",")
                log.append(int(evals), float(best), float(gen_best),
                           float(gen_median))
        return log


@dataclass
class OptimizeResult:
    best_genome: np.ndarray
    best_fitness: float
    log: RunLog


_WORKER_EVALUATE = None


def _pool_init(evaluate):
    global _WORKER_EVALUATE
    _WORKER_EVALUATE = evaluate


def _pool_call(args):
    index, candidate = args
    return index, _WORKER_EVALUATE(candidate)


def optimize(evaluate, dim, seed, budget=DEFAULT_BUDGET, parallelism=1,
             sigma=DEFAULT_SIGMA, lam=None):
    """Maximize `evaluate` over R^dim within an evaluation budget.

    `evaluate` maps a genome to a scalar fitness and must be deterministic;
    with parallelism > 1 it must also be picklable. Results are identical
    for any parallelism degree.
    """
    state = cmaes_init(dim, seed, sigma=sigma, lam=lam)
    log = RunLog()
    best_fitness = -math.inf
    best_genome = state.mean.copy()
    pool = None
    if parallelism > 1:
        pool = multiprocessing.Pool(parallelism, initializer=_pool_init,
                                    initargs=(evaluate,))
    try:
        while state.evaluations < budget:
            candidates = ask(state)
            if pool is not None:
                fitnesses = np.empty(state.lam)
                for index, fitness in pool.imap_unordered(
                        _pool_call, list(enumerate(candidates))):
                    fitnesses[index] = fitness
            else:
                fitnesses = np.array([evaluate(c) for c in candidates])
            gen_best_idx = int(np.argmax(fitnesses))
            if fitnesses[gen_best_idx] > best_fitness:
                best_fitness = float(fitnesses[gen_best_idx])
                best_genome = candidates[gen_best_idx].copy()
            tell(state, candidates, fitnesses)
            log.append(state.evaluations, best_fitness,
                       fitnesses[gen_best_idx], float(np.median(fitnesses)))
    finally:
        if pool is not None:
            pool.close()
            pool.join()
    return OptimizeResult(best_genome=best_genome, best_fitness=best_fitness,
                          log=log)
