"""
CMA-ES minimizer for the PhysMotion pipeline.
Rank-mu weighted recombination with cumulative step-size adaptation and
rank-one plus rank-mu covariance updates, vectorized with numpy.
Candidates are evaluated in batches so rollouts can run concurrently.
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from config import (
    CMA_ITERATIONS, CMA_POPULATION, CMA_SIGMA0, DEFAULT_SEED, FAST_ITERATIONS, FAST_POPULATION,
)
from exceptions import ContractError
from utils.logger import logger

SENTINEL = np.inf     # value given to candidates whose objective is NaN

BatchEvaluator = Callable[[Callable[[np.ndarray], float], List[np.ndarray]], List[float]]


@dataclass(frozen=True)
class CmaConfig:
    """
    Budget and start parameters. population=None selects 4 + floor(3 ln n);
    restarts doubles the population and restarts from the best point when the
    search stalls before the iteration budget is spent.
    """
    population: Optional[int] = CMA_POPULATION
    iterations: int = CMA_ITERATIONS
    sigma0: float = CMA_SIGMA0
    seed: int = DEFAULT_SEED
    restarts: bool = False
    tolfun: float = 1e-12
    tolx: float = 1e-11

    def __post_init__(self):
        if self.population is not None and self.population < 4:
            raise ContractError(f"population must be at least 4, got {self.population}")
        if not self.sigma0 > 0:
            raise ContractError("sigma0 must be positive")
        if self.iterations < 0:
            raise ContractError("iterations must be non-negative")

    @classmethod
    def fast(cls, seed: int = DEFAULT_SEED, sigma0: float = CMA_SIGMA0) -> "CmaConfig":
        """Desk-scale budget."""
        return cls(population=FAST_POPULATION, iterations=FAST_ITERATIONS, sigma0=sigma0, seed=seed)

    @classmethod
    def from_run_config(cls, section, seed: int = DEFAULT_SEED, fast: bool = False) -> "CmaConfig":
        if fast:
            return cls.fast(seed=seed, sigma0=section.sigma0)
        return cls(population=section.population, iterations=section.iterations,
                   sigma0=section.sigma0, seed=seed, restarts=section.restarts)

    def popsize(self, dimension: int) -> int:
        if self.population is not None:
            return self.population
        return 4 + int(3 * np.log(dimension))


class CMAESParameters:
    """Static strategy parameters for a given dimension and population size."""

    def __init__(self, n: int, lam: int):
        self.dimension = n
        self.lam = lam
        self.mu = lam // 2
        raw = np.log(lam / 2 + 0.5) - np.log(np.arange(1, self.mu + 1))
        self.weights = raw / raw.sum()
        self.mueff = 1.0 / np.sum(self.weights ** 2)

        self.cc = (4 + self.mueff / n) / (n + 4 + 2 * self.mueff / n)
        self.cs = (self.mueff + 2) / (n + self.mueff + 5)
        self.c1 = 2 / ((n + 1.3) ** 2 + self.mueff)
        self.cmu = min(1 - self.c1, 2 * (self.mueff - 2 + 1 / self.mueff) / ((n + 2) ** 2 + self.mueff))
        self.damps = 1 + 2 * max(0.0, np.sqrt((self.mueff - 1) / (n + 1)) - 1) + self.cs
        self.chi_n = np.sqrt(n) * (1 - 1.0 / (4 * n) + 1.0 / (21 * n ** 2))
        # eigendecomposition is postponed for this many evaluations
        self.lazy_gap_evals = 0.5 * n * lam / ((self.c1 + self.cmu) * n ** 2)


class CMAES:
    """Ask/tell CMA-ES state."""

    def __init__(self, xstart: np.ndarray, sigma: float, lam: int, rng: np.random.Generator):
        self.xmean = np.array(xstart, dtype=float)
        n = self.xmean.shape[0]
        self.params = CMAESParameters(n, lam)
        self.sigma = float(sigma)
        self.rng = rng
        self.pc = np.zeros(n)
        self.ps = np.zeros(n)
        self.C = np.eye(n)
        self.eigenbasis = np.eye(n)
        self.eigenvalues = np.ones(n)
        self.invsqrt = np.eye(n)
        self.updated_eval = 0
        self.counteval = 0
        self.fitvals = np.zeros(0)

    @property
    def condition_number(self) -> float:
        return float(self.eigenvalues.max() / self.eigenvalues.min())

    def _update_eigensystem(self) -> None:
        if self.counteval <= self.updated_eval + self.params.lazy_gap_evals:
            return
        self.C = 0.5 * (self.C + self.C.T)
        values, basis = np.linalg.eigh(self.C)
        values = np.maximum(values, 1e-300)
        self.eigenvalues, self.eigenbasis = values, basis
        self.invsqrt = (basis / np.sqrt(values)) @ basis.T
        self.updated_eval = self.counteval

    def ask(self) -> np.ndarray:
        """(lambda, n) candidates m + sigma B D z."""
        self._update_eigensystem()
        z = self.rng.standard_normal((self.params.lam, self.xmean.shape[0]))
        y = (z * np.sqrt(self.eigenvalues)) @ self.eigenbasis.T
        return self.xmean + self.sigma * y

    def tell(self, arx: np.ndarray, fitvals: np.ndarray) -> None:
        par = self.params
        n = self.xmean.shape[0]
        self.counteval += len(fitvals)
        order = np.argsort(fitvals, kind="stable")
        arx = arx[order]
        self.fitvals = np.asarray(fitvals)[order]
        xold = self.xmean

        self.xmean = par.weights @ arx[:par.mu]

        y = self.xmean - xold
        z = self.invsqrt @ y
        self.ps = (1 - par.cs) * self.ps + np.sqrt(par.cs * (2 - par.cs) * par.mueff) / self.sigma * z
        hsig = (np.sum(self.ps ** 2) / n
                / (1 - (1 - par.cs) ** (2 * self.counteval / par.lam)) < 2 + 4.0 / (n + 1))
        self.pc = (1 - par.cc) * self.pc + np.sqrt(par.cc * (2 - par.cc) * par.mueff) / self.sigma * hsig * y

        c1a = par.c1 * (1 - (1 - hsig ** 2) * par.cc * (2 - par.cc))
        steps = (arx[:par.mu] - xold) / self.sigma
        self.C = ((1 - c1a - par.cmu) * self.C
                  + par.c1 * np.outer(self.pc, self.pc)
                  + par.cmu * (steps.T * par.weights) @ steps)

        norm_ps = np.linalg.norm(self.ps)
        self.sigma *= np.exp(min(1.0, (par.cs / par.damps) * (norm_ps / par.chi_n - 1)))

    def stop(self, tolfun: float, tolx: float) -> Dict[str, float]:
        res: Dict[str, float] = {}
        finite = self.fitvals[np.isfinite(self.fitvals)]
        if finite.size > 1 and finite[-1] - finite[0] < tolfun and finite.size == self.fitvals.size:
            res["tolfun"] = tolfun
        if self.sigma * np.sqrt(self.eigenvalues.max()) < tolx:
            res["tolx"] = tolx
        if self.condition_number > 1e14:
            res["condition"] = self.condition_number
        return res


@dataclass(frozen=True)
class IterationRecord:
    """One line of the optimization history."""
    iteration: int
    best: float            # best-so-far objective
    iteration_best: float
    mean: float            # mean of the finite objective values this iteration
    sigma: float
    evaluations: int
    diverged: int          # candidates mapped to the sentinel


@dataclass
class CmaResult:
    x_best: np.ndarray
    f_best: float
    f_start: float = np.inf
    history: List[IterationRecord] = field(default_factory=list)
    evaluations: int = 0
    stop_reason: str = ""
    restarts: int = 0


def sequential_map(f: Callable[[np.ndarray], float], xs: List[np.ndarray]) -> List[float]:
    return [f(x) for x in xs]


def _safe(value: float) -> float:
    value = float(value)
    return SENTINEL if np.isnan(value) else value


def cmaes_minimize(f: Callable[[np.ndarray], float], x0: Sequence[float], cfg: CmaConfig,
                   evaluate_batch: BatchEvaluator = sequential_map,
                   callback: Optional[Callable[[IterationRecord], None]] = None) -> CmaResult:
    """
    Minimize f from x0. The start point is evaluated first, so the returned
    objective never exceeds f(x0); NaN objective values count as +inf and are
    reported per iteration.

    Args:
        f: objective on flat vectors
        x0: start point, at least one dimension
        cfg: budget, start step and seed
        evaluate_batch: maps f over a list of candidates (e.g. a process pool)
        callback: receives every IterationRecord as it is produced
    """
    x0 = np.array(x0, dtype=float)
    if x0.ndim != 1 or x0.shape[0] < 1:
        raise ContractError("x0 must be a non-empty vector")
    rng = np.random.default_rng(cfg.seed)

    f0 = _safe(evaluate_batch(f, [x0.copy()])[0])
    result = CmaResult(x_best=x0.copy(), f_best=f0, f_start=f0, evaluations=1)
    if np.isinf(f0) and f0 > 0:
        logger.warning("Objective is not finite at the start point")
    if cfg.iterations == 0:
        result.stop_reason = "budget"
        return result

    lam = cfg.popsize(x0.shape[0])
    es = CMAES(x0, cfg.sigma0, lam, rng)
    nan_total = 0
    for iteration in range(1, cfg.iterations + 1):
        arx = es.ask()
        raw = np.asarray(evaluate_batch(f, list(arx)), dtype=float)
        diverged = int(np.count_nonzero(~np.isfinite(raw)))
        nan_total += int(np.count_nonzero(np.isnan(raw)))
        fitvals = np.where(np.isnan(raw), SENTINEL, raw)
        es.tell(arx, fitvals)
        result.evaluations += len(fitvals)

        k = int(np.argmin(fitvals))
        if fitvals[k] < result.f_best:
            result.f_best = float(fitvals[k])
            result.x_best = arx[k].copy()
        finite = fitvals[np.isfinite(fitvals)]
        record = IterationRecord(
            iteration=len(result.history) + 1, best=result.f_best, iteration_best=float(fitvals[k]),
            mean=float(finite.mean()) if finite.size else SENTINEL, sigma=float(es.sigma),
            evaluations=result.evaluations, diverged=diverged)
        result.history.append(record)
        if callback is not None:
            callback(record)

        reasons = es.stop(cfg.tolfun, cfg.tolx)
        if reasons and iteration < cfg.iterations:
            if not cfg.restarts:
                result.stop_reason = ",".join(reasons)
                break
            lam *= 2
            result.restarts += 1
            logger.debug(f"CMA-ES restart {result.restarts} ({', '.join(reasons)}), population {lam}")
            es = CMAES(result.x_best, cfg.sigma0, lam, rng)
    else:
        result.stop_reason = "budget"
    if nan_total:
        logger.warning(f"{nan_total} objective evaluations returned NaN and were treated as +inf")
    return result
