"""L-BFGS training over the flat network parameters.

:func:`lbfgs` is a generic two-loop-recursion L-BFGS with a strong-Wolfe line
search; :func:`minimize` applies it to the collocation loss and
:func:`multi_seed_train` repeats that from several initializations.
"""

import logging
import warnings
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Deque, Dict, List, Optional, Sequence, Tuple

import numpy as np
from dataclasses_json import dataclass_json
from pydantic import BaseModel, Field, model_validator
from scipy.optimize import line_search

from .exceptions import LineSearchFailed, OptimizationError
from .net import MlpParams, xavier_init
from .pde import CollocationLoss, PdeProblem
from .sampling import PointSet
from .utils import decimate

logger = logging.getLogger(__name__)

Objective = Callable[[np.ndarray], Tuple[float, np.ndarray]]


class Termination(str, Enum):
    """Why an optimization run stopped."""

    GRAD_TOL = "grad_tol"
    LOSS_PLATEAU = "loss_plateau"
    MAX_ITERS = "max_iters"
    LINESEARCH_FAIL = "linesearch_fail"
    FAILED = "failed"


class LbfgsConfig(BaseModel):
    """Optimizer settings, echoed into every run's metadata."""

    memory: int = Field(10, ge=1, description="Stored (s, y) pairs")
    max_iters: int = Field(5000, ge=0)
    grad_tol: float = Field(1e-9, ge=0.0, description="Stop when max |grad| falls below")
    loss_tol: float = Field(
        1e-12, ge=0.0, description="Stop when the relative decrease over the window falls below"
    )
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.9
    plateau_window: int = Field(10, ge=1)
    max_linesearch: int = Field(30, ge=1)
    check_gradient: bool = Field(
        False, description="Spot-check the gradient against finite differences at each iterate"
    )

    @model_validator(mode="after")
    def _check_wolfe(self) -> "LbfgsConfig":
        if not 0.0 < self.wolfe_c1 < self.wolfe_c2 < 1.0:
            raise ValueError(
                f"Wolfe constants need 0 < c1 < c2 < 1, got c1={self.wolfe_c1}, c2={self.wolfe_c2}"
            )
        return self


@dataclass
class LbfgsOutcome:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    loss_history: List[float]
    iterations: int
    termination: Termination
    evaluations: int = 0


def two_loop_direction(
    grad: np.ndarray, s_hist: Sequence[np.ndarray], y_hist: Sequence[np.ndarray]
) -> np.ndarray:
    """Search direction -H grad from the stored pairs, oldest first.

    With no pairs the direction is the gradient scaled to at most unit length.
    """
    if not s_hist:
        return -grad / max(1.0, float(np.linalg.norm(grad)))
    q = grad.copy()
    rhos = [1.0 / float(np.dot(y, s)) for s, y in zip(s_hist, y_hist)]
    alphas = []
    for s, y, rho in reversed(list(zip(s_hist, y_hist, rhos))):
        alpha = rho * float(np.dot(s, q))
        q -= alpha * y
        alphas.append(alpha)
    s, y = s_hist[-1], y_hist[-1]
    r = (float(np.dot(s, y)) / float(np.dot(y, y))) * q
    for (s, y, rho), alpha in zip(zip(s_hist, y_hist, rhos), reversed(alphas)):
        beta = rho * float(np.dot(y, r))
        r += (alpha - beta) * s
    return -r


class _Cache:
    """Remembers objective evaluations so value and gradient share one call."""

    def __init__(self, objective: Objective):
        self.objective = objective
        self.evaluations = 0
        self._store: Dict[bytes, Tuple[float, np.ndarray]] = {}

    def __call__(self, x: np.ndarray) -> Tuple[float, np.ndarray]:
        key = x.tobytes()
        if key not in self._store:
            if len(self._store) > 64:
                self._store.clear()
            self.evaluations += 1
            value, grad = self.objective(x)
            self._store[key] = (float(value), np.asarray(grad, dtype=float))
        return self._store[key]

    def value(self, x: np.ndarray) -> float:
        return self(x)[0]

    def grad(self, x: np.ndarray) -> np.ndarray:
        return self(x)[1]


def _wolfe_step(
    cache: _Cache, x: np.ndarray, f: float, g: np.ndarray, d: np.ndarray, cfg: LbfgsConfig
) -> Tuple[float, float, np.ndarray]:
    """Strong-Wolfe step length along ``d``.

    Raises:
        LineSearchFailed: If no step satisfying both conditions is found
    """
    slope = float(np.dot(g, d))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        alpha, *_ = line_search(
            cache.value, cache.grad, x, d, gfk=g, old_fval=f,
            c1=cfg.wolfe_c1, c2=cfg.wolfe_c2, maxiter=cfg.max_linesearch,
        )
    if alpha is None or not np.isfinite(alpha) or alpha <= 0:
        raise LineSearchFailed("no strong-Wolfe step along the search direction")
    f_new, g_new = cache(x + alpha * d)
    sufficient = f_new <= f + cfg.wolfe_c1 * alpha * slope
    curvature = abs(float(np.dot(g_new, d))) <= cfg.wolfe_c2 * abs(slope)
    if not (sufficient and curvature):
        raise LineSearchFailed(f"step {alpha:.3e} violates the strong Wolfe conditions")
    return float(alpha), f_new, g_new


def _spot_check(cache: _Cache, x: np.ndarray, g: np.ndarray, iteration: int) -> None:
    rng = np.random.default_rng(iteration)
    indices = rng.choice(x.size, size=min(20, x.size), replace=False)
    h = 1e-6
    for i in indices:
        e = np.zeros_like(x)
        e[i] = h
        fd = (cache.objective(x + e)[0] - cache.objective(x - e)[0]) / (2 * h)
        if abs(fd - g[i]) > 1e-4 * max(abs(fd), 1e-8):
            logger.warning(
                f"Iteration {iteration}: gradient entry {i} is {g[i]:.6e}, "
                f"finite differences give {fd:.6e}"
            )


def lbfgs(objective: Objective, x0: np.ndarray, cfg: Optional[LbfgsConfig] = None) -> LbfgsOutcome:
    """Minimize ``objective`` (returning value and gradient) from ``x0``.

    Args:
        objective: Maps a parameter vector to ``(value, gradient)``
        x0: Starting point
        cfg: Optimizer settings (defaults when omitted)

    Returns:
        The best iterate, its loss history and the termination reason
    """
    cfg = cfg or LbfgsConfig()
    cache = _Cache(objective)
    x = np.array(x0, dtype=float)
    f, g = cache(x)
    history = [f]
    s_hist: Deque[np.ndarray] = deque(maxlen=cfg.memory)
    y_hist: Deque[np.ndarray] = deque(maxlen=cfg.memory)
    termination = Termination.MAX_ITERS
    iterations = 0

    while iterations < cfg.max_iters:
        if float(np.max(np.abs(g))) < cfg.grad_tol:
            termination = Termination.GRAD_TOL
            break
        if cfg.check_gradient:
            _spot_check(cache, x, g, iterations)

        d = two_loop_direction(g, s_hist, y_hist)
        if float(np.dot(g, d)) >= 0:
            s_hist.clear()
            y_hist.clear()
            d = two_loop_direction(g, s_hist, y_hist)
        try:
            alpha, f_new, g_new = _wolfe_step(cache, x, f, g, d, cfg)
        except LineSearchFailed as e:
            if not s_hist:
                logger.warning(f"Line search failed at iteration {iterations}: {e}")
                termination = Termination.LINESEARCH_FAIL
                break
            logger.debug(f"Iteration {iterations}: {e}; retrying along steepest descent")
            s_hist.clear()
            y_hist.clear()
            d = two_loop_direction(g, s_hist, y_hist)
            try:
                alpha, f_new, g_new = _wolfe_step(cache, x, f, g, d, cfg)
            except LineSearchFailed as e2:
                logger.warning(f"Line search failed at iteration {iterations}: {e2}")
                termination = Termination.LINESEARCH_FAIL
                break

        s = alpha * d
        y = g_new - g
        if float(np.dot(s, y)) > np.finfo(float).eps * float(np.dot(y, y)):
            s_hist.append(s)
            y_hist.append(y)
        x = x + s
        f, g = f_new, g_new
        history.append(f)
        iterations += 1
        if iterations % 100 == 0:
            logger.debug(
                f"Iteration {iterations}: loss {f:.6e}, max |grad| {np.max(np.abs(g)):.3e}"
            )

        if len(history) > cfg.plateau_window:
            before = history[-1 - cfg.plateau_window]
            if before - f <= cfg.loss_tol * max(abs(before), np.finfo(float).tiny):
                termination = Termination.LOSS_PLATEAU
                break

    return LbfgsOutcome(x, f, g, history, iterations, termination, cache.evaluations)


@dataclass_json
@dataclass
class RunSummary:
    """JSON form of a run; the loss history is thinned to 1000 entries."""

    seed: int
    termination: str
    iterations: int
    final_loss: Optional[float]
    loss_history: List[float]
    evaluations: int = 0
    message: str = ""


@dataclass
class RunResult:
    final_params: MlpParams
    loss_history: List[float]
    iterations: int
    seed: int
    termination: Termination
    evaluations: int = 0
    message: str = ""
    config: Dict[str, object] = field(default_factory=dict)

    @property
    def final_loss(self) -> Optional[float]:
        return self.loss_history[-1] if self.loss_history else None

    @property
    def succeeded(self) -> bool:
        return self.termination is not Termination.FAILED

    def summary(self) -> RunSummary:
        return RunSummary(
            seed=self.seed,
            termination=self.termination.value,
            iterations=self.iterations,
            final_loss=self.final_loss,
            loss_history=decimate(self.loss_history),
            evaluations=self.evaluations,
            message=self.message,
        )


def minimize(
    problem: PdeProblem,
    training: PointSet,
    init: MlpParams,
    cfg: Optional[LbfgsConfig] = None,
    objective: Optional[Objective] = None,
) -> RunResult:
    """Train the network from ``init`` on the collocation points.

    Args:
        problem: The PDE problem
        training: Collocation points
        init: Initial parameters
        cfg: Optimizer settings
        objective: Replaces the collocation loss when given (flat vector to
            value and gradient)

    Returns:
        The final parameters, loss history and termination reason
    """
    cfg = cfg or LbfgsConfig()
    if objective is None:
        objective = CollocationLoss(problem, training, init.layer_sizes)
    outcome = lbfgs(objective, init.flat(), cfg)
    logger.info(
        f"Seed {init.seed}: loss {outcome.fun:.6e} after {outcome.iterations} iterations "
        f"({outcome.termination.value})"
    )
    return RunResult(
        final_params=init.with_flat(outcome.x),
        loss_history=outcome.loss_history,
        iterations=outcome.iterations,
        seed=init.seed if init.seed is not None else -1,
        termination=outcome.termination,
        evaluations=outcome.evaluations,
        config=cfg.model_dump(mode="json"),
    )


def _train_seed(
    problem: PdeProblem, training: PointSet, seed: int, cfg: LbfgsConfig, arch: Sequence[int]
) -> RunResult:
    init = xavier_init(arch, seed)
    try:
        return minimize(problem, training, init, cfg)
    except Exception as e:
        logger.error(f"Seed {seed} failed: {e}")
        return RunResult(
            final_params=init,
            loss_history=[],
            iterations=0,
            seed=seed,
            termination=Termination.FAILED,
            message=f"{type(e).__name__}: {e}",
            config=cfg.model_dump(mode="json"),
        )


def multi_seed_train(
    problem: PdeProblem,
    training: PointSet,
    seeds: Sequence[int],
    cfg: LbfgsConfig,
    arch: Sequence[int],
    workers: int = 1,
) -> List[RunResult]:
    """One independent training run per seed, returned in seed order.

    A run that raises is recorded with termination ``failed`` and the other
    runs continue.
    """
    seeds = list(seeds)
    if not seeds:
        raise OptimizationError("multi_seed_train needs at least one seed")
    if workers <= 1:
        results = [_train_seed(problem, training, s, cfg, arch) for s in seeds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda s: _train_seed(problem, training, s, cfg, arch), seeds))
    return sorted(results, key=lambda r: r.seed)
