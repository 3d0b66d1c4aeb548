"""Sigmoidal mirror descent (SiMPL) with backtracking globalization, plus
optimality-criteria and projected-gradient baselines.

One SiMPL step: shift the latent field against the gradient, restore the
volume fraction with a scalar correction, and backtrack the step size until a
sufficient-decrease condition holds. Variant "a" uses a generalized Armijo
condition, variant "b" a Bregman-divergence condition. The initial trial step
comes from a Barzilai-Borwein-style curvature quotient.
"""

from dataclasses import dataclass, field

import numpy as np

from .entropy import (
    _bisect,
    bregman_div,
    bregman_volume_correct,
    inv_sigmoid,
    l2_volume_correct,
    sigmoid,
)
from .physics import Evaluator

__all__ = [
    "LineSearchConfig",
    "StoppingConfig",
    "OptimizerState",
    "SearchResult",
    "LineSearchError",
    "IterationRecord",
    "RunReport",
    "simpl_trial",
    "initial_step",
    "armijo_search",
    "bregman_search",
    "stationarity_bregman",
    "stationarity_l2",
    "StationarityTracker",
    "step_simpl",
    "step_oc",
    "step_pgd",
    "run",
]

METHODS = ("simpl-a", "simpl-b", "oc", "pgd")


@dataclass
class LineSearchConfig:
    backtrack: float = 0.5       # step reduction factor per rejected trial
    armijo_c1: float = 1e-4      # sufficient-decrease coefficient (variant "a")
    max_trials: int = 60
    initial_step: float = 1.0    # used until iterate history exists
    step_cap: float = 1e6        # guards the latent field against overflow

    def __post_init__(self):
        if not 0.0 < self.backtrack < 1.0:
            raise ValueError(f"backtrack must be in (0, 1), got {self.backtrack}")
        if not 0.0 < self.armijo_c1 < 1.0:
            raise ValueError(f"armijo_c1 must be in (0, 1), got {self.armijo_c1}")


@dataclass
class StoppingConfig:
    tol_stationarity: float = 1e-4
    tol_objective: float = 1e-5
    probe_step: float = 1e-3
    max_iters: int = 500

    def __post_init__(self):
        for name in ("tol_stationarity", "tol_objective", "probe_step"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")


@dataclass
class OptimizerState:
    """Current and previous iterate of one SiMPL run.

    The density is always derived from the latent field (``rho = sigmoid(psi)``),
    never stored independently.
    """

    psi: np.ndarray = field(repr=False)
    grad: np.ndarray = field(repr=False)
    compliance: float = np.inf
    k: int = 0
    alpha: float = 1.0
    mu: float = 0.0
    prev_psi: np.ndarray = field(default=None, repr=False)
    prev_grad: np.ndarray = field(default=None, repr=False)
    prev_compliance: float = np.inf
    objective_evals: int = 0
    gradient_evals: int = 0
    ls_trials: int = 0

    @property
    def rho(self):
        return sigmoid(self.psi)


@dataclass
class SearchResult:
    alpha: float
    mu: float
    psi: np.ndarray = field(repr=False)
    rho: np.ndarray = field(repr=False)
    compliance: float = np.inf
    trials: int = 0
    first_trial_accepted: bool = False


class LineSearchError(RuntimeError):
    """Backtracking exhausted its trial budget; carries the best trial seen."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


def simpl_trial(state, alpha, theta, mesh, vol_tol=1e-10):
    """Latent gradient shift followed by the scalar volume correction.

    Returns ``(psi_new, mu, rho_new)``. Equivalent to the primal-dual update
    written on the density whenever the logit of the current density is
    representable.
    """
    if alpha <= 0:
        raise ValueError(f"step size must be positive, got {alpha}")
    psi_half = state.psi - alpha * state.grad
    mu, psi_new = bregman_volume_correct(psi_half, theta, mesh, vol_tol)
    return psi_new, mu, sigmoid(psi_new)


def initial_step(state, mesh, cfg):
    """Barzilai-Borwein-style trial step from the last two iterates.

    s = <psi_k - psi_{k-1}, rho_k - rho_{k-1}> / |<g_k - g_{k-1}, rho_k - rho_{k-1}>|,
    positive by the monotonicity of the sigmoid. Falls back to the previous
    accepted step (or the configured initial step before any history exists)
    when the quotient degenerates, and is capped to avoid latent overflow.
    """
    if state.prev_psi is None:
        return cfg.initial_step
    area = mesh.element_area
    d_rho = sigmoid(state.psi) - sigmoid(state.prev_psi)
    num = area * float(np.sum((state.psi - state.prev_psi) * d_rho))
    den = abs(area * float(np.sum((state.grad - state.prev_grad) * d_rho)))
    if den < 1e-300 or num == 0.0:
        return state.alpha
    return min(num / den, cfg.step_cap)


def _backtrack(state, s, cfg, f_eval, theta, mesh, vol_tol, accept):
    rho_k = sigmoid(state.psi)
    area = mesh.element_area
    best = None
    for m in range(cfg.max_trials):
        alpha = s * cfg.backtrack ** m
        psi_new, mu, rho_new = simpl_trial(state, alpha, theta, mesh, vol_tol)
        f_new = float(f_eval(rho_new))
        decrease = area * float(np.sum(state.grad * (rho_new - rho_k)))
        result = SearchResult(alpha=alpha, mu=mu, psi=psi_new, rho=rho_new,
                              compliance=f_new, trials=m + 1,
                              first_trial_accepted=(m == 0))
        if accept(f_new, decrease, alpha, psi_new):
            return result
        if best is None or f_new < best.compliance:
            best = result
    raise LineSearchError(
        f"no acceptable step within {cfg.max_trials} trials (initial s={s:.3e})",
        best=best)


def armijo_search(state, s, cfg, f_eval, theta, mesh, vol_tol=1e-10):
    """Generalized Armijo backtracking: accept the first alpha = s * beta^m with
    F(rho+) <= F(rho_k) + c1 * <grad, rho+ - rho_k>.

    The volume multiplier is recomputed at every trial. Raises LineSearchError
    (with the best trial attached) if the budget is exhausted.
    """
    def accept(f_new, decrease, alpha, psi_new):
        return f_new <= state.compliance + cfg.armijo_c1 * decrease

    return _backtrack(state, s, cfg, f_eval, theta, mesh, vol_tol, accept)


def bregman_search(state, s, cfg, f_eval, theta, mesh, vol_tol=1e-10):
    """Bregman backtracking: accept the first alpha = s * beta^m with
    F(rho+) <= F(rho_k) + <grad, rho+ - rho_k> + D(rho+, rho_k) / alpha.
    """
    area = mesh.element_area

    def accept(f_new, decrease, alpha, psi_new):
        div = bregman_div(psi_new, state.psi, area)
        return f_new <= state.compliance + decrease + div / alpha

    return _backtrack(state, s, cfg, f_eval, theta, mesh, vol_tol, accept)


def stationarity_bregman(psi, grad, theta, mesh, probe_step=1e-3, vol_tol=1e-10):
    """Bregman divergence between a projected small probe step and the iterate."""
    probe = psi - probe_step * grad
    _, psi_probe = bregman_volume_correct(probe, theta, mesh, vol_tol)
    return bregman_div(psi_probe, psi, mesh.element_area)


def stationarity_l2(rho, grad, theta, mesh, probe_step=1e-3, vol_tol=1e-10):
    """L2 distance between a projected small probe step and the iterate."""
    probe = l2_volume_correct(rho - probe_step * grad, theta, mesh, vol_tol)
    return float(np.sqrt(mesh.element_area * np.sum((probe - rho) ** 2)))


class StationarityTracker:
    """Normalizes a stationarity probe by its first (iteration-0) value.

    The first call returns 1.0; if the reference is zero the iterate is
    already stationary and every ratio reports 0.0.
    """

    def __init__(self, raw_fn):
        self._raw = raw_fn
        self.reference = None

    def ratio(self, *args, **kwargs):
        value = self._raw(*args, **kwargs)
        if self.reference is None:
            self.reference = value
            return 1.0 if value > 0.0 else 0.0
        if self.reference == 0.0:
            return 0.0
        return value / self.reference


def step_simpl(state, variant, cfg, f_eval, theta, mesh, vol_tol=1e-10):
    """One accepted SiMPL step; mutates and returns the state.

    ``variant`` is "a" (Armijo) or "b" (Bregman). ``f_eval`` must return the
    objective value at a trial density.
    """
    s = initial_step(state, mesh, cfg)
    search = armijo_search if variant == "a" else bregman_search
    result = search(state, s, cfg, f_eval, theta, mesh, vol_tol)
    state.prev_psi, state.prev_grad = state.psi, state.grad
    state.prev_compliance = state.compliance
    state.psi = result.psi
    state.grad = None  # stale until the caller attaches the new gradient
    state.compliance = result.compliance
    state.alpha = result.alpha
    state.mu = result.mu
    state.k += 1
    state.ls_trials += result.trials
    return state, result


def step_oc(rho, grad, theta, mesh, move=0.2, damping=0.5, vol_tol=1e-10):
    """Optimality-criteria update with multiplicative bisection.

    rho+ = clip(rho * (-grad / lambda)^damping) within the move limit and
    [0, 1], with lambda > 0 fixing the volume fraction. Scaling the gradient
    by any positive constant leaves the update unchanged.
    """
    rho = np.asarray(rho, dtype=float)
    b = np.maximum(0.0, -np.asarray(grad, dtype=float))
    lower = np.maximum(rho - move, 0.0)
    upper = np.minimum(rho + move, 1.0)

    def candidate(lam):
        return np.clip(rho * (b / lam) ** damping, lower, upper)

    def residual(lam):
        # increasing in lam (more penalty -> less material -> theta - mean grows)
        return theta - float(np.mean(candidate(lam)))

    lo, hi = 1e-12, 1e12
    for _ in range(200):
        if residual(lo) <= 0.0:
            break
        lo *= 0.5
    for _ in range(200):
        if residual(hi) >= 0.0:
            break
        hi *= 2.0
    if residual(lo) > 0.0 or residual(hi) < 0.0:
        raise RuntimeError("OC multiplier bracket could not be established")
    lam = _bisect(residual, lo, hi, vol_tol)
    return candidate(lam)


def step_pgd(rho, grad, alpha, theta, mesh, vol_tol=1e-10):
    """Projected gradient descent update with a fixed step size."""
    return l2_volume_correct(rho - alpha * grad, theta, mesh, vol_tol)


@dataclass
class IterationRecord:
    k: int
    compliance: float
    stationarity: float
    stationarity_l2: float
    step: float
    ls_trials: int
    volume_error: float
    increment_l2: float
    first_trial_accepted: bool = True


@dataclass
class RunReport:
    """Per-iteration trace and totals of one optimization run.

    ``objective_evals`` counts line-search trial evaluations (the initial
    evaluation at the starting density belongs to the iteration-0 gradient);
    ``gradient_evals`` counts gradient solves, one per visited iterate.
    """

    method: str
    converged: bool
    iterations: int
    objective_evals: int
    gradient_evals: int
    history: list
    final_density: np.ndarray = field(repr=False)
    final_psi: np.ndarray = field(default=None, repr=False)
    first_trial_accepts: int = 0
    failure: str = None

    @property
    def final_compliance(self):
        return self.history[-1].compliance


def _volume_error(rho, theta):
    return abs(float(np.mean(rho)) - theta)


def _increment_l2(rho_new, rho_old, area):
    return float(np.sqrt(area * np.sum((rho_new - rho_old) ** 2)))


def run(config):
    """Execute one optimization run described by a RunConfig.

    Deterministic: identical configs produce identical reports.
    """
    spec = config.problem()
    ev = Evaluator(spec, rel_tol=config.pde_rel_tol)
    method = config.method
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}, expected one of {METHODS}")
    if method in ("simpl-a", "simpl-b"):
        return _run_simpl(config, spec, ev, method[-1])
    return _run_baseline(config, spec, ev, method)


def _run_simpl(config, spec, ev, variant):
    mesh, theta = spec.mesh, spec.volume_fraction
    area, vol_tol = mesh.element_area, config.volume_tol
    ls_cfg, stop = config.line_search, config.stopping

    state = OptimizerState(psi=np.full(mesh.num_elements, inv_sigmoid(theta)),
                           grad=None, alpha=ls_cfg.initial_step)
    rec = ev.evaluate(state.rho, need_gradient=True)
    state.compliance = rec.compliance
    state.grad = rec.gradient
    state.gradient_evals = 1

    breg = StationarityTracker(stationarity_bregman)
    l2 = StationarityTracker(stationarity_l2)
    ratio = breg.ratio(state.psi, state.grad, theta, mesh, stop.probe_step, vol_tol)
    ratio_l2 = l2.ratio(state.rho, state.grad, theta, mesh, stop.probe_step, vol_tol)
    history = [IterationRecord(0, state.compliance, ratio, ratio_l2, 0.0, 0,
                               _volume_error(state.rho, theta), 0.0)]
    converged = breg.reference == 0.0
    failure = None
    first_accepts = 0

    last_trial = {}

    def f_eval(rho):
        state.objective_evals += 1
        trial_rec = ev.evaluate(rho, need_gradient=False)
        last_trial["rec"] = trial_rec
        return trial_rec.compliance

    while not converged and state.k < stop.max_iters:
        rho_old = state.rho
        try:
            state, result = step_simpl(state, variant, ls_cfg, f_eval, theta,
                                        mesh, vol_tol)
        except LineSearchError as err:
            failure = str(err)
            break
        first_accepts += result.first_trial_accepted
        # The accepted trial was the last evaluation; one extra filter-type
        # solve on its record produces the new gradient.
        rec = last_trial["rec"]
        state.grad = ev.attach_gradient(rec)
        state.gradient_evals += 1

        ratio = breg.ratio(state.psi, state.grad, theta, mesh, stop.probe_step, vol_tol)
        ratio_l2 = l2.ratio(state.rho, state.grad, theta, mesh, stop.probe_step, vol_tol)
        history.append(IterationRecord(
            state.k, state.compliance, ratio, ratio_l2, result.alpha,
            result.trials, _volume_error(state.rho, theta),
            _increment_l2(state.rho, rho_old, area), result.first_trial_accepted))

        obj_change = abs(state.compliance - state.prev_compliance) / abs(state.compliance)
        if ratio < stop.tol_stationarity ** 2 and obj_change <= stop.tol_objective:
            converged = True

    return RunReport(
        method=f"simpl-{variant}", converged=converged, iterations=state.k,
        objective_evals=state.objective_evals, gradient_evals=state.gradient_evals,
        history=history, final_density=state.rho, final_psi=state.psi.copy(),
        first_trial_accepts=first_accepts, failure=failure)


def _run_baseline(config, spec, ev, method):
    mesh, theta = spec.mesh, spec.volume_fraction
    area, vol_tol = mesh.element_area, config.volume_tol
    stop = config.stopping

    rho = np.full(mesh.num_elements, theta)
    rec = ev.evaluate(rho, need_gradient=True)
    compliance = rec.compliance
    objective_evals = gradient_evals = 1

    l2 = StationarityTracker(stationarity_l2)
    ratio = l2.ratio(rho, rec.gradient, theta, mesh, stop.probe_step, vol_tol)
    history = [IterationRecord(0, compliance, ratio, ratio, 0.0, 0,
                               _volume_error(rho, theta), 0.0)]
    converged = l2.reference == 0.0

    k = 0
    while not converged and k < stop.max_iters:
        if method == "oc":
            rho_new = step_oc(rho, rec.gradient, theta, mesh,
                              move=config.oc_move_limit, damping=config.oc_damping,
                              vol_tol=vol_tol)
            step = config.oc_damping
        else:
            rho_new = step_pgd(rho, rec.gradient, config.pgd_step, theta, mesh,
                               vol_tol=vol_tol)
            step = config.pgd_step
        k += 1
        prev_compliance = compliance
        rec = ev.evaluate(rho_new, need_gradient=True)
        compliance = rec.compliance
        objective_evals += 1
        gradient_evals += 1

        ratio = l2.ratio(rho_new, rec.gradient, theta, mesh, stop.probe_step, vol_tol)
        history.append(IterationRecord(
            k, compliance, ratio, ratio, step, 1,
            _volume_error(rho_new, theta), _increment_l2(rho_new, rho, area)))
        rho = rho_new

        obj_change = abs(compliance - prev_compliance) / abs(compliance)
        if ratio < stop.tol_stationarity and obj_change <= stop.tol_objective:
            converged = True

    return RunReport(
        method=method, converged=converged, iterations=k,
        objective_evals=objective_evals, gradient_evals=gradient_evals,
        history=history, final_density=rho)
