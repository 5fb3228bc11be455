"""Projected gradient descent over the spiked cone under the Θ-norm.

The parameter θ = (λ, v) lives in the product of the coefficient cone
(nonnegative entries for classes M0–M4, free for M5) and R^d.  The Θ-norm is
‖θ‖² = λᵀQλ + ‖v‖² with Q the dictionary Gram matrix; one PGD step is

    λ⁺ = proj_{K,Q}(λ − h·Q⁻¹∇_λF̂),   v⁺ = v − h·∇_vF̂ ,

with default step size h = 1/(L + Υ), L = L_V ∨ (L'_V/2) and
Υ = 9δ⁻²((L'_V)^{1/2} + (d−1)L_V^{1/2})²‖Q⁻¹‖₂.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .objective import SaaSample, TargetOverflowError, free_energy, gradient
from .starmap import ConeViolationError, StarMapParams

MAX_HALVINGS = 10


class OptimizerError(RuntimeError):
    pass


@dataclass
class PgdConfig:
    """Algorithm parameters; ``step_size=None`` uses the default 1/(L+Υ)."""

    step_size: float | None = None
    max_iters: int = 5000
    tol: float = 1e-6
    proj_tol: float = 1e-10
    seed: int = 0
    n_samples: int = 20000
    safeguard: bool | None = None  # None: on iff step_size overridden

    @classmethod
    def from_dict(cls, block):
        allowed = {f for f in cls.__dataclass_fields__}
        unknown = set(block) - allowed
        if unknown:
            raise ValueError(f"unknown optimizer config keys: {sorted(unknown)}")
        return cls(**block)


@dataclass
class FitResult:
    params: StarMapParams
    free_energy_trace: np.ndarray
    grad_norm_trace: np.ndarray
    halving_trace: np.ndarray
    iterations: int
    termination: str
    step_size: float
    kappa: float
    upsilon: float


def compute_upsilon(consts, spec, gram) -> float:
    """Υ = 9δ⁻²((L'_V)^{1/2} + (d−1)L_V^{1/2})²·‖Q⁻¹‖₂."""
    if not (np.isfinite(consts.L) and np.isfinite(consts.L_root)):
        raise ValueError("missing regularity constants")
    factor = (math.sqrt(consts.L_root)
              + (spec.d - 1) * math.sqrt(consts.L)) ** 2
    return 9.0 / spec.delta ** 2 * factor * gram.inv_norm


# ---------------------------------------------------------------------------
# Projection onto the cone under the Q-norm
# ---------------------------------------------------------------------------

def project_cone_q(z, gram, constrained, warm_active=None, tol=1e-10,
                   return_active=False):
    """argmin_{θ: θ_i ≥ 0 for i constrained} ‖θ − z‖_Q².

    Primal active-set method.  Equality-constrained subproblems are solved
    through the precomputed dense W = Q⁻¹ via the block-inverse identity
    Q_FF⁻¹ Q_FA = −W_FA W_AA⁻¹, so a working set A costs O(p·|A|² + |A|³).
    Terminates with KKT residual below ``tol``.
    """
    z = np.asarray(z, dtype=float)
    Q = gram.Q
    W = gram.inverse
    p = z.size
    constrained = np.asarray(constrained, dtype=bool)

    active = np.zeros(p, dtype=bool)
    if warm_active is None:
        active[constrained & (z < 0)] = True
    else:
        for a in warm_active:
            if constrained[a]:
                active[a] = True

    def subproblem(active_mask):
        """Optimum with θ_A = 0: θ_F = z_F − W_FA W_AA⁻¹ z_A."""
        A = np.flatnonzero(active_mask)
        if A.size == 0:
            return z.copy()
        WAA = W[np.ix_(A, A)]
        try:
            y = np.linalg.solve(WAA, z[A])
        except np.linalg.LinAlgError as exc:
            raise OptimizerError("projection subproblem singular") from exc
        out = z - W[:, A] @ y
        out[A] = 0.0
        return out

    # Block principal pivoting: flip every violated index per sweep, falling
    # back to single-index pivots if the infeasibility count stalls.
    best_infeas = p + 1
    block_budget = 30
    max_iter = 10 * p + 100
    theta = None
    for _ in range(max_iter):
        theta = subproblem(active)
        mu = Q @ (theta - z)
        primal = constrained & ~active & (theta < -1e-14)
        dual = active & (mu < -tol)
        n_infeas = int(primal.sum() + dual.sum())
        if n_infeas == 0:
            break
        if n_infeas < best_infeas:
            best_infeas = n_infeas
            block_budget = 30
        else:
            block_budget -= 1
        if block_budget > 0:
            active[primal] = True
            active[dual] = False
        else:
            # single pivot on the worst infeasibility (finite termination)
            cand = np.where(primal, theta, np.where(dual, mu, 0.0))
            k = int(np.argmin(cand))
            active[k] = not active[k]
    else:
        raise OptimizerError("projection active-set did not converge")

    theta[constrained & (np.abs(theta) < 1e-15)] = 0.0
    g = Q @ (theta - z)
    resid = float(np.abs(g[~active]).max(initial=0.0))
    if resid > tol * max(1.0, float(np.abs(Q @ z).max())):
        raise OptimizerError(f"projection KKT residual {resid:.2e}")
    if return_active:
        return theta, set(np.flatnonzero(active))
    return theta


# ---------------------------------------------------------------------------
# MAP initialization
# ---------------------------------------------------------------------------

def map_point(target, x0=None, iters=20):
    """Mode of the target by damped Newton with Armijo backtracking."""
    x = np.zeros(target.d) if x0 is None else np.asarray(x0, dtype=float)
    fx = float(target.potential(x))
    for _ in range(iters):
        g = target.grad(x)
        H = target.hessian(x)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = g
        t = 1.0
        for _ in range(30):
            xn = x - t * step
            fn = float(target.potential(xn))
            if fn <= fx - 1e-4 * t * float(g @ step):
                break
            t *= 0.5
        else:
            break
        x, fx = xn, fn
        if np.linalg.norm(g) < 1e-12:
            break
    return x


# ---------------------------------------------------------------------------
# PGD driver
# ---------------------------------------------------------------------------

def run_pgd(target, spec, gram, config: PgdConfig, consts=None,
            init: StarMapParams | None = None, sample: SaaSample | None = None
            ) -> FitResult:
    if consts is None:
        consts = target.regularity_constants()
    L = max(consts.L, consts.L_root / 2.0)
    upsilon = compute_upsilon(consts, spec, gram)
    alpha_strong = min(consts.ell, consts.ell_root)
    kappa = (L + upsilon) / alpha_strong if alpha_strong > 0 else math.inf

    if config.step_size is None:
        h = 1.0 / (L + upsilon)
        safeguard = bool(config.safeguard) if config.safeguard is not None \
            else bool(consts.warnings)
    else:
        h = float(config.step_size)
        safeguard = True if config.safeguard is None else bool(config.safeguard)
    if h <= 0:
        raise ValueError("step size must be positive")

    if sample is None:
        sample = SaaSample.build(config.seed, config.n_samples, spec.d)
    if init is None:
        init = StarMapParams(consts.spike(spec.d), np.zeros(spec.p),
                             map_point(target))
    params = init.copy()

    fe = free_energy(params, spec, target, sample)
    fvals = [fe.value]
    gnorms = []
    halvings = []
    active = None
    termination = "max-iter"
    iters = 0

    cur_step = h
    for it in range(config.max_iters):
        glam, gv = gradient(params, spec, target, sample)
        nat = gram.solve(glam)

        # sticky step: halvings persist, with one doubling (capped at h)
        # attempted after any non-halved accepted iteration
        step = min(h, 2.0 * cur_step) if safeguard else h
        n_halved = 0
        while True:
            lam_new, active_new = project_cone_q(
                params.lam - step * nat, gram, spec.constrained,
                warm_active=active, tol=config.proj_tol, return_active=True)
            v_new = params.v - step * gv
            trial = StarMapParams(params.alpha, lam_new, v_new)
            try:
                fe_new = free_energy(trial, spec, target, sample)
            except (TargetOverflowError, ConeViolationError):
                if n_halved >= MAX_HALVINGS:
                    raise
                fe_new = None
            if fe_new is not None and (
                    fe_new.value <= fvals[-1] + 1e-12 or not safeguard):
                break
            if n_halved >= MAX_HALVINGS:
                if fe_new is None:
                    raise OptimizerError(
                        "step halvings exhausted without a finite step")
                break
            step *= 0.5
            n_halved += 1
        cur_step = step

        dlam = trial.lam - params.lam
        dv = trial.v - params.v
        theta_norm = math.sqrt(max(0.0, float(dlam @ (gram.Q @ dlam))
                                   + float(dv @ dv))) / step
        params = trial
        active = active_new
        fvals.append(fe_new.value)
        gnorms.append(theta_norm)
        halvings.append(n_halved)
        iters = it + 1
        if theta_norm <= config.tol:
            termination = "tolerance"
            break

    return FitResult(params, np.asarray(fvals), np.asarray(gnorms),
                     np.asarray(halvings, dtype=int), iters, termination,
                     h, kappa, upsilon)
