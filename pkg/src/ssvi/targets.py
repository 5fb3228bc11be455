"""Posterior target potentials pi ∝ exp(-V).

Each target exposes the potential V, its gradient and Hessian, and curvature
("regularity") constants used to size the spike vector, the PGD step size, and
the approximation-bound certificate.  The root coordinate is index 0; leaves
are indices 1..d-1.

Families:
  * :class:`GaussianTarget` — V(z) = ½(z−m)ᵀΣ⁻¹(z−m).
  * :class:`GlmLocationTarget` — GLM with a location family of priors; the
    root is the shared location parameter and the leaves are the regression
    coefficients.
  * :class:`SpikeSlabGlmTarget` — GLM with a two-Gaussian scale-mixture prior
    on the leaf coefficients and a quadratic debiasing term on the root.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_expit


# ---------------------------------------------------------------------------
# Regularity constants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegularityConstants:
    """Curvature bounds of V.

    Attributes:
        ell: lower curvature bound of the leaf Hessian block (ℓ).
        L: upper curvature bound of the leaf Hessian block.
        ell_root: effective root curvature after subtracting the root–leaf
            interaction (the root-domination constant ℓ').
        L_root: stored as 2·sup ∂²V/∂z₁² so it plugs directly into the spike
            component α₁ = L_root^{-1/2} and the step size.
        L_mixed: bound on the mixed derivative of the optimal leaf
            conditionals; informational only, may be None when the defining
            denominator is nonpositive.
        warnings: non-fatal issues (e.g. "root domination violated").
    """

    ell: float
    L: float
    ell_root: float
    L_root: float
    L_mixed: float | None = None
    warnings: tuple[str, ...] = ()

    def spike(self, d: int) -> np.ndarray:
        """Spike vector alpha = (L_root^{-1/2}, L^{-1/2}, ..., L^{-1/2})."""
        if not (self.L_root > 0 and self.L > 0):
            raise ValueError("spike requires positive curvature upper bounds")
        alpha = np.full(d, 1.0 / np.sqrt(self.L))
        alpha[0] = 1.0 / np.sqrt(self.L_root)
        return alpha

    def with_overrides(self, overrides: dict | None) -> "RegularityConstants":
        if not overrides:
            return self
        allowed = {"ell", "L", "ell_root", "L_root", "L_mixed"}
        unknown = set(overrides) - allowed
        if unknown:
            raise ValueError(f"unknown regularity overrides: {sorted(unknown)}")
        vals = {k: getattr(self, k) for k in allowed}
        vals.update(overrides)
        return RegularityConstants(warnings=self.warnings, **vals)


def _check_constants(ell, L, ell_root, L_root, L_mixed, warnings):
    warnings = list(warnings)
    if not np.isfinite(ell) or ell <= 0:
        warnings.append("leaf curvature lower bound nonpositive")
    if not np.isfinite(ell_root) or ell_root <= 0:
        warnings.append("root domination violated (ell_root <= 0)")
    return RegularityConstants(
        ell=float(ell), L=float(L), ell_root=float(ell_root),
        L_root=float(L_root),
        L_mixed=None if L_mixed is None else float(L_mixed),
        warnings=tuple(warnings),
    )


# ---------------------------------------------------------------------------
# Base class
# ---------------------------------------------------------------------------

class TargetPotential:
    """Abstract target with potential, gradient and Hessian evaluators.

    All evaluators are vectorized over leading batch dimensions: ``z`` may be
    shape ``(d,)`` or ``(n, d)``.
    """

    d: int

    def potential(self, z):
        raise NotImplementedError

    def grad(self, z):
        raise NotImplementedError

    def hessian(self, z):
        """Full Hessian, shape ``z.shape + (d,)``."""
        raise NotImplementedError

    def hessian_entry(self, z, i, j):
        """Single Hessian entry ∂²V/∂z_i∂z_j (0-based indices)."""
        if not (0 <= i < self.d and 0 <= j < self.d):
            raise IndexError(f"hessian index out of range: ({i}, {j})")
        return self.hessian(z)[..., i, j]

    def regularity_constants(self, overrides=None) -> RegularityConstants:
        raise NotImplementedError

    def _check_dim(self, z):
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.d:
            raise ValueError(
                f"dimension mismatch: expected {self.d}, got {z.shape[-1]}")
        return z


# ---------------------------------------------------------------------------
# Gaussian target
# ---------------------------------------------------------------------------

class GaussianTarget(TargetPotential):
    """V(z) = ½ (z − m)ᵀ Σ⁻¹ (z − m)."""

    def __init__(self, mean, cov):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.asarray(cov, dtype=float)
        if cov.shape != (mean.size, mean.size):
            raise ValueError("covariance shape does not match mean")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12):
            raise ValueError("covariance must be symmetric")
        eigs = np.linalg.eigvalsh(cov)
        if eigs.min() <= 0:
            raise ValueError("covariance must be positive definite")
        self.d = mean.size
        self.mean = mean
        self.cov = 0.5 * (cov + cov.T)
        self.precision = np.linalg.inv(self.cov)
        self.precision = 0.5 * (self.precision + self.precision.T)
        resid = np.abs(self.cov @ self.precision - np.eye(self.d)).max()
        if resid > 1e-10:
            raise ValueError(f"precision inaccurate (residual {resid:.2e})")

    def potential(self, z):
        z = self._check_dim(z)
        diff = z - self.mean
        return 0.5 * np.einsum("...i,ij,...j->...", diff, self.precision, diff)

    def grad(self, z):
        z = self._check_dim(z)
        return (z - self.mean) @ self.precision

    def hessian(self, z):
        z = self._check_dim(z)
        return np.broadcast_to(self.precision, z.shape[:-1] + (self.d, self.d))

    def regularity_constants(self, overrides=None):
        P = self.precision
        leaf = P[1:, 1:]
        eigs = np.linalg.eigvalsh(leaf) if leaf.size else np.array([1.0])
        ell, L = eigs.min(), eigs.max()
        cross = P[0, 1:]
        ell_root = P[0, 0] - float(cross @ cross) / ell
        L_root = 2.0 * P[0, 0]
        # Mixed-derivative bound: ell * max|P_{1i}| / (ell - max_i sum_{j!=i}|P_{ij}|)
        L_mixed = None
        if self.d > 1:
            off = np.abs(leaf) - np.diag(np.diag(np.abs(leaf)))
            denom = ell - off.sum(axis=1).max()
            if denom > 0:
                L_mixed = ell * np.abs(cross).max() / denom
        consts = _check_constants(ell, L, ell_root, L_root, L_mixed, ())
        return consts.with_overrides(overrides)


# ---------------------------------------------------------------------------
# GLM building blocks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LogPartition:
    """Log-partition function of an exponential family.

    ``curv_lower``/``curv_upper`` are global bounds on the second derivative;
    None means unavailable (must be user-supplied or overridden).
    """

    name: str
    curv_lower: float | None
    curv_upper: float | None

    def value(self, t):
        t = np.asarray(t, dtype=float)
        if self.name == "linear":
            return 0.5 * t * t
        if self.name == "logistic":
            return -log_expit(-t)
        if self.name == "poisson":
            return np.exp(t)
        raise ValueError(self.name)

    def deriv(self, t):
        t = np.asarray(t, dtype=float)
        if self.name == "linear":
            return t
        if self.name == "logistic":
            return expit(t)
        if self.name == "poisson":
            return np.exp(t)
        raise ValueError(self.name)

    def deriv2(self, t):
        t = np.asarray(t, dtype=float)
        if self.name == "linear":
            return np.ones_like(t)
        if self.name == "logistic":
            s = expit(t)
            return s * (1.0 - s)
        if self.name == "poisson":
            return np.exp(t)
        raise ValueError(self.name)


LOG_PARTITIONS = {
    "linear": LogPartition("linear", 1.0, 1.0),
    "logistic": LogPartition("logistic", None, 0.25),
    "poisson": LogPartition("poisson", None, None),
}


class GaussianPrior:
    """ϱ(t) = τ² t² / 2."""

    def __init__(self, precision):
        if precision <= 0:
            raise ValueError("prior precision must be positive")
        self.tau2 = float(precision)
        self.curv_lower = self.tau2
        self.curv_upper = self.tau2

    def value(self, t):
        return 0.5 * self.tau2 * np.square(t)

    def deriv(self, t):
        return self.tau2 * np.asarray(t, dtype=float)

    def deriv2(self, t):
        return np.full_like(np.asarray(t, dtype=float), self.tau2)


class LogisticPrior:
    """Negative log-density of the logistic distribution with scale s."""

    def __init__(self, scale):
        if scale <= 0:
            raise ValueError("prior scale must be positive")
        self.scale = float(scale)
        self.curv_lower = 0.0
        self.curv_upper = 0.5 / scale ** 2

    def value(self, t):
        u = np.asarray(t, dtype=float) / self.scale
        return np.log(self.scale) + u - 2.0 * log_expit(u)

    def deriv(self, t):
        u = np.asarray(t, dtype=float) / self.scale
        return (2.0 * expit(u) - 1.0) / self.scale

    def deriv2(self, t):
        u = np.asarray(t, dtype=float) / self.scale
        s = expit(u)
        return 2.0 * s * (1.0 - s) / self.scale ** 2


def _abs_gram(X, c):
    """|X|ᵀ|X| / c — entrywise envelope of the data Hessian term."""
    aX = np.abs(X)
    return aX.T @ aX / c


# ---------------------------------------------------------------------------
# GLM with a location family of priors
# ---------------------------------------------------------------------------

class GlmLocationTarget(TargetPotential):
    """GLM posterior with shared location parameter.

    Variable layout: z = (ϑ, β₁, …, β_k) with the location ϑ as the root;
    total dimension d = k + 1 for a k-column design matrix.

    V(ϑ, β) = g(ϑ) − wᵀβ + Σᵢ ψ(Xᵢᵀβ)/c + Σⱼ ϱ(βⱼ − ϑ)

    with w = Xᵀy/c, dispersion c, log-partition ψ, prior potential ϱ and
    hyperprior potential g.
    """

    def __init__(self, X, y, family="linear", dispersion=1.0,
                 prior=None, hyperprior=None, psi_lower=None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if X.shape[0] != y.size:
            raise ValueError("design and response sizes differ")
        if dispersion <= 0:
            raise ValueError("dispersion must be positive")
        if isinstance(family, str):
            family = LOG_PARTITIONS[family]
        self.X = X
        self.y = y
        self.family = family
        self.c = float(dispersion)
        self.prior = prior if prior is not None else GaussianPrior(1.0)
        self.hyperprior = (hyperprior if hyperprior is not None
                           else GaussianPrior(1.0))
        self.psi_lower = psi_lower
        self.n_obs, self.k = X.shape
        self.d = self.k + 1
        self.A = X.T @ X / self.c
        self.w = X.T @ y / self.c

    def _split(self, z):
        z = self._check_dim(z)
        return z[..., 0], z[..., 1:]

    def potential(self, z):
        theta, beta = self._split(z)
        lin = beta @ self.X.T
        return (self.hyperprior.value(theta)
                - beta @ self.w
                + self.family.value(lin).sum(axis=-1) / self.c
                + self.prior.value(beta - theta[..., None]).sum(axis=-1))

    def grad(self, z):
        z = self._check_dim(z)
        theta, beta = z[..., 0], z[..., 1:]
        lin = beta @ self.X.T
        dprior = self.prior.deriv(beta - theta[..., None])
        g = np.empty(z.shape, dtype=float)
        g[..., 0] = self.hyperprior.deriv(theta) - dprior.sum(axis=-1)
        g[..., 1:] = (-self.w + self.family.deriv(lin) @ self.X / self.c
                      + dprior)
        return g

    def hessian(self, z):
        theta, beta = self._split(z)
        lin = beta @ self.X.T
        d2prior = self.prior.deriv2(beta - theta[..., None])
        H = np.zeros(np.shape(z)[:-1] + (self.d, self.d), dtype=float)
        H[..., 0, 0] = self.hyperprior.deriv2(theta) + d2prior.sum(axis=-1)
        H[..., 0, 1:] = -d2prior
        H[..., 1:, 0] = -d2prior
        H[..., 1:, 1:] = (np.einsum("...n,ni,nj->...ij",
                                    self.family.deriv2(lin) / self.c,
                                    self.X, self.X)
                          + np.einsum('...j,jk->...jk', d2prior,
                                      np.eye(self.k)))
        return H

    def regularity_constants(self, overrides=None):
        warnings = []
        b = self.family.curv_lower
        if b is None:
            b = self.psi_lower
        B = self.family.curv_upper
        if b is None or B is None:
            warnings.append(
                "log-partition curvature bounds unavailable; overrides required")
            consts = RegularityConstants(
                ell=np.nan, L=np.nan, ell_root=np.nan, L_root=np.nan,
                L_mixed=None, warnings=tuple(warnings))
            out = consts.with_overrides(overrides)
            if overrides is None or not np.isfinite(
                    [out.ell, out.L, out.ell_root, out.L_root]).all():
                raise ValueError(
                    f"constants unavailable for family '{self.family.name}' "
                    "without overrides")
            return out
        eigs = np.linalg.eigvalsh(self.A)
        a_lo, a_hi = eigs.min(), eigs.max()
        r_lo = self.prior.curv_lower
        r_hi = self.prior.curv_upper
        g_lo = self.hyperprior.curv_lower
        g_hi = self.hyperprior.curv_upper
        k = self.k
        ell = b * a_lo + r_lo
        L = B * a_hi + r_hi
        ell_root = g_lo + k * r_lo - (k * r_hi ** 2 / ell if ell > 0 else np.inf)
        L_root = 2.0 * (g_hi + k * r_hi)
        L_mixed = None
        if ell > 0:
            At = _abs_gram(self.X, self.c)
            off = B * (At.sum(axis=1) - np.diag(At))
            denom = ell - (off.max() if off.size else 0.0)
            if denom > 0:
                L_mixed = ell * r_hi / denom
        consts = _check_constants(ell, L, ell_root, L_root, L_mixed, warnings)
        return consts.with_overrides(overrides)


# ---------------------------------------------------------------------------
# Spike-and-slab GLM
# ---------------------------------------------------------------------------

def _mixture_logpdf_terms(x, eta, tau0, tau1):
    """Log of the two weighted component densities of η·ν₀ + (1−η)·ν₁.

    ν_k is the centered normal density with precision τ_k².
    """
    x = np.asarray(x, dtype=float)
    halflog2pi = 0.5 * np.log(2.0 * np.pi)
    a0 = (np.log(eta) if eta > 0 else -np.inf) + np.log(tau0) \
        - 0.5 * (tau0 * x) ** 2 - halflog2pi
    a1 = (np.log1p(-eta) if eta < 1 else -np.inf) + np.log(tau1) \
        - 0.5 * (tau1 * x) ** 2 - halflog2pi
    return a0, a1


def mixture_neglog(x, eta, tau0, tau1):
    """ξ(x) = −log(η ν₀(x) + (1−η) ν₁(x))."""
    a0, a1 = _mixture_logpdf_terms(x, eta, tau0, tau1)
    return -np.logaddexp(a0, a1)


def mixture_neglog_deriv(x, eta, tau0, tau1):
    """ξ′(x) = x · (w₀τ₀² + w₁τ₁²) with posterior component weights w."""
    x = np.asarray(x, dtype=float)
    a0, a1 = _mixture_logpdf_terms(x, eta, tau0, tau1)
    w0 = expit(a0 - a1)
    return x * (w0 * tau0 ** 2 + (1.0 - w0) * tau1 ** 2)


def mixture_neglog_deriv2(x, eta, tau0, tau1):
    """ξ″(x) = (w₀τ₀² + w₁τ₁²) − x² w₀w₁ (τ₀² − τ₁²)²."""
    x = np.asarray(x, dtype=float)
    a0, a1 = _mixture_logpdf_terms(x, eta, tau0, tau1)
    w0 = expit(a0 - a1)
    w1 = 1.0 - w0
    s = w0 * tau0 ** 2 + w1 * tau1 ** 2
    return s - x * x * w0 * w1 * (tau0 ** 2 - tau1 ** 2) ** 2


def mixture_log_concavity_bound(eta, tau0, tau1):
    """Lower bound on ξ″ for the two-Gaussian scale mixture.

    Returns τ₁² − 2(τ₀²−τ₁²)·log(1 + ητ₀/((1−η)·e·τ₁)).  Degenerate cases:
    η=0 returns τ₁² and η=1 returns τ₀² (single-component mixtures are exactly
    Gaussian).
    """
    if not (0.0 <= eta <= 1.0):
        raise ValueError("eta must lie in [0, 1]")
    if not (0.0 < tau1 < tau0):
        raise ValueError("require 0 < tau1 < tau0")
    if eta == 0.0:
        return tau1 ** 2
    if eta == 1.0:
        return tau0 ** 2
    zeta = eta * tau0 / ((1.0 - eta) * tau1)
    return tau1 ** 2 - 2.0 * (tau0 ** 2 - tau1 ** 2) * np.log1p(zeta / np.e)


class SpikeSlabGlmTarget(TargetPotential):
    """GLM with a spike-and-slab prior on the leaf coefficients.

    Variable layout: z = (β₁, …, β_d) with β₁ (the coefficient of the first
    design column) as the root.

    V(β) = Σᵢ ψ(Xᵢᵀβ)/c − wᵀβ + Σ_{j≥2} ξ(βⱼ) + g(β₁ + Σ_{j≥2} γⱼ βⱼ)

    where ξ is the mixture negative log-density, γⱼ = X₁ᵀXⱼ/‖X₁‖² and
    g(t) = τ² t²/2 is the quadratic debiasing term.
    """

    def __init__(self, X, y, family="linear", dispersion=1.0,
                 eta=0.5, tau0=2.0, tau1=1.0, debias_precision=1.0,
                 psi_lower=None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if X.shape[0] != y.size:
            raise ValueError("design and response sizes differ")
        if X.shape[1] < 2:
            raise ValueError("spike-slab target needs at least two columns")
        if not (0.0 <= eta <= 1.0):
            raise ValueError("eta must lie in [0, 1]")
        if not (0.0 < tau1 < tau0):
            raise ValueError("require 0 < tau1 < tau0")
        norm1 = float(X[:, 0] @ X[:, 0])
        if norm1 <= 0:
            raise ValueError("first design column must be nonzero")
        if isinstance(family, str):
            family = LOG_PARTITIONS[family]
        self.X = X
        self.y = y
        self.family = family
        self.c = float(dispersion)
        self.eta = float(eta)
        self.tau0 = float(tau0)
        self.tau1 = float(tau1)
        self.tau2 = float(debias_precision)
        self.psi_lower = psi_lower
        self.d = X.shape[1]
        self.gamma = X.T[1:] @ X[:, 0] / norm1
        self.cvec = np.concatenate(([1.0], self.gamma))
        self.A = X.T @ X / self.c
        self.w = X.T @ y / self.c

    def potential(self, z):
        z = self._check_dim(z)
        lin = z @ self.X.T
        u = z @ self.cvec
        return (self.family.value(lin).sum(axis=-1) / self.c
                - z @ self.w
                + mixture_neglog(z[..., 1:], self.eta, self.tau0,
                                 self.tau1).sum(axis=-1)
                + 0.5 * self.tau2 * u * u)

    def grad(self, z):
        z = self._check_dim(z)
        lin = z @ self.X.T
        u = z @ self.cvec
        g = self.family.deriv(lin) @ self.X / self.c - self.w
        g = g + self.tau2 * u[..., None] * self.cvec
        g[..., 1:] += mixture_neglog_deriv(z[..., 1:], self.eta, self.tau0,
                                           self.tau1)
        return g

    def hessian(self, z):
        z = self._check_dim(z)
        lin = z @ self.X.T
        H = np.einsum("...n,ni,nj->...ij", self.family.deriv2(lin) / self.c,
                      self.X, self.X)
        H = H + self.tau2 * np.outer(self.cvec, self.cvec)
        xi2 = mixture_neglog_deriv2(z[..., 1:], self.eta, self.tau0, self.tau1)
        idx = np.arange(1, self.d)
        H[..., idx, idx] += xi2
        return H

    def regularity_constants(self, overrides=None):
        warnings = []
        b = self.family.curv_lower
        if b is None:
            b = self.psi_lower
        B = self.family.curv_upper
        if b is None or B is None:
            warnings.append(
                "log-partition curvature bounds unavailable; overrides required")
            consts = RegularityConstants(
                ell=np.nan, L=np.nan, ell_root=np.nan, L_root=np.nan,
                L_mixed=None, warnings=tuple(warnings))
            out = consts.with_overrides(overrides)
            if overrides is None or not np.isfinite(
                    [out.ell, out.L, out.ell_root, out.L_root]).all():
                raise ValueError(
                    f"constants unavailable for family '{self.family.name}' "
                    "without overrides")
            return out
        eigs = np.linalg.eigvalsh(self.A)
        a_lo, a_hi = eigs.min(), eigs.max()
        A11 = self.A[0, 0]
        tau2 = self.tau2
        xi_bound = mixture_log_concavity_bound(self.eta, self.tau0, self.tau1)
        ell = b * a_lo + xi_bound
        L = B * a_hi + self.tau0 ** 2 + tau2 * float(self.gamma @ self.gamma)
        if b * a_lo > 0:
            ell_root = (b * A11 + tau2
                        - 2.0 * float(self.gamma @ self.gamma) * tau2 ** 2
                        / (b * a_lo)
                        - 2.0 * (B * a_hi - b * a_lo) * (B * A11 - b * a_lo)
                        / (b * a_lo))
        else:
            ell_root = -np.inf
        L_root = 2.0 * (B * A11 + tau2)
        L_mixed = None
        if ell > 0:
            At = _abs_gram(self.X, self.c)
            cross = (B * At[0, 1:] + tau2 * np.abs(self.gamma)).max()
            inter = B * At[1:, 1:] + tau2 * np.abs(
                np.outer(self.gamma, self.gamma))
            denom = ell - (inter.sum(axis=1) - np.diag(inter)).max()
            if denom > 0:
                L_mixed = ell * cross / denom
        consts = _check_constants(ell, L, ell_root, L_root, L_mixed, warnings)
        return consts.with_overrides(overrides)


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def gaussian_ensemble_design(cov, n, seed):
    """Draw n i.i.d. rows from N(0, Σ); deterministic for a fixed seed."""
    cov = np.asarray(cov, dtype=float)
    if n < 1:
        raise ValueError("need at least one design row")
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance must be positive definite") from exc
    rng = np.random.default_rng(seed)
    return rng.standard_normal((int(n), cov.shape[0])) @ chol.T


def load_design_csv(path, header=False):
    """Load a row-major numeric design matrix from CSV."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if header:
        rows = rows[1:]
    if not rows:
        raise ValueError(f"empty design file: {path}")
    return np.array([[float(v) for v in row] for row in rows])


def _make_prior(block):
    kind = block.get("type", "gaussian")
    if kind == "gaussian":
        return GaussianPrior(block["precision"])
    if kind == "logistic":
        return LogisticPrior(block["scale"])
    raise ValueError(f"unknown prior type: {kind}")


def _load_design(block, base=None):
    if "design" in block:
        return np.asarray(block["design"], dtype=float)
    if "design_csv" in block:
        return load_design_csv(block["design_csv"],
                               header=block.get("design_csv_header", False))
    raise ValueError("target block needs 'design' or 'design_csv'")


def target_from_json(block):
    """Build a target from its JSON description (dict or JSON string/path)."""
    if isinstance(block, str):
        block = json.loads(block)
    family = block.get("family")
    if family == "gaussian":
        return GaussianTarget(block["mean"], block["cov"])
    if family == "glm_location":
        X = _load_design(block)
        return GlmLocationTarget(
            X, np.asarray(block["response"], dtype=float),
            family=block.get("log_partition", "linear"),
            dispersion=block.get("dispersion", 1.0),
            prior=_make_prior(block.get("prior", {"type": "gaussian",
                                                  "precision": 1.0})),
            hyperprior=_make_prior(block.get("hyperprior",
                                             {"type": "gaussian",
                                              "precision": 1.0})),
            psi_lower=block.get("psi_lower"),
        )
    if family == "spike_slab":
        X = _load_design(block)
        return SpikeSlabGlmTarget(
            X, np.asarray(block["response"], dtype=float),
            family=block.get("log_partition", "linear"),
            dispersion=block.get("dispersion", 1.0),
            eta=block["eta"], tau0=block["tau0"], tau1=block["tau1"],
            debias_precision=block.get("debias_precision", 1.0),
            psi_lower=block.get("psi_lower"),
        )
    raise ValueError(f"unknown target family: {family}")
