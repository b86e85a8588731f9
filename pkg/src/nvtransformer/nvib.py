"""Projection of a set of vectors onto Dirichlet-process posterior parameters.

Each token vector is mapped to a Gaussian component (mean, diagonal std) and
a pseudo-count; an empirical prior component is appended as the LAST row.
With the identity initialisation the component means are the vectors
themselves, the stds collapse toward zero, and the pseudo-counts reproduce
the exp(||z||^2 / (2 sqrt(d/h))) weighting that makes denoising attention
coincide with standard attention.

Pseudo-counts are carried in log space end to end; their total is only ever
formed through log-sum-exp.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mixture import GaussianMixtureRepr
from .numeric import as_matrix, logsumexp_rows

__all__ = [
    "LOG_ALPHA_CLAMP",
    "SIGMA_SQ_FLOOR",
    "TAU_SIGMA_MIN",
    "ALPHA_CLAMP_EVENTS",
    "TauConfig",
    "EmpiricalPrior",
    "NvibProjection",
    "DpPosterior",
    "identity_init",
    "project",
    "to_gaussian_mixture",
]

LOG_ALPHA_CLAMP = 700.0     # |log alpha| beyond this would overflow exp
SIGMA_SQ_FLOOR = 1e-76      # smallest representable component variance
TAU_SIGMA_MIN = 1e-38       # variance dial floor; log of its square is finite

GROUPS = ("encoder", "cross", "decoder")


class _ClampCounter:
    """Counts how often projected log pseudo-counts hit the clamp."""

    __slots__ = ("count",)

    def __init__(self):
        self.count = 0

    def add(self, k: int):
        self.count += int(k)

    def reset(self):
        self.count = 0


ALPHA_CLAMP_EVENTS = _ClampCounter()


@dataclass(frozen=True)
class TauConfig:
    """Regularisation dials per attention group.

    tau_alpha shifts log pseudo-counts in units of the prior's norm spread;
    tau_sigma scales component stds relative to the prior std.  tau_sigma
    below TAU_SIGMA_MIN would make log(sigma^2) overflow and is rejected.
    """

    tau_alpha_enc: float = 10.0
    tau_alpha_cross: float = 10.0
    tau_alpha_dec: float = 10.0
    tau_sigma_enc: float = TAU_SIGMA_MIN
    tau_sigma_cross: float = TAU_SIGMA_MIN
    tau_sigma_dec: float = TAU_SIGMA_MIN

    def __post_init__(self):
        for g in GROUPS:
            if self.tau_sigma(g) < TAU_SIGMA_MIN:
                raise ValueError(
                    f"tau_sigma for {g} below floor {TAU_SIGMA_MIN:g}"
                )

    def tau_alpha(self, group: str) -> float:
        return {
            "encoder": self.tau_alpha_enc,
            "cross": self.tau_alpha_cross,
            "decoder": self.tau_alpha_dec,
        }[group]

    def tau_sigma(self, group: str) -> float:
        return {
            "encoder": self.tau_sigma_enc,
            "cross": self.tau_sigma_cross,
            "decoder": self.tau_sigma_dec,
        }[group]


def identity_taus() -> TauConfig:
    """Dial setting at which the reinterpreted model matches the original."""
    return TauConfig()


@dataclass(frozen=True)
class EmpiricalPrior:
    """Per-site corpus statistics backing the appended prior component.

    mu_p/sigma_p are per-dimension mean and std of the site's vectors;
    log_alpha0_p is the mean scaled squared norm ||z||^2 / (2 sqrt(d/h));
    epsilon_alpha is the std of those same per-token quantities.
    """

    mu_p: np.ndarray
    sigma_p: np.ndarray
    log_alpha0_p: float
    epsilon_alpha: float
    layer_group: str
    layer_id: int

    def __post_init__(self):
        if self.layer_group not in GROUPS:
            raise ValueError(f"unknown layer group {self.layer_group!r}")
        if self.mu_p.ndim != 1 or self.sigma_p.shape != self.mu_p.shape:
            raise ValueError("mu_p and sigma_p must be matching vectors")
        if np.any(self.sigma_p <= 0.0):
            raise ValueError("sigma_p must be positive (variance floor applies)")
        if self.epsilon_alpha < 0.0:
            raise ValueError("epsilon_alpha must be nonnegative")

    @property
    def dim(self) -> int:
        return self.mu_p.shape[0]


@dataclass(frozen=True)
class NvibProjection:
    """Affine/quadratic maps from vectors to posterior parameters.

    mu(Z) = Z w_mu + b_mu
    sigma^2(Z) = exp(Z w_sigma + b_sigma)
    log alpha(Z) = (Z*Z) w_alpha1 + Z w_alpha2 + b_alpha
    """

    w_mu: np.ndarray
    b_mu: np.ndarray
    w_sigma: np.ndarray
    b_sigma: np.ndarray
    w_alpha1: np.ndarray
    w_alpha2: np.ndarray
    b_alpha: float
    prior: EmpiricalPrior

    def __post_init__(self):
        d = self.prior.dim
        if self.w_mu.shape != (d, d) or self.w_sigma.shape != (d, d):
            raise ValueError("w_mu/w_sigma must be (d, d)")
        for name in ("b_mu", "b_sigma", "w_alpha1", "w_alpha2"):
            if getattr(self, name).shape != (d,):
                raise ValueError(f"{name} must be (d,)")

    @property
    def dim(self) -> int:
        return self.prior.dim


@dataclass(frozen=True)
class DpPosterior:
    """Mixture parameters for n tokens plus the prior as the last row.

    mu, sigma: (n+1, d); log_alpha: (n+1,).  sigma holds stds.
    """

    mu: np.ndarray
    sigma: np.ndarray
    log_alpha: np.ndarray

    def __post_init__(self):
        if self.mu.ndim != 2 or self.sigma.shape != self.mu.shape:
            raise ValueError("mu and sigma must both be (n+1, d)")
        if self.log_alpha.shape != (self.mu.shape[0],):
            raise ValueError("log_alpha must have one entry per component")
        if self.mu.shape[0] < 1:
            raise ValueError("need at least the prior component")
        if np.any(self.sigma < 0.0):
            raise ValueError("sigma must be nonnegative")

    @property
    def n_tokens(self) -> int:
        return self.mu.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.mu.shape[1]

    def log_alpha_total(self) -> float:
        """log of the summed pseudo-counts, prior included."""
        return float(logsumexp_rows(self.log_alpha[None, :])[0])


def identity_init(
    prior: EmpiricalPrior, tau_alpha: float, tau_sigma: float, d: int, h: int
) -> NvibProjection:
    """Projection whose denoising attention reproduces standard attention.

    Means pass through unchanged, stds are pinned at sigma_p * tau_sigma,
    and log pseudo-counts are the scaled squared norm plus the dial offset
    epsilon_alpha * tau_alpha.
    """
    if d % h != 0 or h < 1:
        raise ValueError(f"heads={h} must divide d={d}")
    if prior.dim != d:
        raise ValueError(f"prior dimension {prior.dim} != d={d}")
    if tau_sigma < TAU_SIGMA_MIN:
        raise ValueError(f"tau_sigma below floor {TAU_SIGMA_MIN:g}")
    scale = np.sqrt(d / h)
    return NvibProjection(
        w_mu=np.eye(d),
        b_mu=np.zeros(d),
        w_sigma=np.zeros((d, d)),
        b_sigma=2.0 * np.log(prior.sigma_p * tau_sigma),
        w_alpha1=np.full(d, 1.0 / (2.0 * scale)),
        w_alpha2=np.zeros(d),
        b_alpha=prior.epsilon_alpha * tau_alpha,
        prior=prior,
    )


def project(z: np.ndarray, proj: NvibProjection) -> DpPosterior:
    """Map n vectors to an (n+1)-component posterior, prior row last.

    log pseudo-counts are clamped to +-LOG_ALPHA_CLAMP (occurrences recorded
    on ALPHA_CLAMP_EVENTS); component variances are floored at
    SIGMA_SQ_FLOOR.
    """
    z = as_matrix(z)
    d = proj.dim
    if z.shape[1] != d:
        raise ValueError(f"vector width {z.shape[1]} != projection dim {d}")

    mu = z @ proj.w_mu + proj.b_mu
    log_sig2 = z @ proj.w_sigma + proj.b_sigma
    # exp must stay finite even for adversarial weights
    log_sig2 = np.minimum(log_sig2, LOG_ALPHA_CLAMP)
    sig2 = np.maximum(np.exp(log_sig2), SIGMA_SQ_FLOOR)

    log_alpha = (z * z) @ proj.w_alpha1 + z @ proj.w_alpha2 + proj.b_alpha
    clamped = np.clip(log_alpha, -LOG_ALPHA_CLAMP, LOG_ALPHA_CLAMP)
    ALPHA_CLAMP_EVENTS.add(np.count_nonzero(clamped != log_alpha))

    p = proj.prior
    mu_all = np.vstack([mu, p.mu_p[None, :]])
    sigma_all = np.vstack([np.sqrt(sig2), p.sigma_p[None, :]])
    log_alpha_all = np.concatenate([clamped, [p.log_alpha0_p]])
    return DpPosterior(mu=mu_all, sigma=sigma_all, log_alpha=log_alpha_all)


def to_gaussian_mixture(dp: DpPosterior) -> GaussianMixtureRepr:
    """Normalise pseudo-counts into mixture weights (log-sum-exp, prior
    included) and expose the components as a Gaussian mixture."""
    logw = dp.log_alpha - dp.log_alpha_total()
    return GaussianMixtureRepr(
        mu=dp.mu.copy(), sigma=dp.sigma.copy(), weights=np.exp(logw)
    )
