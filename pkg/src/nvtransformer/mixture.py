"""Reference mixture semantics for attention as Bayesian query denoising.

A set of vectors Z induces a mixture of impulses whose weights grow with
exp(||z_i||^2 / (2 scale)).  Denoising a query u corrupted by Gaussian noise
of per-dimension variance `scale` against that mixture reproduces standard
attention exactly; against a mixture of diagonal Gaussians it gives the
closed form the fast evaluation path must match.

Everything here is written for clarity over speed: explicit per-component
log densities, log-space normalisation, no clever regrouping.  These
functions arbitrate the fast implementations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numeric import as_matrix, logsumexp_rows

__all__ = [
    "MixtureOfImpulses",
    "GaussianMixtureRepr",
    "build_f_z",
    "dattn_impulses",
    "dattn_gaussians_oracle",
]

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class MixtureOfImpulses:
    """Impulse locations (n, d) with normalised weights (n,)."""

    locations: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if self.locations.ndim != 2:
            raise ValueError("locations must be (n, d)")
        n = self.locations.shape[0]
        if self.weights.shape != (n,):
            raise ValueError("weights must align with locations")
        if np.any(self.weights < 0.0):
            raise ValueError("weights must be nonnegative")
        if abs(float(self.weights.sum()) - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")


@dataclass(frozen=True)
class GaussianMixtureRepr:
    """Diagonal-Gaussian mixture: means (n, d), stds (n, d), weights (n,)."""

    mu: np.ndarray
    sigma: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if self.mu.ndim != 2 or self.sigma.shape != self.mu.shape:
            raise ValueError("mu and sigma must both be (n, d)")
        if self.weights.shape != (self.mu.shape[0],):
            raise ValueError("weights must align with components")
        if np.any(self.sigma < 0.0):
            raise ValueError("sigma must be nonnegative")
        if np.any(self.weights < 0.0):
            raise ValueError("weights must be nonnegative")
        if abs(float(self.weights.sum()) - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")


def build_f_z(z: np.ndarray, scale: float) -> MixtureOfImpulses:
    """Impulse mixture over the rows of z with weights
    proportional to exp(||z_i||^2 / (2 scale)), normalised in log space."""
    z = as_matrix(z)
    if z.shape[0] == 0:
        raise ValueError("need at least one vector")
    if scale <= 0.0:
        raise ValueError("scale must be positive")
    logw = np.sum(z * z, axis=1) / (2.0 * scale)
    logw = logw - logsumexp_rows(logw[None, :])[0]
    return MixtureOfImpulses(locations=z.copy(), weights=np.exp(logw))


def _log_diag_gaussian(u: np.ndarray, mu: np.ndarray, var: np.ndarray) -> np.ndarray:
    """log N(u_q; mu_k, diag(var_k)) for every query/component pair.

    u: (m, d); mu, var: (n, d) -> (m, n).
    """
    # sum over dimensions of -0.5*(log 2pi + log var + (u-mu)^2/var)
    diff = u[:, None, :] - mu[None, :, :]            # (m, n, d)
    quad = np.sum(diff * diff / var[None, :, :], axis=2)
    logdet = np.sum(np.log(var), axis=1)             # (n,)
    d = u.shape[1]
    return -0.5 * (d * LOG_2PI + logdet[None, :] + quad)


def dattn_impulses(u: np.ndarray, f: MixtureOfImpulses, scale: float) -> np.ndarray:
    """Posterior mean of the denoised query under an impulse mixture.

    The query is modelled as an impulse location corrupted by Gaussian noise
    with per-dimension variance `scale`; the posterior over components is
    responsibility-weighted and the posterior mean is the weighted sum of
    locations.
    """
    u = as_matrix(u)
    if scale <= 0.0:
        raise ValueError("scale must be positive")
    z = f.locations
    if u.shape[1] != z.shape[1]:
        raise ValueError("query width must match impulse width")
    var = np.full_like(z, scale)
    with np.errstate(divide="ignore"):
        logpost = np.log(f.weights)[None, :] + _log_diag_gaussian(u, z, var)
    logpost = logpost - logsumexp_rows(logpost)[:, None]
    return np.exp(logpost) @ z


def dattn_gaussians_oracle(
    u: np.ndarray, g: GaussianMixtureRepr, scale: float
) -> np.ndarray:
    """Denoised queries under a diagonal-Gaussian mixture, exactly.

    Component k has marginal likelihood N(u; mu_k, (scale + sigma_k^2) I)
    for the corrupted query, giving responsibilities; its posterior mean for
    the clean vector interpolates mu_k toward u by sigma_k^2/(scale+sigma_k^2)
    per dimension.  Written as mu + ratio*(u - mu) so that sigma == 0
    degenerates to the impulse case bit-for-bit.
    """
    u = as_matrix(u)
    if scale <= 0.0:
        raise ValueError("scale must be positive")
    if u.shape[1] != g.mu.shape[1]:
        raise ValueError("query width must match component width")
    var = scale + g.sigma * g.sigma                  # (n, d) marginal variances
    with np.errstate(divide="ignore"):
        logpost = np.log(g.weights)[None, :] + _log_diag_gaussian(u, g.mu, var)
    logpost = logpost - logsumexp_rows(logpost)[:, None]
    resp = np.exp(logpost)                           # (m, n)

    ratio = (g.sigma * g.sigma) / var                # (n, d)
    # responsibility-averaged posterior means, split so the sigma == 0 case
    # degenerates to the impulse path bit-for-bit: the mean term uses the
    # same matmul, the query-pull term is an exact zero
    pull = np.sum(
        resp[:, :, None] * ratio[None, :, :]
        * (u[:, None, :] - g.mu[None, :, :]),
        axis=1,
    )
    return resp @ g.mu + pull
