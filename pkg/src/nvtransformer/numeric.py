"""Dense float64 numerics and seeded sampling used by every other module.

All matrices are 2-D C-contiguous float64 numpy arrays; vectors are 1-D
float64 arrays.  Randomness always flows through a `numpy.random.Generator`
created by `make_rng`, so identical seeds plus identical call sequences give
bit-identical results on every platform we target.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "as_matrix",
    "make_rng",
    "matmul",
    "softmax_rows",
    "logsumexp_rows",
    "sample_gaussian",
    "sample_dirichlet",
]


def as_matrix(a) -> np.ndarray:
    """Coerce to a 2-D float64 array, rejecting anything else."""
    out = np.asarray(a, dtype=np.float64)
    if out.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={out.ndim}")
    return out


def make_rng(seed: int) -> np.random.Generator:
    """Seeded generator (PCG64).  One owner per generator; never share across
    concurrent callers."""
    return np.random.default_rng(seed)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with an explicit inner-dimension check.

    Raises ValueError on mismatched inner dimensions instead of letting the
    backend produce a less readable error.
    """
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(
            f"inner dimensions disagree: {a.shape} @ {b.shape}"
        )
    return a @ b


def softmax_rows(a: np.ndarray) -> np.ndarray:
    """Row-wise softmax, stabilised by subtracting each row's max.

    Entries of -inf are allowed and map to exactly zero weight, which is how
    masking is implemented upstream.  A row that is entirely -inf has no
    well-defined softmax and raises.
    """
    a = as_matrix(a)
    m = np.max(a, axis=1, keepdims=True)
    if not np.all(np.isfinite(m)):
        raise ValueError("softmax given a row with no finite entries")
    e = np.exp(a - m)
    return e / np.sum(e, axis=1, keepdims=True)


def logsumexp_rows(a: np.ndarray) -> np.ndarray:
    """Row-wise log(sum(exp(a))), max-stabilised.  Shape (m, n) -> (m,)."""
    a = as_matrix(a)
    m = np.max(a, axis=1)
    if not np.all(np.isfinite(m)):
        raise ValueError("logsumexp given a row with no finite entries")
    return m + np.log(np.sum(np.exp(a - m[:, None]), axis=1))


def sample_gaussian(
    rng: np.random.Generator, mu: np.ndarray, sigma: np.ndarray
) -> np.ndarray:
    """Elementwise mu + sigma * eps with eps ~ N(0, 1).

    `sigma` holds standard deviations (not variances) and must be >= 0;
    sigma == 0 returns mu exactly.
    """
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma < 0.0):
        raise ValueError("negative standard deviation")
    eps = rng.standard_normal(size=np.broadcast_shapes(mu.shape, sigma.shape))
    return mu + sigma * eps


def sample_dirichlet(rng: np.random.Generator, alpha: np.ndarray) -> np.ndarray:
    """One draw from Dirichlet(alpha) via normalised Gamma(alpha_j, 1) draws.

    Composing from gamma draws keeps the construction explicit and works for
    the extreme concentrations this package produces (alpha spanning
    exp(-700) .. exp(700)).  If every gamma draw underflows to zero the mass
    is assigned to the largest concentration, which is the correct limit.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.ndim != 1 or alpha.size == 0:
        raise ValueError("alpha must be a nonempty vector")
    if np.any(alpha <= 0.0):
        raise ValueError("Dirichlet concentrations must be positive")
    draws = rng.standard_gamma(alpha)
    total = draws.sum()
    if total == 0.0:
        # all components underflowed; degenerate limit
        out = np.zeros_like(alpha)
        out[int(np.argmax(alpha))] = 1.0
        return out
    return draws / total
