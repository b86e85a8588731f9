"""Standard multi-head attention over a set of vectors.

The head layout follows the summed per-head formulation: full d x d
projection matrices are stored once and split column-wise into h slices of
width d/h.  Each head value-projects into its own slice of the output, so
concatenating head outputs is the same as summing per-head contributions
embedded in the full width.  There is no separate output projection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numeric import as_matrix, softmax_rows

__all__ = ["AttentionParams", "AttentionMask", "attention", "attn_core"]


@dataclass(frozen=True)
class AttentionParams:
    """Query/key/value projections for one attention site.

    wq, wk, wv are (d, d); bq, bk, bv are (d,).  `heads` must divide d.
    Head i uses columns [i*d/h, (i+1)*d/h) of each matrix and the matching
    bias slice.
    """

    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    bq: np.ndarray
    bk: np.ndarray
    bv: np.ndarray
    heads: int

    def __post_init__(self):
        d = self.model_dim
        for name in ("wq", "wk", "wv"):
            m = getattr(self, name)
            if m.shape != (d, d):
                raise ValueError(f"{name} must be ({d}, {d}), got {m.shape}")
        for name in ("bq", "bk", "bv"):
            v = getattr(self, name)
            if v.shape != (d,):
                raise ValueError(f"{name} must be ({d},), got {v.shape}")
        if self.heads < 1 or d % self.heads != 0:
            raise ValueError(f"heads={self.heads} must divide model_dim={d}")

    @property
    def model_dim(self) -> int:
        return self.wq.shape[0]

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.heads

    def head_slice(self, i: int) -> slice:
        dh = self.head_dim
        return slice(i * dh, (i + 1) * dh)


@dataclass(frozen=True)
class AttentionMask:
    """Visibility of keys per query: kind 'none', 'causal' or 'custom'.

    The custom matrix is boolean (m, n) with True = visible.  'causal'
    requires m == n and exposes keys j <= t to query t.
    """

    kind: str = "none"
    custom: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if self.kind not in ("none", "causal", "custom"):
            raise ValueError(f"unknown mask kind {self.kind!r}")
        if (self.kind == "custom") != (self.custom is not None):
            raise ValueError("custom matrix required iff kind == 'custom'")

    def visible(self, m: int, n: int) -> np.ndarray:
        """Boolean (m, n) visibility matrix for m queries over n keys."""
        if self.kind == "none":
            return np.ones((m, n), dtype=bool)
        if self.kind == "causal":
            if m != n:
                raise ValueError(
                    f"causal mask needs square shape, got ({m}, {n})"
                )
            return np.tril(np.ones((m, n), dtype=bool))
        c = self.custom
        if c.shape != (m, n):
            raise ValueError(f"custom mask shape {c.shape} != ({m}, {n})")
        return c.astype(bool)


NO_MASK = AttentionMask("none")


def _mask_bias(visible: np.ndarray) -> np.ndarray:
    """Additive bias: 0 where visible, -inf where hidden.  Rejects rows with
    nothing visible (their softmax would be undefined)."""
    if not np.all(np.any(visible, axis=1)):
        raise ValueError("a query row has every key masked")
    bias = np.zeros(visible.shape)
    bias[~visible] = -np.inf
    return bias


def attn_core(u: np.ndarray, z: np.ndarray, scale: float) -> np.ndarray:
    """Projection-free attention: softmax_rows(u z^T / scale) z.

    `scale` is the score divisor (sqrt of the model or head width by
    convention) and must be positive.
    """
    u = as_matrix(u)
    z = as_matrix(z)
    if scale <= 0.0:
        raise ValueError("scale must be positive")
    if u.shape[1] != z.shape[1]:
        raise ValueError(f"width mismatch: u {u.shape} vs z {z.shape}")
    return softmax_rows(u @ z.T / scale) @ z


def attention(
    u_prime: np.ndarray,
    z: np.ndarray,
    params: AttentionParams,
    mask: AttentionMask = NO_MASK,
) -> np.ndarray:
    """Multi-head attention of m query vectors over n key/value vectors.

    Scores per head are (Q_i K_i^T + Q_i b^K_i) / sqrt(d/h); the key-bias
    term is constant per query so it never changes the weights, but it is
    kept so the algebra matches the denoising path one-for-one.
    """
    u_prime = as_matrix(u_prime)
    z = as_matrix(z)
    d = params.model_dim
    if u_prime.shape[1] != d or z.shape[1] != d:
        raise ValueError("query/key width must equal model_dim")
    m, n = u_prime.shape[0], z.shape[0]
    bias = _mask_bias(mask.visible(m, n))
    scale = np.sqrt(params.head_dim)

    q = u_prime @ params.wq + params.bq
    out = np.empty((m, d))
    for i in range(params.heads):
        sl = params.head_slice(i)
        qi = q[:, sl]
        # keys with bias folded in: Q_i K_i^T = Q_i (Z W^K_i)^T + Q_i b^K_i
        ki = z @ params.wk[:, sl] + params.bk[sl]
        vi = z @ params.wv[:, sl] + params.bv[sl]
        w = softmax_rows(qi @ ki.T / scale + bias)
        out[:, sl] = w @ vi
    return out
