"""Automatic choice of the regularization parameter on the projected problem.

At every outer iteration the solver holds small triangular factors R_F and
R_M of the projected forward and regularization operators, plus the projected
whitened data.  The generalized cross validation functional

    G(lam) = d * || (I - R_F T_lam) rhs ||^2 / trace(I - R_F T_lam)^2,
    T_lam  = (R_F^T R_F + lam R_M^T R_M)^{-1} R_F^T,

is evaluated in closed form through the generalized SVD of the pair
(R_F, R_M), obtained from the CS decomposition of the stacked QR factor.
That reduces every evaluation to O(d) once the pair is factored, so a grid
sweep plus a local refinement is cheap even inside the outer loop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import SingularSystemError

__all__ = ["ProjectedPair", "gcv_curve", "select_lambda", "default_lambda_grid"]

# Golden-section refinement runs until the bracket has this relative width.
REFINE_RELATIVE_WIDTH = 1e-3
_INV_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def default_lambda_grid(n_points=40, low=1e-6, high=1e2):
    """Logarithmic default search grid for the regularization parameter."""
    return np.logspace(np.log10(low), np.log10(high), int(n_points))


@dataclass(eq=False)
class ProjectedPair:
    """Projected triangular pair (R_F, R_M) and projected whitened data."""

    r_f: np.ndarray
    r_m: np.ndarray
    rhs: np.ndarray

    def __post_init__(self):
        self.r_f = np.atleast_2d(np.asarray(self.r_f, dtype=float))
        self.r_m = np.atleast_2d(np.asarray(self.r_m, dtype=float))
        self.rhs = np.asarray(self.rhs, dtype=float).ravel()
        d = self.r_f.shape[1]
        if self.r_f.shape[0] != d or self.r_m.shape != (d, d):
            raise ValueError("projected factors must be square and of equal size")
        if self.rhs.size != d:
            raise ValueError("projected data length must match the factors")

    @property
    def dim(self):
        return self.r_f.shape[1]


def _pair_factors(pair):
    """Generalized singular values of (R_F, R_M) via the CS decomposition.

    Returns (c, s, beta): cosines, sines with c^2 + s^2 = 1, and the data
    rotated into the left basis of the forward part.  Raises when the stacked
    pair is rank deficient, i.e. the two operators share a null direction.
    """
    d = pair.dim
    stacked = np.vstack([pair.r_f, pair.r_m])
    q, r = np.linalg.qr(stacked)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag.min() <= 2 * d * np.finfo(float).eps * diag.max():
        raise SingularSystemError(
            "projected forward and regularization operators share a null direction"
        )
    u, c, wt = np.linalg.svd(q[:d])
    c = np.clip(c, 0.0, 1.0)
    # Sines computed from the lower block directly; sqrt(1 - c^2) would lose
    # all accuracy for generalized singular values near 1.
    s = np.linalg.norm(q[d:] @ wt.T, axis=0)
    beta = u.T @ pair.rhs
    return c, s, beta


def _curve_from_factors(c, s, beta, lambdas):
    lambdas = np.asarray(lambdas, dtype=float).ravel()
    if lambdas.size == 0:
        raise ValueError("need at least one candidate lambda")
    if np.any(lambdas <= 0) or not np.all(np.isfinite(lambdas)):
        raise ValueError("candidate lambdas must be positive and finite")
    d = c.size
    lam = lambdas[:, None]
    # 1 - filter factor: lam*s^2 / (c^2 + lam*s^2), written to stay finite
    # for every positive lambda.
    denom = c[None, :] ** 2 + lam * s[None, :] ** 2
    one_minus_f = lam * s[None, :] ** 2 / denom
    num = d * np.sum(one_minus_f**2 * beta[None, :] ** 2, axis=1)
    tr = np.sum(one_minus_f, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        values = num / tr**2
    return values


def gcv_curve(pair, lambdas):
    """Evaluate G on the given positive candidates (ascending or not)."""
    c, s, beta = _pair_factors(pair)
    return _curve_from_factors(c, s, beta, lambdas)


def select_lambda(pair, grid=None):
    """Grid minimizer of G plus golden-section refinement around it.

    Ties on the grid are broken toward the larger lambda, and the refined
    candidate is only kept when it strictly improves on the grid minimum, so
    a flat curve yields the largest grid point.
    """
    if grid is None:
        grid = default_lambda_grid()
    grid = np.sort(np.asarray(grid, dtype=float).ravel())
    c, s, beta = _pair_factors(pair)
    values = _curve_from_factors(c, s, beta, grid)
    finite = np.isfinite(values)
    if not finite.any():
        raise SingularSystemError("GCV curve is undefined on the whole grid")
    masked = np.where(finite, values, np.inf)
    # last occurrence of the minimum = largest lambda among ties
    idx = masked.size - 1 - int(np.argmin(masked[::-1]))
    best_grid = float(grid[idx])
    best_value = float(masked[idx])
    if grid.size == 1:
        return best_grid

    lo = grid[max(idx - 1, 0)]
    hi = grid[min(idx + 1, grid.size - 1)]
    cand, cand_value = _golden_section(
        lambda t: _curve_from_factors(c, s, beta, [np.exp(t)])[0],
        np.log(lo),
        np.log(hi),
    )
    if np.isfinite(cand_value) and cand_value < best_value:
        return float(np.exp(cand))
    return best_grid


def _golden_section(f, a, b):
    """Minimize f on [a, b] (log-lambda axis) down to a narrow bracket."""
    x1 = b - _INV_GOLDEN * (b - a)
    x2 = a + _INV_GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    while (b - a) > REFINE_RELATIVE_WIDTH:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _INV_GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INV_GOLDEN * (b - a)
            f2 = f(x2)
    x = 0.5 * (a + b)
    return x, f(x)
