"""Edge-preserving space-time regularizers and their quadratic majorants.

Six variants are supported, all built from first differences of the
space-time volume:

- ``AnisoTV``          anisotropic TV over vertical, horizontal and temporal
                       differences (1-norm of the stacked gradient),
- ``TVplusTikhonov``   anisotropic spatial TV plus a quadratic temporal term,
- ``Aniso3DTV``        1-norm of the mixed third difference (one value per
                       space-time corner),
- ``Iso3DTV``          isotropic coupling of the three directions per voxel,
- ``IsoTV``            isotropic spatial TV plus anisotropic temporal TV,
- ``GS``               group sparsity of spatial gradient pixels across time.

Each nonsmooth variant R is smoothed to R_eps by adding eps^2 under the
square roots.  For the iteratively reweighted scheme every variant supplies
diagonal weights W(u_k) at power -1/4 of the smoothed squared magnitudes, so
that M = W D gives the quadratic tangent majorant

    Q(u; u_k) = misfit(u) + (lam/2) * ||M u||^2 + c(u_k)

with Q(u_k; u_k) = misfit(u_k) + lam * R_eps(u_k) and Q >= misfit + lam*R_eps
everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .operators import build_diff, build_Ls, identity, kron, kron3, vstack

__all__ = [
    "Method",
    "METHOD_NAMES",
    "RegularizerSpec",
    "StaticTVSpec",
    "WeightOperator",
    "build_D",
    "regularizer_value",
    "update_weights",
    "majorant_value",
    "majorant_gradient",
    "smoothed_objective",
]


class Method(str, Enum):
    ANISO_TV = "AnisoTV"
    TV_PLUS_TIKHONOV = "TVplusTikhonov"
    ANISO_3D_TV = "Aniso3DTV"
    ISO_3D_TV = "Iso3DTV"
    ISO_TV = "IsoTV"
    GROUP_SPARSITY = "GS"

    @classmethod
    def from_name(cls, name):
        try:
            return cls(name)
        except ValueError:
            raise ValueError(
                f"unknown method {name!r}; valid methods are {', '.join(METHOD_NAMES)}"
            ) from None


METHOD_NAMES = tuple(m.value for m in Method)


@dataclass(frozen=True)
class RegularizerSpec:
    """Which penalty to use on a volume of shape dims = (n_v, n_h, n_t).

    ``alpha`` holds the per-direction scalings of the difference stencils
    (exposed for completeness, never estimated; defaults to 1 everywhere).
    """

    method: Method
    dims: tuple[int, int, int]
    epsilon: float = 1e-3
    alpha: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "method", Method.from_name(self.method))
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or any(d < 2 for d in dims):
            raise ValueError(f"dims must be three extents >= 2, got {self.dims}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        if not self.epsilon > 0:
            raise ValueError("smoothing parameter epsilon must be positive")

    @property
    def n(self):
        n_v, n_h, n_t = self.dims
        return n_v * n_h * n_t


@dataclass(frozen=True)
class StaticTVSpec:
    """Anisotropic spatial TV of a single frame (per-frame baseline solves)."""

    n_v: int
    n_h: int
    epsilon: float = 1e-3

    def __post_init__(self):
        if self.n_v < 2 or self.n_h < 2:
            raise ValueError("frame extents must be >= 2")
        if not self.epsilon > 0:
            raise ValueError("smoothing parameter epsilon must be positive")

    @property
    def dims(self):
        return (self.n_v, self.n_h, 1)

    @property
    def n(self):
        return self.n_v * self.n_h


@dataclass(eq=False)
class WeightOperator:
    """Expanded diagonal of W(u_k) plus a tag describing its block structure."""

    weights: np.ndarray
    structure: str

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        if not np.all(self.weights > 0):
            raise ValueError("weights must be strictly positive")


# --- cached building blocks ---------------------------------------------------


@lru_cache(maxsize=None)
def _op_dir(dims, alpha, axis, padded):
    """Difference along one axis of the volume, identity along the others."""
    n_v, n_h, n_t = dims
    a_v, a_h, a_t = alpha
    if axis == "v":
        return kron3(identity(n_t), identity(n_h), build_diff(n_v, a_v, padded))
    if axis == "h":
        return kron3(identity(n_t), build_diff(n_h, a_h, padded), identity(n_v))
    if axis == "t":
        return kron3(build_diff(n_t, a_t, padded), identity(n_h), identity(n_v))
    raise ValueError(axis)


@lru_cache(maxsize=None)
def _op_spatial_frames(dims, alpha):
    """Per-frame spatial gradient applied to every frame: I_t (x) L_s."""
    n_v, n_h, n_t = dims
    a_v, a_h, _ = alpha
    return kron(identity(n_t), build_Ls(n_v, n_h, a_v, a_h))


@lru_cache(maxsize=None)
def _build_d_cached(method, dims, alpha):
    if method in (Method.ANISO_TV, Method.TV_PLUS_TIKHONOV):
        return vstack(
            [
                _op_dir(dims, alpha, "v", False),
                _op_dir(dims, alpha, "h", False),
                _op_dir(dims, alpha, "t", False),
            ]
        )
    if method is Method.ANISO_3D_TV:
        n_v, n_h, n_t = dims
        a_v, a_h, a_t = alpha
        return kron3(
            build_diff(n_t, a_t), build_diff(n_h, a_h), build_diff(n_v, a_v)
        )
    if method is Method.ISO_3D_TV:
        return vstack(
            [
                _op_dir(dims, alpha, "v", True),
                _op_dir(dims, alpha, "h", True),
                _op_dir(dims, alpha, "t", True),
            ]
        )
    if method is Method.ISO_TV:
        return vstack(
            [
                _op_dir(dims, alpha, "v", True),
                _op_dir(dims, alpha, "h", True),
                _op_dir(dims, alpha, "t", False),
            ]
        )
    if method is Method.GROUP_SPARSITY:
        return _op_spatial_frames(dims, alpha)
    raise ValueError(method)


def build_D(spec):
    """Stacked difference operator D of the chosen penalty (built once, cached)."""
    if isinstance(spec, StaticTVSpec):
        return _static_ls(spec.n_v, spec.n_h)
    return _build_d_cached(spec.method, spec.dims, spec.alpha)


@lru_cache(maxsize=None)
def _static_ls(n_v, n_h):
    return build_Ls(n_v, n_h)


def _spatial_row_count(dims):
    n_v, n_h, n_t = dims
    return n_t * ((n_v - 1) * n_h + (n_h - 1) * n_v)


def _check_u(spec, u):
    u = np.asarray(u, dtype=float).ravel()
    if u.size != spec.n:
        raise ValueError(f"iterate of length {u.size} does not match dims {spec.dims}")
    return u


def _directional(spec, u, padded):
    """The three directional difference images of u (each of length n if padded)."""
    zs = []
    for axis, pad in zip("vht", padded):
        zs.append(_op_dir(spec.dims, spec.alpha, axis, pad).apply(u))
    return zs


# --- values -------------------------------------------------------------------


def regularizer_value(spec, u, smoothed=False):
    """Evaluate R(u), or its eps-smoothed companion R_eps(u)."""
    u = _check_u(spec, u)
    eps2 = spec.epsilon**2 if smoothed else 0.0

    if isinstance(spec, StaticTVSpec):
        z = build_D(spec).apply(u)
        return float(np.sum(np.sqrt(z**2 + eps2)))

    method = spec.method
    if method is Method.ANISO_TV:
        z = build_D(spec).apply(u)
        return float(np.sum(np.sqrt(z**2 + eps2)))
    if method is Method.TV_PLUS_TIKHONOV:
        # Smoothing touches the 1-norm part only; the temporal term stays
        # quadratic (with the 1/2 that makes the identity temporal weight
        # block of the majorant tangent).
        zv, zh, zt = _directional(spec, u, (False, False, False))
        z_s = np.concatenate([zv, zh])
        return float(np.sum(np.sqrt(z_s**2 + eps2)) + 0.5 * (zt @ zt))
    if method is Method.ANISO_3D_TV:
        z = build_D(spec).apply(u)
        return float(np.sum(np.sqrt(z**2 + eps2)))
    if method is Method.ISO_3D_TV:
        zv, zh, zt = _directional(spec, u, (True, True, True))
        return float(np.sum(np.sqrt(zv**2 + zh**2 + zt**2 + eps2)))
    if method is Method.ISO_TV:
        zv, zh, zt = _directional(spec, u, (True, True, False))
        spatial = np.sum(np.sqrt(zv**2 + zh**2 + eps2))
        temporal = np.sum(np.sqrt(zt**2 + eps2))
        return float(spatial + temporal)
    if method is Method.GROUP_SPARSITY:
        g2 = _group_sq_norms(spec, u)
        return float(np.sum(np.sqrt(g2 + eps2)))
    raise ValueError(method)


def _group_sq_norms(spec, u):
    """Squared 2-norms of the groups: one spatial-gradient pixel across all frames."""
    n_v, n_h, n_t = spec.dims
    n_s_prime = (n_v - 1) * n_h + (n_h - 1) * n_v
    z = _op_spatial_frames(spec.dims, spec.alpha).apply(u)
    return np.sum(z.reshape(n_s_prime, n_t, order="F") ** 2, axis=1)


# --- weights ------------------------------------------------------------------


def update_weights(spec, u_k):
    """Diagonal of W(u_k), expanded to one entry per row of D."""
    u_k = _check_u(spec, u_k)
    eps2 = spec.epsilon**2

    if isinstance(spec, StaticTVSpec):
        z = build_D(spec).apply(u_k)
        return WeightOperator((z**2 + eps2) ** -0.25, "plain")

    method = spec.method
    if method in (Method.ANISO_TV, Method.ANISO_3D_TV):
        z = build_D(spec).apply(u_k)
        return WeightOperator((z**2 + eps2) ** -0.25, "plain")
    if method is Method.TV_PLUS_TIKHONOV:
        zv, zh, zt = _directional(spec, u_k, (False, False, False))
        z_s = np.concatenate([zv, zh])
        w = np.concatenate([(z_s**2 + eps2) ** -0.25, np.ones(zt.size)])
        return WeightOperator(w, "block-identity-augmented")
    if method is Method.ISO_3D_TV:
        zv, zh, zt = _directional(spec, u_k, (True, True, True))
        core = (zv**2 + zh**2 + zt**2 + eps2) ** -0.25
        return WeightOperator(np.tile(core, 3), "replicated-by-3")
    if method is Method.ISO_TV:
        zv, zh, zt = _directional(spec, u_k, (True, True, False))
        w_s = (zv**2 + zh**2 + eps2) ** -0.25
        w_t = (zt**2 + eps2) ** -0.25
        return WeightOperator(np.concatenate([w_s, w_s, w_t]), "replicated-by-2-plus-temporal")
    if method is Method.GROUP_SPARSITY:
        n_v, n_h, n_t = spec.dims
        g = (_group_sq_norms(spec, u_k) + eps2) ** -0.25
        return WeightOperator(np.tile(g, n_t), "group-replicated")
    raise ValueError(method)


# --- majorant -----------------------------------------------------------------


def majorant_value(spec, u, u_k, lam, misfit):
    """Quadratic tangent majorant Q(u; u_k) of misfit(u) + lam * R_eps(u)."""
    u = _check_u(spec, u)
    u_k = _check_u(spec, u_k)
    d_op = build_D(spec)
    w = update_weights(spec, u_k).weights
    m_u = w * d_op.apply(u)
    m_uk = w * d_op.apply(u_k)
    c = lam * (regularizer_value(spec, u_k, smoothed=True) - 0.5 * (m_uk @ m_uk))
    return float(misfit(u) + 0.5 * lam * (m_u @ m_u) + c)


def majorant_gradient(spec, u, u_k, lam, misfit_gradient):
    """Gradient of Q(.; u_k) at u; at u = u_k this equals the gradient of J_eps."""
    u = _check_u(spec, u)
    u_k = _check_u(spec, u_k)
    d_op = build_D(spec)
    w = update_weights(spec, u_k).weights
    return misfit_gradient(u) + lam * d_op.apply_adjoint(w**2 * d_op.apply(u))


def smoothed_objective(spec, u, lam, misfit):
    """J_eps(u) = misfit(u) + lam * R_eps(u)."""
    return float(misfit(u) + lam * regularizer_value(spec, u, smoothed=True))
