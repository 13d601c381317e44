"""Two-state matrix potentials and their adiabatic decomposition.

Every potential here is a real symmetric 2x2 matrix field

    V(X) = m(X) * I + [[d(X), o(X)], [o(X), -d(X)]],

so the adiabatic surfaces are lambda_pm(X) = m(X) +/- s(X) with
s = sqrt(d^2 + o^2) and the gap is 2*s.  Three variants are provided:

* ``OneDCrossing``: a 1D avoided crossing with confining quadratic walls,
  m = r(X), d = X, o = delta.
* ``LineCrossing2D``: surfaces meeting (or nearly meeting) along the line
  X1 = 0, with m = lambda_s(X), d = eta*arctan(X1/eta), o = delta.
* ``ConicalCrossing2D``: a conical intersection at the point ``a``, with
  d = eta*arctan((X1-a1)/eta), o = eta*arctan((X2-a2)/eta).

``eta = 0`` is accepted as the scalar limit (the arctan terms vanish), which
is how purely scalar surfaces such as lambda_s itself are driven through the
same dynamics code.  All derivatives are closed-form; symplectic integrators
rely on gradient/value consistency, so no finite differencing happens here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import DegeneratePointError

GAP_TOL = 1e-14

__all__ = [
    "OneDCrossing",
    "LineCrossing2D",
    "ConicalCrossing2D",
    "PotentialSpec",
    "SymMat2",
    "AdiabaticFrame",
    "eval_potential",
    "adiabatic_decompose",
    "grad_potential",
    "classically_allowed",
    "lambda_surfaces",
    "lambda_minus",
    "grad_lambda_minus",
    "hess_lambda_minus",
    "adiabatic_basis",
    "spec_dim",
    "is_scalar",
]


@dataclass(frozen=True)
class OneDCrossing:
    """1D avoided crossing: V = [[X + r(X), delta], [delta, -X + r(X)]].

    r(X) = (a_l - X)^2 left of a_l, (X - a_r)^2 right of a_r, 0 between.
    """

    delta: float
    a_l: float = -2.0
    a_r: float = 3.0

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("delta must be >= 0")
        if not self.a_l < self.a_r:
            raise ValueError("a_l must be < a_r")

    dim = 1


@dataclass(frozen=True)
class LineCrossing2D:
    """2D surfaces with minimum gap 2*delta along the line X1 = 0."""

    delta: float
    alpha: float = math.sqrt(2.0)
    beta: float = 2.0
    eta: float = 0.5

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("delta must be >= 0")
        if self.eta < 0:
            raise ValueError("eta must be >= 0")

    dim = 2


@dataclass(frozen=True)
class ConicalCrossing2D:
    """2D conical intersection at the point a = (a1, a2)."""

    a: tuple[float, float]
    alpha: float = math.sqrt(2.0)
    beta: float = 2.0
    eta: float = 0.5

    def __post_init__(self):
        if len(self.a) != 2:
            raise ValueError("a must be a 2-vector")
        object.__setattr__(self, "a", (float(self.a[0]), float(self.a[1])))
        if self.eta < 0:
            raise ValueError("eta must be >= 0")

    dim = 2


PotentialSpec = Union[OneDCrossing, LineCrossing2D, ConicalCrossing2D]


@dataclass(frozen=True)
class SymMat2:
    """Symmetric 2x2 matrix; only the upper triangle is stored."""

    v11: float
    v12: float
    v22: float

    @property
    def v21(self) -> float:
        return self.v12

    def as_array(self) -> np.ndarray:
        return np.array([[self.v11, self.v12], [self.v12, self.v22]])

    def dot(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return np.array([self.v11 * v[0] + self.v12 * v[1],
                         self.v12 * v[0] + self.v22 * v[1]])


@dataclass(frozen=True)
class AdiabaticFrame:
    """Eigenpairs of a SymMat2 with a continuity-friendly sign gauge."""

    lambda_minus: float
    lambda_plus: float
    psi_minus: np.ndarray
    psi_plus: np.ndarray
    gauge_sign: int = 1

    @property
    def gap(self) -> float:
        return self.lambda_plus - self.lambda_minus


def spec_dim(spec: PotentialSpec) -> int:
    return spec.dim


def is_scalar(spec: PotentialSpec) -> bool:
    """True when the traceless part of V vanishes identically (V = m*I)."""
    if isinstance(spec, ConicalCrossing2D):
        return spec.eta == 0.0
    if isinstance(spec, LineCrossing2D):
        return spec.eta == 0.0 and spec.delta == 0.0
    return False


def _check_dim(spec, X) -> np.ndarray:
    X = np.atleast_1d(np.asarray(X, dtype=float))
    if X.shape != (spec.dim,):
        raise ValueError(f"position has shape {X.shape}, spec needs ({spec.dim},)")
    return X


def _terms(spec: PotentialSpec, X1, X2=None):
    """Return (m, d, o) with V = m*I + [[d, o], [o, -d]], vectorized."""
    if isinstance(spec, OneDCrossing):
        X1 = np.asarray(X1, dtype=float)
        r = np.where(X1 < spec.a_l, (spec.a_l - X1) ** 2,
                     np.where(X1 > spec.a_r, (X1 - spec.a_r) ** 2, 0.0))
        return r, X1, np.broadcast_to(np.float64(spec.delta), X1.shape)
    X1 = np.asarray(X1, dtype=float)
    X2 = np.asarray(X2, dtype=float)
    m = 0.5 * (X1 ** 2 + spec.alpha * X2 ** 2) + spec.beta * np.sin(X1 * X2)
    eta = spec.eta
    if isinstance(spec, LineCrossing2D):
        d = eta * np.arctan(X1 / eta) if eta > 0 else np.zeros_like(X1)
        o = np.broadcast_to(np.float64(spec.delta), X1.shape)
        return m, d, o
    a1, a2 = spec.a
    if eta > 0:
        d = eta * np.arctan((X1 - a1) / eta)
        o = eta * np.arctan((X2 - a2) / eta)
    else:
        d = np.zeros_like(X1)
        o = np.zeros_like(X2)
    return m, d, o


def _grad_terms(spec: PotentialSpec, X1, X2=None):
    """Gradients of (m, d, o) per axis; closed-form."""
    if isinstance(spec, OneDCrossing):
        X1 = np.asarray(X1, dtype=float)
        dr = np.where(X1 < spec.a_l, -2.0 * (spec.a_l - X1),
                      np.where(X1 > spec.a_r, 2.0 * (X1 - spec.a_r), 0.0))
        one = np.ones_like(X1)
        zero = np.zeros_like(X1)
        return (dr,), (one,), (zero,)
    X1 = np.asarray(X1, dtype=float)
    X2 = np.asarray(X2, dtype=float)
    c = spec.beta * np.cos(X1 * X2)
    m1 = X1 + X2 * c
    m2 = spec.alpha * X2 + X1 * c
    eta = spec.eta
    zero = np.zeros_like(X1)
    if isinstance(spec, LineCrossing2D):
        d1 = 1.0 / (1.0 + (X1 / eta) ** 2) if eta > 0 else zero
        return (m1, m2), (d1, zero), (zero, zero)
    a1, a2 = spec.a
    if eta > 0:
        d1 = 1.0 / (1.0 + ((X1 - a1) / eta) ** 2)
        o2 = 1.0 / (1.0 + ((X2 - a2) / eta) ** 2)
    else:
        d1 = zero
        o2 = zero
    return (m1, m2), (d1, zero), (zero, o2)


def eval_potential(spec: PotentialSpec, X) -> SymMat2:
    """Evaluate the matrix potential at a single point X."""
    X = _check_dim(spec, X)
    if spec.dim == 1:
        m, d, o = _terms(spec, X[0])
    else:
        m, d, o = _terms(spec, X[0], X[1])
    return SymMat2(float(m + d), float(o), float(m - d))


def _split(V: SymMat2):
    m = 0.5 * (V.v11 + V.v22)
    d = 0.5 * (V.v11 - V.v22)
    return m, d, V.v12


def adiabatic_decompose(V: SymMat2, prev: Optional[AdiabaticFrame] = None) -> AdiabaticFrame:
    """Eigen-decompose a symmetric 2x2 matrix.

    The sign gauge of the eigenvectors follows ``prev`` (maximal overlap)
    when given, otherwise the first nonzero component is made positive.
    Raises DegeneratePointError when the gap is below GAP_TOL: at an exact
    intersection the eigenvectors are not defined.
    """
    m, d, o = _split(V)
    s = math.hypot(d, o)
    if 2.0 * s < GAP_TOL:
        raise DegeneratePointError(f"gap {2.0 * s:.3e} below {GAP_TOL:.0e}")
    # Branch on sign(d) so the un-normalized eigenvector never degenerates.
    if d >= 0.0:
        plus = np.array([s + d, o])
        minus = np.array([-o, s + d])
    else:
        plus = np.array([o, s - d])
        minus = np.array([s - d, -o])
    plus /= np.linalg.norm(plus)
    minus /= np.linalg.norm(minus)
    if prev is not None:
        if float(plus @ prev.psi_plus) < 0.0:
            plus = -plus
        if float(minus @ prev.psi_minus) < 0.0:
            minus = -minus
    else:
        plus = _first_nonzero_positive(plus)
        minus = _first_nonzero_positive(minus)
    return AdiabaticFrame(m - s, m + s, minus, plus)


def _first_nonzero_positive(v: np.ndarray) -> np.ndarray:
    lead = v[0] if abs(v[0]) > 1e-300 else v[1]
    return -v if lead < 0 else v


def grad_potential(spec: PotentialSpec, X):
    """Closed-form (dV/dX_i as SymMat2 per axis, grad lambda_minus).

    Raises DegeneratePointError for grad lambda_minus at a conical point
    (the ground surface is not differentiable there), except for scalar
    specs where lambda_minus = m is smooth everywhere.
    """
    X = _check_dim(spec, X)
    args = (X[0],) if spec.dim == 1 else (X[0], X[1])
    gm, gd, go = _grad_terms(spec, *args)
    mats = [SymMat2(float(gm[i] + gd[i]), float(go[i]), float(gm[i] - gd[i]))
            for i in range(spec.dim)]
    grad_lm = grad_lambda_minus(spec, X)
    return mats, grad_lm


def lambda_surfaces(spec: PotentialSpec, X):
    """(lambda_minus, lambda_plus) arrays at X (vectorized over leading axes)."""
    X = np.asarray(X, dtype=float)
    if spec.dim == 1:
        m, d, o = _terms(spec, X if X.ndim == 0 else X[..., 0] if X.shape[-1] == 1 else X)
    else:
        m, d, o = _terms(spec, X[..., 0], X[..., 1])
    s = np.hypot(d, o)
    return m - s, m + s


def lambda_minus(spec: PotentialSpec, X):
    return lambda_surfaces(spec, X)[0]


def grad_lambda_minus(spec: PotentialSpec, X) -> np.ndarray:
    """Gradient of the ground surface, closed-form."""
    X = _check_dim(spec, X)
    args = (X[0],) if spec.dim == 1 else (X[0], X[1])
    m, d, o = _terms(spec, *args)
    gm, gd, go = _grad_terms(spec, *args)
    if is_scalar(spec):
        return np.array([float(g) for g in gm])
    s = math.hypot(float(d), float(o))
    if 2.0 * s < GAP_TOL:
        raise DegeneratePointError("grad lambda_minus undefined at an exact intersection")
    return np.array([float(gm[i] - (d * gd[i] + o * go[i]) / s) for i in range(spec.dim)])


def hess_lambda_minus(spec: PotentialSpec, X) -> np.ndarray:
    """Hessian of the ground surface; used by tangent (variational) dynamics."""
    X = _check_dim(spec, X)
    if isinstance(spec, OneDCrossing):
        x = float(X[0])
        rpp = 2.0 if (x < spec.a_l or x > spec.a_r) else 0.0
        if is_scalar(spec):
            return np.array([[rpp]])
        s = math.hypot(x, spec.delta)
        if 2.0 * s < GAP_TOL:
            raise DegeneratePointError("hessian undefined at an exact intersection")
        return np.array([[rpp - spec.delta ** 2 / s ** 3]])
    x1, x2 = float(X[0]), float(X[1])
    sin = spec.beta * math.sin(x1 * x2)
    cos = spec.beta * math.cos(x1 * x2)
    hm = np.array([[1.0 - x2 ** 2 * sin, cos - x1 * x2 * sin],
                   [cos - x1 * x2 * sin, spec.alpha - x1 ** 2 * sin]])
    if is_scalar(spec):
        return hm
    m, d, o = _terms(spec, x1, x2)
    gm, gd, go = _grad_terms(spec, x1, x2)
    s = math.hypot(float(d), float(o))
    if 2.0 * s < GAP_TOL:
        raise DegeneratePointError("hessian undefined at an exact intersection")
    eta = spec.eta
    # second derivatives of d (depends on X1 only) and o (X2 only, cone case)
    if isinstance(spec, LineCrossing2D):
        u1 = x1 / eta
        d11 = -2.0 * u1 / (eta * (1.0 + u1 ** 2) ** 2)
        o22 = 0.0
    else:
        u1 = (x1 - spec.a[0]) / eta
        u2 = (x2 - spec.a[1]) / eta
        d11 = -2.0 * u1 / (eta * (1.0 + u1 ** 2) ** 2)
        o22 = -2.0 * u2 / (eta * (1.0 + u2 ** 2) ** 2)
    dgrad = np.array([float(gd[0]), float(gd[1])])
    ograd = np.array([float(go[0]), float(go[1])])
    dhess = np.array([[d11, 0.0], [0.0, 0.0]])
    ohess = np.array([[0.0, 0.0], [0.0, o22]])
    sgrad = (float(d) * dgrad + float(o) * ograd) / s
    shess = (np.outer(dgrad, dgrad) + float(d) * dhess
             + np.outer(ograd, ograd) + float(o) * ohess
             - np.outer(sgrad, sgrad)) / s
    return hm - shess


def classically_allowed(spec: PotentialSpec, E: float, X) -> bool:
    """True iff lambda_minus(X) <= E."""
    X = _check_dim(spec, X)
    return bool(lambda_minus(spec, X) <= E)


def adiabatic_basis(spec: PotentialSpec, X):
    """Vectorized adiabatic eigenvectors at many points.

    X has shape (..., dim) (or (...,) in 1D).  Returns (psi_minus, psi_plus,
    gap) with psi_* of shape (..., 2), unit norm, first-nonzero-positive
    gauge.  Points with gap below GAP_TOL get NaN vectors; callers decide
    whether to skip or raise.
    """
    X = np.asarray(X, dtype=float)
    if spec.dim == 1:
        xs = X if X.ndim == 0 or X.shape[-1] != 1 else X[..., 0]
        m, d, o = _terms(spec, xs)
    else:
        m, d, o = _terms(spec, X[..., 0], X[..., 1])
    d = np.asarray(d, dtype=float)
    o = np.asarray(o, dtype=float)
    s = np.hypot(d, o)
    pos = d >= 0
    pu = np.where(pos, s + d, o)
    pv = np.where(pos, o, s - d)
    mu = np.where(pos, -o, s - d)
    mv = np.where(pos, s + d, -o)
    nrm = np.hypot(pu, pv)
    with np.errstate(invalid="ignore", divide="ignore"):
        degenerate = 2.0 * s < GAP_TOL
        nrm = np.where(degenerate, np.nan, nrm)
        plus = np.stack([pu / nrm, pv / nrm], axis=-1)
        minus = np.stack([mu / nrm, mv / nrm], axis=-1)
    plus = _gauge_first_positive(plus)
    minus = _gauge_first_positive(minus)
    return minus, plus, 2.0 * s


def _gauge_first_positive(vecs: np.ndarray) -> np.ndarray:
    lead = np.where(np.abs(vecs[..., 0]) > 1e-300, vecs[..., 0], vecs[..., 1])
    return vecs * np.where(lead < 0, -1.0, 1.0)[..., None]
