"""Symplectic propagators for ground-surface and mean-field dynamics.

Born-Oppenheimer trajectories use velocity Verlet on H0 = |P|^2/2 +
lambda_minus(X).  Mean-field (Ehrenfest) trajectories couple the nuclear
Verlet update to a leapfrog rotation of the electronic amplitude
psi = psi_r + i*psi_i; two steppers are provided:

* ``canonical``: the electronic amplitude rotates under the gap operator
  Vc = V - lambda_minus*I and the nuclear force is the normalized
  mean-field force -<psi, grad V psi>/<psi, psi>, so the scheme follows the
  coupled Hamiltonian flow regardless of how psi is scaled.
* ``paper-literal``: a six-stage scheme that rotates psi under the full
  matrix V and kicks P with the un-normalized brackets
  lambda_minus' + <psi_r, V' psi_r> + <psi_i, V' psi_i>.  Its conserved
  quantity is |P|^2/2 + lambda_minus + <psi, V psi>, which matches the
  canonical energy only in the small-amplitude regime <psi, psi> << 1.

Probabilities reported from either stepper are normalized by <psi, psi>
and therefore do not depend on the amplitude convention.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import model
from .errors import DegeneratePointError, NumericalUnderflowError
from .model import PotentialSpec

DYNAMICS_GAP_FLOOR = 1e-12

__all__ = [
    "PhasePoint",
    "EhrenfestState",
    "Trajectory",
    "LZOdeResult",
    "bo_step",
    "bo_trajectory",
    "ehrenfest_init",
    "ehrenfest_step",
    "ehrenfest_trajectory",
    "transition_probability",
    "transition_probability_trace",
    "landau_zener_closed_form",
    "landau_zener_from_energy",
    "landau_zener_ode",
    "hamiltonian_bo",
    "hamiltonian_ehrenfest",
    "max_lyapunov",
    "momentum_on_shell",
]


@dataclass(frozen=True)
class PhasePoint:
    X: np.ndarray
    P: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "X", np.atleast_1d(np.asarray(self.X, dtype=float)))
        object.__setattr__(self, "P", np.atleast_1d(np.asarray(self.P, dtype=float)))
        if self.X.shape != self.P.shape:
            raise ValueError("X and P must have the same dimension")


@dataclass(frozen=True)
class EhrenfestState:
    phase: PhasePoint
    psi_r: np.ndarray
    psi_i: np.ndarray
    norm_convention: str = "unit"  # "unit" | "paper-2Msqrt"

    def __post_init__(self):
        object.__setattr__(self, "psi_r", np.asarray(self.psi_r, dtype=float))
        object.__setattr__(self, "psi_i", np.asarray(self.psi_i, dtype=float))

    @property
    def psi_norm_sq(self) -> float:
        return float(self.psi_r @ self.psi_r + self.psi_i @ self.psi_i)


@dataclass
class Trajectory:
    t: np.ndarray
    X: np.ndarray
    P: np.ndarray
    H: np.ndarray
    dt: float
    stride: int
    integrator: str
    psi_r: Optional[np.ndarray] = None
    psi_i: Optional[np.ndarray] = None
    psi_norm_sq: Optional[np.ndarray] = None

    @property
    def n_samples(self) -> int:
        return self.t.shape[0]

    @property
    def T(self) -> float:
        return float(self.t[-1] - self.t[0])


def _resolve_steps(T: float, dt: float, stride: int):
    if dt <= 0 or T <= 0:
        raise ValueError("dt and T must be positive")
    n_steps = max(int(round(T / dt)), 1)
    if stride < 1 or n_steps % stride != 0:
        raise ValueError(f"stride {stride} must divide the step count {n_steps}")
    return n_steps


def _grad_lm_many(spec: PotentialSpec, X: np.ndarray) -> np.ndarray:
    """Ground-surface gradient for a batch of positions, shape (N, dim)."""
    if spec.dim == 1:
        args = (X[:, 0],)
    else:
        args = (X[:, 0], X[:, 1])
    gm, gd, go = model._grad_terms(spec, *args)
    if model.is_scalar(spec):
        return np.stack(gm if spec.dim > 1 else (gm[0],), axis=-1)
    _, d, o = model._terms(spec, *args)
    s = np.hypot(d, o)
    if np.min(2.0 * s) < DYNAMICS_GAP_FLOOR:
        raise DegeneratePointError("trajectory touched a surface intersection")
    cols = [gm[i] - (d * gd[i] + o * go[i]) / s for i in range(spec.dim)]
    return np.stack(cols, axis=-1)


def bo_step(spec: PotentialSpec, state: PhasePoint, dt: float) -> PhasePoint:
    """One velocity-Verlet step on the ground surface."""
    X = state.X[None, :]
    P_half = state.P - 0.5 * dt * _grad_lm_many(spec, X)[0]
    X_new = state.X + dt * P_half
    P_new = P_half - 0.5 * dt * _grad_lm_many(spec, X_new[None, :])[0]
    return PhasePoint(X_new, P_new, state.t + dt)


def bo_trajectory(spec: PotentialSpec, init: PhasePoint, dt: float, T: float,
                  stride: int = 1) -> Trajectory:
    n_steps = _resolve_steps(T, dt, stride)
    dim = init.X.shape[0]
    n_samples = n_steps // stride + 1
    Xs = np.empty((n_samples, dim))
    Ps = np.empty((n_samples, dim))
    X = init.X[None, :].copy()
    P = init.P[None, :].copy()
    Xs[0], Ps[0] = X[0], P[0]
    g = _grad_lm_many(spec, X)
    si = 1
    for k in range(n_steps):
        P += -0.5 * dt * g
        X += dt * P
        g = _grad_lm_many(spec, X)
        P += -0.5 * dt * g
        if (k + 1) % stride == 0:
            Xs[si], Ps[si] = X[0], P[0]
            si += 1
    ts = init.t + dt * stride * np.arange(n_samples)
    H = 0.5 * np.sum(Ps ** 2, axis=1) + model.lambda_minus(
        spec, Xs if dim == 2 else Xs[:, 0])
    return Trajectory(ts, Xs, Ps, H, dt, stride, "verlet-bo")


def hamiltonian_bo(spec: PotentialSpec, phase: PhasePoint) -> float:
    return float(0.5 * phase.P @ phase.P
                 + model.lambda_minus(spec, phase.X if spec.dim == 2 else phase.X[0]))


def momentum_on_shell(spec: PotentialSpec, E: float, X) -> float:
    """|P| with H0(X, P) = E; raises if X is classically forbidden."""
    lm = float(model.lambda_minus(spec, np.asarray(X, dtype=float)
                                  if spec.dim == 2 else float(np.atleast_1d(X)[0])))
    if E < lm:
        raise ValueError(f"E={E} below lambda_minus(X)={lm}: not on the energy shell")
    return math.sqrt(2.0 * (E - lm))


# -- Ehrenfest ---------------------------------------------------------------


def ehrenfest_init(spec: PotentialSpec, X, P, M: float, branch: str = "-",
                   norm_convention: str = "unit", t: float = 0.0) -> EhrenfestState:
    """State with psi aligned to an adiabatic eigenvector at X.

    ``unit`` scales psi to norm 1; ``paper-2Msqrt`` to <psi, psi> = 2/sqrt(M).
    """
    phase = PhasePoint(X, P, t)
    V = model.eval_potential(spec, phase.X)
    frame = model.adiabatic_decompose(V)
    vec = frame.psi_minus if branch == "-" else frame.psi_plus
    if norm_convention == "paper-2Msqrt":
        vec = vec * math.sqrt(2.0) * M ** (-0.25)
    elif norm_convention != "unit":
        raise ValueError(f"unknown norm convention {norm_convention!r}")
    return EhrenfestState(phase, vec.copy(), np.zeros(2), norm_convention)


def _point_terms_factory(spec: PotentialSpec):
    """Scalar-arithmetic evaluator x -> (m, d, o, gm, gd, go) for the hot loop.

    Positions are plain tuples; gradients come back as tuples per axis.
    """
    if isinstance(spec, model.OneDCrossing):
        a_l, a_r, delta = spec.a_l, spec.a_r, spec.delta

        def terms(x):
            x0 = x[0]
            if x0 < a_l:
                r, dr = (a_l - x0) ** 2, -2.0 * (a_l - x0)
            elif x0 > a_r:
                r, dr = (x0 - a_r) ** 2, 2.0 * (x0 - a_r)
            else:
                r, dr = 0.0, 0.0
            return r, x0, delta, (dr,), (1.0,), (0.0,)

        return terms
    alpha, beta, eta = spec.alpha, spec.beta, spec.eta
    if isinstance(spec, model.LineCrossing2D):
        delta = spec.delta

        def terms(x):
            x1, x2 = x
            c = beta * math.cos(x1 * x2)
            m = 0.5 * (x1 * x1 + alpha * x2 * x2) + beta * math.sin(x1 * x2)
            gm = (x1 + x2 * c, alpha * x2 + x1 * c)
            if eta > 0.0:
                u = x1 / eta
                return m, eta * math.atan(u), delta, gm, (1.0 / (1.0 + u * u), 0.0), (0.0, 0.0)
            return m, 0.0, delta, gm, (0.0, 0.0), (0.0, 0.0)

        return terms
    a1, a2 = spec.a

    def terms(x):
        x1, x2 = x
        c = beta * math.cos(x1 * x2)
        m = 0.5 * (x1 * x1 + alpha * x2 * x2) + beta * math.sin(x1 * x2)
        gm = (x1 + x2 * c, alpha * x2 + x1 * c)
        if eta > 0.0:
            u1 = (x1 - a1) / eta
            u2 = (x2 - a2) / eta
            return (m, eta * math.atan(u1), eta * math.atan(u2), gm,
                    (1.0 / (1.0 + u1 * u1), 0.0), (0.0, 1.0 / (1.0 + u2 * u2)))
        return m, 0.0, 0.0, gm, (0.0, 0.0), (0.0, 0.0)

    return terms


def _force_tuple(m, d, o, gm, gd, go, pr0, pr1, pi0, pi1, mode):
    """Nuclear kick per axis: canonical (normalized <dV>) or literal."""
    rr0 = pr0 * pr0 + pi0 * pi0
    rr1 = pr1 * pr1 + pi1 * pi1
    rx = 2.0 * (pr0 * pr1 + pi0 * pi1)
    if mode == "canonical":
        nsq = rr0 + rr1
        if nsq < 1e-300:
            raise NumericalUnderflowError("electronic amplitude underflow")
        return tuple(-((gm[a] + gd[a]) * rr0 + (gm[a] - gd[a]) * rr1 + go[a] * rx) / nsq
                     for a in range(len(gm)))
    s = math.hypot(d, o)
    if s > 0.0:
        glm = tuple(gm[a] - (d * gd[a] + o * go[a]) / s for a in range(len(gm)))
    else:
        glm = gm
    return tuple(-(glm[a] + (gm[a] + gd[a]) * rr0 + (gm[a] - gd[a]) * rr1 + go[a] * rx)
                 for a in range(len(gm)))


def _ehrenfest_loop(spec, X, P, pr, pi, dt, n_steps, M, mode, sample_every,
                    on_sample):
    """Shared six-stage stepper; calls on_sample(idx, x, p, pr, pi) at samples.

    Stage order matches the adjoint symplectic-Euler composition: half kick
    of psi_i, half nuclear kick, position drift, full psi_r drift with the
    averaged matrix, half psi_i kick, half nuclear kick.  The electronic
    generator is the gap operator (canonical) or the full matrix (literal).
    """
    sqrtM = math.sqrt(M)
    canonical = mode == "canonical"
    terms_at = _point_terms_factory(spec)
    hdt = 0.5 * dt * sqrtM
    dim = len(X)
    x = tuple(float(v) for v in X)
    p = tuple(float(v) for v in P)
    pr0, pr1 = float(pr[0]), float(pr[1])
    pi0, pi1 = float(pi[0]), float(pi[1])
    m, d, o, gm, gd, go = terms_at(x)
    on_sample(0, x, p, (pr0, pr1), (pi0, pi1))
    for k in range(n_steps):
        if canonical:
            s = math.hypot(d, o)
            a11, a22 = d + s, s - d
        else:
            a11, a22 = m + d, m - d
        pih0 = pi0 - hdt * (a11 * pr0 + o * pr1)
        pih1 = pi1 - hdt * (o * pr0 + a22 * pr1)
        f = _force_tuple(m, d, o, gm, gd, go, pr0, pr1, pih0, pih1, mode)
        p = tuple(p[a] + 0.5 * dt * f[a] for a in range(dim))
        x = tuple(x[a] + dt * p[a] for a in range(dim))
        m2, d2, o2, gm2, gd2, go2 = terms_at(x)
        if canonical:
            s2 = math.hypot(d2, o2)
            b11, b22 = d2 + s2, s2 - d2
        else:
            b11, b22 = m2 + d2, m2 - d2
        pr0, pr1 = (pr0 + hdt * ((a11 + b11) * pih0 + (o + o2) * pih1),
                    pr1 + hdt * ((o + o2) * pih0 + (a22 + b22) * pih1))
        pi0 = pih0 - hdt * (b11 * pr0 + o2 * pr1)
        pi1 = pih1 - hdt * (o2 * pr0 + b22 * pr1)
        f = _force_tuple(m2, d2, o2, gm2, gd2, go2, pr0, pr1, pih0, pih1, mode)
        p = tuple(p[a] + 0.5 * dt * f[a] for a in range(dim))
        m, d, o, gm, gd, go = m2, d2, o2, gm2, gd2, go2
        if pr0 * pr0 + pr1 * pr1 + pi0 * pi0 + pi1 * pi1 < 1e-300:
            raise NumericalUnderflowError("electronic amplitude underflow")
        if (k + 1) % sample_every == 0:
            on_sample((k + 1) // sample_every, x, p, (pr0, pr1), (pi0, pi1))
    return (np.array(x), np.array(p), np.array([pr0, pr1]), np.array([pi0, pi1]))


def ehrenfest_step(spec: PotentialSpec, state: EhrenfestState, dt: float,
                   M: float, mode: str = "canonical") -> EhrenfestState:
    """One mean-field step; see the module docstring for the two modes."""
    if mode not in ("canonical", "paper-literal"):
        raise ValueError(f"unknown mode {mode!r}")
    X, P, pr, pi = _ehrenfest_loop(spec, state.phase.X, state.phase.P,
                                   state.psi_r, state.psi_i,
                                   dt, 1, M, mode, 1, lambda *a: None)
    return EhrenfestState(PhasePoint(X, P, state.phase.t + dt), pr, pi,
                          state.norm_convention)


def ehrenfest_trajectory(spec: PotentialSpec, init: EhrenfestState, dt: float,
                         T: float, M: float, mode: str = "canonical",
                         stride: int = 1) -> Trajectory:
    if mode not in ("canonical", "paper-literal"):
        raise ValueError(f"unknown mode {mode!r}")
    n_steps = _resolve_steps(T, dt, stride)
    dim = init.phase.X.shape[0]
    n_samples = n_steps // stride + 1
    Xs = np.empty((n_samples, dim))
    Ps = np.empty((n_samples, dim))
    prs = np.empty((n_samples, 2))
    pis = np.empty((n_samples, 2))

    def record(idx, X, P, pr, pi):
        Xs[idx], Ps[idx], prs[idx], pis[idx] = X, P, pr, pi

    _ehrenfest_loop(spec, init.phase.X.copy(), init.phase.P.copy(),
                    init.psi_r.copy(), init.psi_i.copy(), dt, n_steps, M,
                    mode, stride, record)
    ts = init.phase.t + dt * stride * np.arange(n_samples)
    nsq = np.sum(prs ** 2, axis=1) + np.sum(pis ** 2, axis=1)
    H = _ehrenfest_energy_trace(spec, Xs, Ps, prs, pis, M, init.norm_convention)
    return Trajectory(ts, Xs, Ps, H, dt, stride, f"verlet-ehrenfest-{mode}",
                      psi_r=prs, psi_i=pis, psi_norm_sq=nsq)


def _gap_operator_quadform(spec, Xs, prs, pis):
    """<psi, (V - lambda_minus I) psi> along samples."""
    if spec.dim == 1:
        _, d, o = model._terms(spec, Xs[:, 0])
    else:
        _, d, o = model._terms(spec, Xs[:, 0], Xs[:, 1])
    d = np.asarray(d, dtype=float)
    o = np.asarray(o, dtype=float)
    s = np.hypot(d, o)
    out = np.zeros(Xs.shape[0])
    for comp in (prs, pis):
        out += ((d + s) * comp[:, 0] ** 2 + 2.0 * o * comp[:, 0] * comp[:, 1]
                + (s - d) * comp[:, 1] ** 2)
    return out


def _ehrenfest_energy_trace(spec, Xs, Ps, prs, pis, M, convention):
    lm = model.lambda_minus(spec, Xs if spec.dim == 2 else Xs[:, 0])
    kin = 0.5 * np.sum(Ps ** 2, axis=1)
    quad = _gap_operator_quadform(spec, Xs, prs, pis)
    if convention == "paper-2Msqrt":
        return kin + lm + 0.5 * math.sqrt(M) * quad
    nsq = np.sum(prs ** 2, axis=1) + np.sum(pis ** 2, axis=1)
    return kin + lm + quad / nsq


def hamiltonian_ehrenfest(spec: PotentialSpec, state: EhrenfestState,
                          M: float) -> float:
    """Mean-field energy under the state's amplitude convention.

    ``paper-2Msqrt``: |P|^2/2 + lambda_minus + sqrt(M) <psi, Vc psi> / 2.
    ``unit``:         |P|^2/2 + lambda_minus + <psi, Vc psi> / <psi, psi>.
    """
    Xs = state.phase.X[None, :]
    return float(_ehrenfest_energy_trace(spec, Xs, state.phase.P[None, :],
                                         state.psi_r[None, :], state.psi_i[None, :],
                                         M, state.norm_convention)[0])


def transition_probability(state: EhrenfestState, spec: PotentialSpec) -> float:
    """Excited-state population |<Psi_plus(X), psi>|^2 / <psi, psi>."""
    V = model.eval_potential(spec, state.phase.X)
    frame = model.adiabatic_decompose(V)
    nsq = state.psi_norm_sq
    if nsq < 1e-300:
        raise NumericalUnderflowError("electronic amplitude underflow")
    re = float(frame.psi_plus @ state.psi_r)
    im = float(frame.psi_plus @ state.psi_i)
    return (re * re + im * im) / nsq


def transition_probability_trace(traj: Trajectory, spec: PotentialSpec) -> np.ndarray:
    """p_E at every sample of a mean-field trajectory."""
    if traj.psi_r is None:
        raise ValueError("trajectory has no electronic amplitude")
    _, plus, _ = model.adiabatic_basis(spec, traj.X if spec.dim == 2 else traj.X[:, 0])
    re = np.einsum("ij,ij->i", plus, traj.psi_r)
    im = np.einsum("ij,ij->i", plus, traj.psi_i)
    return (re ** 2 + im ** 2) / traj.psi_norm_sq


# -- Landau-Zener ------------------------------------------------------------


def landau_zener_closed_form(delta: float, M: float, P0: float) -> float:
    """exp(-pi * delta^2 * sqrt(M) / P0)."""
    if P0 <= 0 or M <= 0 or delta < 0:
        raise ValueError("need P0 > 0, M > 0, delta >= 0")
    return math.exp(-math.pi * delta ** 2 * math.sqrt(M) / P0)


def landau_zener_from_energy(delta: float, M: float, E: float,
                             lambda_minus_at_0: float) -> float:
    """Closed form with the crossing momentum P0 = sqrt(2(E - lambda_-(0)))."""
    if E <= lambda_minus_at_0:
        raise ValueError("E must exceed lambda_minus at the crossing")
    return landau_zener_closed_form(delta, M,
                                    math.sqrt(2.0 * (E - lambda_minus_at_0)))


@dataclass
class LZOdeResult:
    survival_diabatic: float
    adiabatic_excited: float
    t: np.ndarray
    diabatic_pop1: np.ndarray
    adiabatic_excited_trace: np.ndarray


def landau_zener_ode(delta: float, M: float, P0: float, T0: float, dt: float,
                     stride: int = 0) -> LZOdeResult:
    """Integrate the linear-sweep two-level problem from -T0 to T0.

    The initial amplitude is the adiabatic ground state at -T0 (which tends
    to the diabatic basis vector (1, 0) as T0 grows).  Each step applies the
    exact rotation generated by the frozen midpoint matrix, so the amplitude
    norm is conserved to rounding.  Both the diabatic survival |phi_1|^2 and
    the excited-adiabatic population are reported; they agree in the large
    T0 limit.
    """
    if P0 <= 0 or M <= 0 or delta < 0:
        raise ValueError("need P0 > 0, M > 0, delta >= 0")
    if P0 * T0 < 10.0 * delta:
        warnings.warn("T0 too small: P0*T0 should be well above delta",
                      stacklevel=2)
    dt_max = 0.1 / (math.sqrt(M) * (P0 * T0 + delta))
    if dt > dt_max:
        raise ValueError(f"dt={dt:.3e} too coarse; need <= {dt_max:.3e} "
                         "to resolve the fastest phase")
    n_steps = int(math.ceil(2.0 * T0 / dt))
    dt = 2.0 * T0 / n_steps
    if stride <= 0:
        stride = max(n_steps // 2000, 1)
    t_mid = -T0 + dt * (np.arange(n_steps) + 0.5)
    dvals = P0 * t_mid
    svals = np.hypot(dvals, delta)
    theta = dt * math.sqrt(M) * svals
    cos_t = np.cos(theta)
    with np.errstate(invalid="ignore", divide="ignore"):
        axis_z = np.where(svals > 0, dvals / np.where(svals > 0, svals, 1.0), 0.0)
        axis_x = np.where(svals > 0, delta / np.where(svals > 0, svals, 1.0), 0.0)
    sin_t = np.sin(theta)
    uz = sin_t * axis_z
    ux = sin_t * axis_x

    s0 = math.hypot(P0 * T0, delta)
    ground = np.array([s0 + P0 * T0, -delta])  # ground of [[-P0*T0, delta], ...]
    ground /= np.linalg.norm(ground)
    phi1 = complex(ground[0])
    phi2 = complex(ground[1])
    samples_t = [float(-T0)]
    samples_phi = [(phi1, phi2)]
    for k in range(n_steps):
        c, z, x = cos_t[k], uz[k], ux[k]
        new1 = (c - 1j * z) * phi1 - 1j * x * phi2
        new2 = -1j * x * phi1 + (c + 1j * z) * phi2
        phi1, phi2 = new1, new2
        if (k + 1) % stride == 0 or k == n_steps - 1:
            samples_t.append(-T0 + dt * (k + 1))
            samples_phi.append((phi1, phi2))
    ts = np.array(samples_t)
    phis = np.array(samples_phi)
    pop1 = np.abs(phis[:, 0]) ** 2
    # excited adiabatic eigenvector of [[P0*t, delta], [delta, -P0*t]]
    dts = P0 * ts
    sts = np.hypot(dts, delta)
    pos = dts >= 0
    eu = np.where(pos, sts + dts, delta)
    ev = np.where(pos, delta, sts - dts)
    nrm = np.hypot(eu, ev)
    nrm = np.where(nrm > 0, nrm, 1.0)
    overlap = (eu * phis[:, 0] + ev * phis[:, 1]) / nrm
    excited = np.abs(overlap) ** 2
    return LZOdeResult(float(pop1[-1]), float(excited[-1]), ts, pop1, excited)


# -- chaos diagnostics -------------------------------------------------------


def max_lyapunov(spec: PotentialSpec, init: PhasePoint, dt: float, T: float,
                 renorm_every: int = 10) -> float:
    """Largest Lyapunov exponent by tangent-vector renormalization.

    Propagates the linearized (variational) flow alongside the ground-surface
    trajectory, accumulating log stretch factors at every renormalization.
    Deterministic: the initial tangent is the first position direction.
    """
    if renorm_every < 1:
        raise ValueError("renorm_every must be >= 1")
    n_steps = max(int(round(T / dt)), 1)
    dim = init.X.shape[0]
    X = init.X[None, :].copy()
    P = init.P[None, :].copy()
    dX = np.zeros(dim)
    dX[0] = 1.0
    dP = np.zeros(dim)
    g = _grad_lm_many(spec, X)
    hess = model.hess_lambda_minus(spec, X[0])
    log_sum = 0.0
    for k in range(n_steps):
        P += -0.5 * dt * g
        dP += -0.5 * dt * (hess @ dX)
        X += dt * P
        dX = dX + dt * dP
        g = _grad_lm_many(spec, X)
        hess = model.hess_lambda_minus(spec, X[0])
        P += -0.5 * dt * g
        dP += -0.5 * dt * (hess @ dX)
        if (k + 1) % renorm_every == 0 or k == n_steps - 1:
            nrm = math.sqrt(dX @ dX + dP @ dP)
            if not 1e-6 <= nrm <= 1e6:
                raise ValueError("tangent norm left [1e-6, 1e6]: "
                                 "shrink renorm_every")
            log_sum += math.log(nrm)
            dX /= nrm
            dP /= nrm
    return log_sum / (n_steps * dt)
