"""Discrete two-state and scalar Schrodinger eigenproblems on uniform grids.

The Hamiltonian is -(1/2M) * (second-difference Laplacian) x I2 + V(X) with
homogeneous Dirichlet boundary conditions; nodes are ordered row-major with
the two electronic components interleaved per node.  Quadratures are plain
node sums times h^dim, which is trapezoid-consistent because the boundary
values vanish.

Interior eigenpairs come from ARPACK's shift-invert Lanczos (scipy.sparse
.linalg.eigsh) with a deterministic starting vector; 1D scalar window
enumeration uses the LAPACK tridiagonal range solver, which is exact about
completeness inside the window.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.linalg
import scipy.sparse as sparse
import scipy.sparse.linalg as splinalg

from . import model
from .errors import SolverFailureError
from .model import PotentialSpec

__all__ = [
    "Grid",
    "ExplicitGrid",
    "SparseHamiltonian",
    "EigenPair",
    "ExcitedProbability",
    "PiecewiseConstant",
    "ResonanceSample",
    "build_grid",
    "assemble_hamiltonian",
    "assemble_scalar_hamiltonian",
    "eigs_near",
    "scalar_spectra",
    "excited_probability",
    "resonance_estimate",
    "landau_zener_factor",
    "fit_C",
    "schrodinger_observable",
    "dump_eigenvector",
    "load_eigenvector",
]


@dataclass(frozen=True)
class ExplicitGrid:
    """User-chosen mesh: h is snapped to divide each axis interval exactly."""

    h: float
    domain: tuple  # ((lo, hi),) or ((lo1, hi1), (lo2, hi2))


@dataclass(frozen=True)
class Grid:
    dim: int
    lo: tuple
    hi: tuple
    h: float
    n: tuple  # interior points per axis

    def __post_init__(self):
        for ax in range(self.dim):
            if self.n[ax] < 3:
                raise ValueError(f"axis {ax}: need >= 3 interior points, got {self.n[ax]}")
            span = self.h * (self.n[ax] + 1)
            if abs(span - (self.hi[ax] - self.lo[ax])) > 1e-12 * max(1.0, abs(span)):
                raise ValueError(f"axis {ax}: h*(n+1) does not span the domain")

    def axis_coords(self, ax: int) -> np.ndarray:
        return self.lo[ax] + self.h * np.arange(1, self.n[ax] + 1)

    def nodes(self) -> np.ndarray:
        """Interior node coordinates, shape (n_nodes, dim), row-major order."""
        if self.dim == 1:
            return self.axis_coords(0)[:, None]
        X1, X2 = np.meshgrid(self.axis_coords(0), self.axis_coords(1), indexing="ij")
        return np.column_stack([X1.ravel(), X2.ravel()])

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.n))


def build_grid(spec: PotentialSpec, M: float,
               preset: Union[str, ExplicitGrid] = "paper-1d") -> Grid:
    """Build the uniform grid for a spec at mass ratio M.

    ``paper-1d``: domain (-2pi, 2pi) with ceil(10*M^(3/4)) intervals.
    ``paper-2d``: domain [-4, 4]^2 with the number of intervals nearest
    8/(1/(2*sqrt(M))) so h divides the side exactly.
    ``ExplicitGrid``: h snapped to the nearest exact divisor of each side.
    """
    if M <= 0:
        raise ValueError("M must be positive")
    if isinstance(preset, ExplicitGrid):
        domain = tuple((float(a), float(b)) for a, b in preset.domain)
        if len(domain) != spec.dim:
            raise ValueError("explicit domain dimension does not match spec")
        side = domain[0][1] - domain[0][0]
        intervals = max(round(side / preset.h), 1)
        h = side / intervals
        ns = []
        for lo, hi in domain:
            k = round((hi - lo) / h)
            if abs(k * h - (hi - lo)) > 1e-9 * side:
                raise ValueError("explicit h does not divide every axis interval")
            ns.append(k - 1)
        return Grid(spec.dim, tuple(d[0] for d in domain), tuple(d[1] for d in domain),
                    h, tuple(ns))
    if preset == "paper-1d":
        if spec.dim != 1:
            raise ValueError("paper-1d preset needs a 1D spec")
        intervals = int(np.ceil(10.0 * M ** 0.75))
        h = 4.0 * np.pi / intervals
        return Grid(1, (-2.0 * np.pi,), (2.0 * np.pi,), h, (intervals - 1,))
    if preset == "paper-2d":
        if spec.dim != 2:
            raise ValueError("paper-2d preset needs a 2D spec")
        intervals = max(round(8.0 * 2.0 * np.sqrt(M)), 4)
        h = 8.0 / intervals
        return Grid(2, (-4.0, -4.0), (4.0, 4.0), h, (intervals - 1, intervals - 1))
    raise ValueError(f"unknown grid preset {preset!r}")


@dataclass
class SparseHamiltonian:
    matrix: sparse.csr_matrix
    grid: Grid
    spec: Optional[PotentialSpec]
    M: float
    n_components: int = 2

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]


@dataclass
class EigenPair:
    E: float
    Phi: np.ndarray  # (n_nodes, n_components), quadrature-normalized
    residual: float
    norm: float


def _laplacian_1d(n: int) -> sparse.csr_matrix:
    main = 2.0 * np.ones(n)
    off = -np.ones(n - 1)
    return sparse.diags([off, main, off], [-1, 0, 1], format="csr")


def _laplacian_nd(grid: Grid) -> sparse.csr_matrix:
    """Second-difference matrix (positive semi-definite stencil) / h^2 omitted."""
    if grid.dim == 1:
        return _laplacian_1d(grid.n[0])
    L1 = _laplacian_1d(grid.n[0])
    L2 = _laplacian_1d(grid.n[1])
    I1 = sparse.identity(grid.n[0], format="csr")
    I2 = sparse.identity(grid.n[1], format="csr")
    return (sparse.kron(L1, I2) + sparse.kron(I1, L2)).tocsr()


def assemble_scalar_hamiltonian(grid: Grid, potential: Union[Callable, np.ndarray],
                                M: float) -> SparseHamiltonian:
    """-(1/2M) Delta_h + diag(potential at nodes), one component per node."""
    nodes = grid.nodes()
    if callable(potential):
        vals = np.asarray(potential(nodes), dtype=float).reshape(-1)
    else:
        vals = np.asarray(potential, dtype=float).reshape(-1)
    if vals.shape[0] != grid.n_nodes:
        raise ValueError("potential values do not match the grid")
    H = _laplacian_nd(grid) * (1.0 / (2.0 * M * grid.h ** 2))
    H = (H + sparse.diags([vals], [0])).tocsr()
    return SparseHamiltonian(H, grid, None, M, n_components=1)


def assemble_hamiltonian(grid: Grid, spec: PotentialSpec, M: float) -> SparseHamiltonian:
    """Two-state discrete Hamiltonian with 2x2 potential blocks per node."""
    if grid.dim != spec.dim:
        raise ValueError("grid dimension does not match spec")
    nodes = grid.nodes()
    if spec.dim == 1:
        m, d, o = model._terms(spec, nodes[:, 0])
    else:
        m, d, o = model._terms(spec, nodes[:, 0], nodes[:, 1])
    N = grid.n_nodes
    lap = _laplacian_nd(grid) * (1.0 / (2.0 * M * grid.h ** 2))
    H = sparse.kron(lap, sparse.identity(2, format="csr"), format="csr")
    rows = 2 * np.arange(N)
    pot = sparse.csr_matrix(
        (np.concatenate([m + d, m - d, np.broadcast_to(o, (N,)),
                         np.broadcast_to(o, (N,))]),
         (np.concatenate([rows, rows + 1, rows, rows + 1]),
          np.concatenate([rows, rows + 1, rows + 1, rows]))),
        shape=(2 * N, 2 * N))
    return SparseHamiltonian((H + pot).tocsr(), grid, spec, M, n_components=2)


def _quadrature_normalize(H: SparseHamiltonian, vec: np.ndarray) -> np.ndarray:
    w = H.grid.h ** (H.grid.dim / 2.0)
    return vec / (np.linalg.norm(vec) * w)


def eigs_near(H: SparseHamiltonian, sigma: float, k: int = 1,
              tol: float = 1e-8, seed: int = 0) -> list[EigenPair]:
    """The k eigenpairs nearest sigma, sorted by |E - sigma|.

    Shift-invert Lanczos with a deterministic starting vector derived from
    ``seed``; every returned pair is checked against ``tol`` on the relative
    residual and quadrature-normalized.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    A = H.matrix
    dim = A.shape[0]
    if k >= dim - 1:
        raise ValueError("k too large for the matrix dimension")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed),
                                                       spawn_key=(101,)))
    v0 = rng.standard_normal(dim)
    try:
        vals, vecs = splinalg.eigsh(A.tocsc(), k=k, sigma=sigma, which="LM", v0=v0)
    except splinalg.ArpackNoConvergence as exc:
        raise SolverFailureError(
            "shift-invert Lanczos did not converge",
            {"sigma": sigma, "k": k, "converged": len(exc.eigenvalues)}) from exc
    order = np.argsort(np.abs(vals - sigma), kind="stable")
    pairs = []
    for idx in order:
        vec = vecs[:, idx]
        res = float(np.linalg.norm(A @ vec - vals[idx] * vec) / np.linalg.norm(vec))
        if res > tol:
            raise SolverFailureError(
                f"residual {res:.3e} above tol {tol:.1e}",
                {"sigma": sigma, "E": float(vals[idx])})
        vec = _quadrature_normalize(H, vec)
        pairs.append(EigenPair(float(vals[idx]),
                               vec.reshape(-1, H.n_components), res, 1.0))
    return pairs


def scalar_spectra(grid: Grid, spec: PotentialSpec, M: float, branch: str,
                   window: tuple[float, float], tol: float = 1e-8,
                   seed: int = 0) -> np.ndarray:
    """All eigenvalues of -(1/2M)Delta_h + lambda_branch(X) inside the window.

    branch is "-" or "+".  In 1D the tridiagonal range solver enumerates the
    window exactly; in 2D the window is swept by shift-invert from its center
    with doubling subspace size until both window edges are bracketed.
    """
    if branch not in ("-", "+"):
        raise ValueError("branch must be '-' or '+'")
    lo, hi = float(window[0]), float(window[1])
    if not lo < hi:
        raise ValueError("window must be an increasing interval")
    nodes = grid.nodes()
    lm, lp = model.lambda_surfaces(spec, nodes if grid.dim == 2 else nodes[:, 0])
    vals = lm if branch == "-" else lp
    if grid.dim == 1:
        diag = 1.0 / (M * grid.h ** 2) + vals
        off = np.full(grid.n[0] - 1, -1.0 / (2.0 * M * grid.h ** 2))
        evs = scipy.linalg.eigvalsh_tridiagonal(diag, off, select="v",
                                                select_range=(lo, hi))
        return np.sort(evs)
    H = assemble_scalar_hamiltonian(grid, vals, M)
    center = 0.5 * (lo + hi)
    A = H.matrix
    gersh_low = float(np.min(A.diagonal()
                             - (np.abs(A).sum(axis=1).A1 - np.abs(A.diagonal()))))
    lam_min = eigs_near(H, gersh_low - 1.0, k=1, tol=tol, seed=seed)[0].E
    k = 16
    while True:
        k = min(k, H.dimension - 2)
        pairs = eigs_near(H, center, k=k, tol=tol, seed=seed)
        evs = np.sort([p.E for p in pairs])
        done_low = evs[0] < lo or evs[0] <= lam_min + 1e-12
        if (done_low and evs[-1] > hi) or k == H.dimension - 2:
            return evs[(evs >= lo) & (evs <= hi)]
        k *= 2


@dataclass
class ExcitedProbability:
    value: float
    nodes_excluded: int = 0
    warning: bool = False


def excited_probability(pair: EigenPair, spec: PotentialSpec,
                        grid: Grid) -> ExcitedProbability:
    """Spectral excited-state weight of a two-state eigenvector.

    Nodes sitting exactly on an intersection (undefined excited vector) are
    excluded and counted; the warning flag trips when they exceed 0.1% of
    the grid.
    """
    nodes = grid.nodes()
    _, plus, gap = model.adiabatic_basis(spec, nodes if grid.dim == 2 else nodes[:, 0])
    ok = ~np.isnan(plus[:, 0])
    excluded = int(np.count_nonzero(~ok))
    proj = np.einsum("ij,ij->i", pair.Phi[ok], plus[ok])
    num = float(np.sum(proj ** 2))
    den = float(np.sum(pair.Phi[ok] ** 2))
    return ExcitedProbability(num / den, excluded,
                              excluded > 1e-3 * grid.n_nodes)


def landau_zener_factor(delta: float, M: float, E: float,
                        lambda_minus_at_0: float) -> float:
    """p_LZ in its energy form exp(-pi*delta^2*sqrt(M)/sqrt(2(E - lambda_-(0))))."""
    gap_energy = E - lambda_minus_at_0
    if gap_energy <= 0:
        raise ValueError("E must exceed lambda_minus at the crossing")
    return float(np.exp(-np.pi * delta ** 2 * np.sqrt(M) / np.sqrt(2.0 * gap_energy)))


@dataclass(frozen=True)
class PiecewiseConstant:
    """Piecewise-constant function of energy: len(values) == len(breakpoints)+1."""

    breakpoints: tuple
    values: tuple

    def __post_init__(self):
        if len(self.values) != len(self.breakpoints) + 1:
            raise ValueError("need exactly len(breakpoints)+1 values")
        if list(self.breakpoints) != sorted(self.breakpoints):
            raise ValueError("breakpoints must be sorted")

    def __call__(self, E: float) -> float:
        return self.values[int(np.searchsorted(self.breakpoints, E, side="right"))]


def resonance_estimate(E: float, minus_spectrum: Sequence[float],
                       plus_spectrum: Sequence[float], delta: float, M: float,
                       lambda_minus_at_0: float,
                       C: Union[float, PiecewiseConstant]) -> float:
    """Excited-state probability from spectral gaps around E.

    Finds the minus-branch eigenvalue nearest E, its nearest distinct
    minus-branch neighbor and the nearest plus-branch eigenvalue, then
    combines their spacing ratio with the Landau-Zener factor:
    p = p_LZ / (C^-1 * |E-^l - E+^l|^2 / |E-^l - E-^m|^2 + p_LZ).
    Argmin ties break toward the smaller eigenvalue.
    """
    minus = np.sort(np.asarray(minus_spectrum, dtype=float))
    plus = np.sort(np.asarray(plus_spectrum, dtype=float))
    if minus.size < 2:
        raise ValueError("need at least two minus-branch eigenvalues")
    if plus.size < 1:
        raise ValueError("need at least one plus-branch eigenvalue")
    il = int(np.argmin(np.abs(minus - E)))
    E_ml = minus[il]
    rest = np.delete(minus, il)
    E_mm = rest[int(np.argmin(np.abs(rest - E_ml)))]
    E_pl = plus[int(np.argmin(np.abs(plus - E_ml)))]
    p_lz = landau_zener_factor(delta, M, E, lambda_minus_at_0)
    c_val = C(E) if isinstance(C, PiecewiseConstant) else float(C)
    ratio = (E_ml - E_pl) ** 2 / (E_ml - E_mm) ** 2
    denom = ratio / c_val + p_lz
    if denom == 0.0:
        return 0.0  # p_lz == 0 and exact resonance: no transition channel open
    return float(p_lz / denom)


@dataclass(frozen=True)
class ResonanceSample:
    """One eigenvalue's worth of data for calibrating the constant C."""

    E: float
    p_e: float
    p_lz: float
    gap_ratio_sq: float  # |E-^l - E+^l|^2 / |E-^l - E-^m|^2

    def estimate(self, c_val: float) -> float:
        denom = self.gap_ratio_sq / c_val + self.p_lz
        return self.p_lz / denom if denom > 0 else 0.0


def fit_C(samples: Sequence[ResonanceSample],
          breakpoints: Sequence[float] = ()) -> PiecewiseConstant:
    """Least-squares piecewise-constant C by golden-section search on log10 C.

    The search interval is log10 C in [-6, 6]; a segment whose objective is
    flat (e.g. a single exact-resonance sample) returns the interval
    midpoint C = 1.  Every segment needs at least one sample.
    """
    breakpoints = tuple(sorted(breakpoints))
    edges = (-np.inf,) + breakpoints + (np.inf,)
    values = []
    for si in range(len(edges) - 1):
        seg = [s for s in samples if edges[si] <= s.E < edges[si + 1]]
        if not seg:
            raise ValueError(f"segment {si} ({edges[si]}, {edges[si+1]}) has no samples")
        values.append(_fit_segment(seg))
    return PiecewiseConstant(breakpoints, tuple(values))


def _fit_segment(seg: Sequence[ResonanceSample]) -> float:
    def objective(logc: float) -> float:
        c = 10.0 ** logc
        return sum((s.p_e - s.estimate(c)) ** 2 for s in seg)

    probes = [objective(x) for x in np.linspace(-6.0, 6.0, 13)]
    if max(probes) - min(probes) <= 1e-15 * (1.0 + max(probes)):
        return 1.0  # flat objective: search midpoint 10^0
    a, b = -6.0, 6.0
    phi = (np.sqrt(5.0) - 1.0) / 2.0
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    fc, fd = objective(c), objective(d)
    for _ in range(120):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = objective(c)
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = objective(d)
    return float(10.0 ** (0.5 * (a + b)))


def schrodinger_observable(pair: EigenPair, g: Callable, grid: Grid) -> float:
    """Position-density average sum g(X) rho(X) / sum rho(X), rho = |Phi|^2."""
    nodes = grid.nodes()
    rho = np.sum(pair.Phi ** 2, axis=1)
    gvals = np.asarray(g(nodes), dtype=float).reshape(-1)
    return float(np.sum(gvals * rho) / np.sum(rho))


def dump_eigenvector(path, pair: EigenPair, grid: Grid) -> None:
    """Binary dump: int64 header (dim, n per axis..., n_components), then
    little-endian float64 values in row-major node order."""
    ncomp = pair.Phi.shape[1]
    header = np.array([grid.dim, *grid.n, ncomp], dtype="<i8")
    with open(path, "wb") as fh:
        fh.write(header.tobytes())
        fh.write(pair.Phi.astype("<f8").tobytes())


def load_eigenvector(path):
    with open(path, "rb") as fh:
        dim = int(np.frombuffer(fh.read(8), dtype="<i8")[0])
        n = tuple(int(x) for x in np.frombuffer(fh.read(8 * dim), dtype="<i8"))
        ncomp = int(np.frombuffer(fh.read(8), dtype="<i8")[0])
        data = np.frombuffer(fh.read(), dtype="<f8").reshape(-1, ncomp)
    return data, n
