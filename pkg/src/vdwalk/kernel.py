"""Jump law of the walk and exact finite-time transition distributions.

The walk holds at each vertex for an Exponential(2^{2k}) time and jumps
per a one-step law that is uniform everywhere except at the darning
point, where the ray neighbor carries weight 2^{k+1} against weight 1
for each plane neighbor.  Finite-time laws are computed by
uniformization: a Poisson(2^{2k} t) mixture of powers of the jump
matrix, with a certified truncation error.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.sparse as sp
from scipy.stats import poisson

from .errors import BudgetError, ContractViolation, ParameterError
from .lattice import DARNING, PLANE, RAY, VdLattice, Vertex

DEFAULT_BUDGET = 1.0e5


@dataclass
class JumpKernel:
    """One-step jump law stored alongside the lattice CSR structure.

    probs aligns entry-for-entry with lat.indices; darning_cum is the
    cumulative darning row used by the samplers.  Absorbing vertices
    (absorbing boundary mode) keep a self-loop so that mass parked there
    is trivially trackable.
    """

    lat: VdLattice
    speed: float
    probs: np.ndarray
    darning_cum: np.ndarray
    _matrix: sp.csr_matrix | None = field(default=None, repr=False)

    @property
    def matrix(self) -> sp.csr_matrix:
        """Row-stochastic jump matrix J (absorbing rows replaced by I)."""
        if self._matrix is None:
            lat = self.lat
            n = lat.n_vertices
            data = self.probs.copy()
            rows = np.repeat(np.arange(n), lat.degree)
            cols = lat.indices.copy()
            if lat.absorbing.any():
                keep = ~lat.absorbing[rows]
                rows, cols, data = rows[keep], cols[keep], data[keep]
                loops = np.nonzero(lat.absorbing)[0]
                rows = np.concatenate([rows, loops])
                cols = np.concatenate([cols, loops])
                data = np.concatenate([data, np.ones(len(loops))])
            self._matrix = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
        return self._matrix


@dataclass
class KernelDistribution:
    """Time-t law of the walk started at one vertex, with error certificate."""

    start: Vertex
    time: float
    probs: np.ndarray
    truncation_error: float
    leaked_mass: float
    n_terms: int


def build_kernel(lat: VdLattice) -> JumpKernel:
    k = lat.params.k
    deg = lat.degree
    probs = np.repeat(1.0 / deg, deg)
    # darning row: ray neighbor 2^{k+1}, plane neighbors 1, normalized
    lo, hi = lat.indptr[0], lat.indptr[1]
    nbrs = lat.indices[lo:hi]
    V = int(deg[0])
    denom = V + 2 ** (k + 1) - 1
    row = np.where(lat.kind[nbrs] == RAY, float(2 ** (k + 1)), 1.0) / denom
    probs[lo:hi] = row
    return JumpKernel(lat=lat, speed=float(4 ** k), probs=probs,
                      darning_cum=np.cumsum(row))


def jump_distribution(lat: VdLattice, x: Vertex) -> list[tuple[Vertex, Fraction]]:
    """Exact one-step law at x as (neighbor, rational probability) pairs."""
    xi = lat.index_of(x)
    nbrs = lat.neighbors(xi)
    if xi != 0:
        p = Fraction(1, len(nbrs))
        return [(lat.vertex(int(y)), p) for y in nbrs]
    k = lat.params.k
    denom = int(lat.degree[0]) + 2 ** (k + 1) - 1
    out = []
    for y in nbrs:
        w = 2 ** (k + 1) if lat.kind[y] == RAY else 1
        out.append((lat.vertex(int(y)), Fraction(w, denom)))
    return out


def _poisson_window(mu: float, tol: float) -> tuple[int, np.ndarray, float]:
    """Series length, weights and certified tail mass for uniformization."""
    if mu == 0.0:
        return 0, np.array([1.0]), 0.0
    n_max = int(poisson.isf(tol / 2, mu))
    while poisson.sf(n_max, mu) > tol / 2:
        n_max += 1
    w = poisson.pmf(np.arange(n_max + 1), mu)
    return n_max, w, max(0.0, 1.0 - float(w.sum()))


def transition_distribution(lat: VdLattice, kern: JumpKernel, x0: Vertex,
                            t: float, tol: float = 1e-10,
                            budget: float = DEFAULT_BUDGET) -> KernelDistribution:
    """Exact law of the walk at time t by uniformization."""
    if t < 0:
        raise ParameterError("time must be nonnegative")
    if not 0 < tol <= 1e-3:
        raise ParameterError("tol must lie in (0, 1e-3]")
    mu = kern.speed * t
    if mu > budget:
        raise BudgetError(
            f"speed*t = {mu:g} exceeds the uniformization budget {budget:g}; "
            "use Monte Carlo sampling instead")
    xi = lat.index_of(x0)
    n = lat.n_vertices
    vec = np.zeros(n)
    vec[xi] = 1.0
    if t == 0.0:
        probs = vec
        n_terms = 0
        trunc = 0.0
    else:
        n_terms, w, trunc = _poisson_window(mu, tol)
        jt = kern.matrix.T.tocsr()
        acc = w[0] * vec
        for step in range(1, n_terms + 1):
            vec = jt @ vec
            if w[step] != 0.0:
                acc = acc + w[step] * vec
        probs = acc
    leaked = 0.0
    if lat.absorbing.any():
        leaked = float(probs[lat.absorbing].sum())
        probs = np.where(lat.absorbing, 0.0, probs)
    return KernelDistribution(start=x0, time=t, probs=probs,
                              truncation_error=trunc, leaked_mass=leaked,
                              n_terms=n_terms)


def transition_matrix_multi(lat: VdLattice, kern: JumpKernel,
                            sources: list[int], times: list[float],
                            tol: float = 1e-10,
                            budget: float = DEFAULT_BUDGET) -> dict:
    """Laws for several sources and several times in one series pass.

    Returns {t: (n_vertices, n_sources) array}.  One sweep of matrix
    powers serves every time; each time applies its own Poisson weights.
    """
    mus = [kern.speed * t for t in times]
    if max(mus) > budget:
        raise BudgetError("largest speed*t exceeds the uniformization budget")
    windows = {t: _poisson_window(mu, tol) for t, mu in zip(times, mus)}
    n_max = max(w[0] for w in windows.values())
    n = lat.n_vertices
    block = np.zeros((n, len(sources)))
    for c, s in enumerate(sources):
        block[s, c] = 1.0
    jt = kern.matrix.T.tocsr()
    acc = {t: windows[t][1][0] * block for t in times}
    for step in range(1, n_max + 1):
        block = jt @ block
        for t in times:
            w = windows[t][1]
            if step < len(w) and w[step] != 0.0:
                acc[t] = acc[t] + w[step] * block
    return acc


def heat_kernel_density(lat: VdLattice, kern: JumpKernel, x0: Vertex,
                        t: float, tol: float = 1e-10,
                        budget: float = DEFAULT_BUDGET) -> np.ndarray:
    """Transition density p_k(t, x0, .) with respect to the measure m_k."""
    dist = transition_distribution(lat, kern, x0, t, tol, budget)
    return dist.probs / lat.mass


def _check_lengths(lat: VdLattice, f, g) -> None:
    if len(f) != lat.n_vertices or len(g) != lat.n_vertices:
        raise ContractViolation("function arrays must cover every vertex")


def dirichlet_form(lat: VdLattice, f, g=None):
    """Energy via the oriented-edge display: plane edges at weight 1/8,
    ray edges at weight 2^k/4, each unoriented edge counted twice.

    Object-dtype (Fraction) input switches to exact rational arithmetic.
    """
    if g is None:
        g = f
    f = np.asarray(f)
    g = np.asarray(g)
    _check_lengths(lat, f, g)
    df = f[lat.edge_u] - f[lat.edge_v]
    dg = g[lat.edge_u] - g[lat.edge_v]
    plane = lat.edge_class == 0
    k = lat.params.k
    if f.dtype == object or g.dtype == object:
        s_plane = sum((df[plane] * dg[plane]).tolist(), Fraction(0))
        s_ray = sum((df[~plane] * dg[~plane]).tolist(), Fraction(0))
        return Fraction(1, 4) * s_plane + Fraction(2 ** k, 2) * s_ray
    prod = df * dg
    return 0.25 * float(prod[plane].sum()) + float(2 ** (k - 1)) * float(prod[~plane].sum())


def dirichlet_form_jump(lat: VdLattice, kern: JumpKernel, f, g=None):
    """Energy via the jump-form display: ½ΣΣ ΔfΔg · j_k(x,y) · λ_k·m_k(x)."""
    if g is None:
        g = f
    f = np.asarray(f)
    g = np.asarray(g)
    _check_lengths(lat, f, g)
    rows = np.repeat(np.arange(lat.n_vertices), lat.degree)
    cols = lat.indices
    if f.dtype == object or g.dtype == object:
        mass = lat.mass_exact()
        lam = 4 ** lat.params.k
        total = Fraction(0)
        for x in range(lat.n_vertices):
            row = jump_distribution(lat, lat.vertex(x))
            mx = mass[x] * lam
            for yv, p in row:
                y = lat.index_of(yv)
                total += (f[x] - f[y]) * (g[x] - g[y]) * p * mx
        return total / 2
    terms = (f[rows] - f[cols]) * (g[rows] - g[cols]) * kern.probs * lat.mass[rows]
    return 0.5 * kern.speed * float(terms.sum())
