"""Construction of the darned varying-dimension lattice.

The state space is a square lattice of mesh ``2**-k`` on the punctured
plane, with every lattice point inside the closed disc of radius
``epsilon`` collapsed into a single "darning" vertex, and a half-line
lattice attached to that vertex.  All membership and edge-clearance
decisions are made in exact integer arithmetic, which requires
``epsilon`` and the truncation window to be dyadic rationals.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph

from .errors import ContractViolation, DegenerateGeometryError, ParameterError

DARNING, PLANE, RAY = 0, 1, 2

_KIND_NAMES = {DARNING: "darning", PLANE: "plane", RAY: "ray"}


def _as_dyadic(x) -> Fraction:
    """Coerce to a Fraction with power-of-two denominator."""
    f = Fraction(x)
    d = f.denominator
    if d & (d - 1):
        raise ParameterError(f"{x!r} is not a dyadic rational")
    return f


@dataclass(frozen=True)
class Vertex:
    """Tagged lattice point: darning, Plane(i, j) or Ray(n).

    Plane coordinates are integers at scale ``2**-k``; Ray(n) is the
    point ``n * 2**-k`` on the half-line, n >= 1.
    """

    kind: int
    i: int = 0
    j: int = 0

    @staticmethod
    def darning() -> "Vertex":
        return Vertex(DARNING)

    @staticmethod
    def plane(i: int, j: int) -> "Vertex":
        return Vertex(PLANE, i, j)

    @staticmethod
    def ray(n: int) -> "Vertex":
        if n < 1:
            raise ParameterError("ray vertices are numbered from 1")
        return Vertex(RAY, n)

    def __repr__(self):
        if self.kind == DARNING:
            return "Vertex.darning()"
        if self.kind == PLANE:
            return f"Vertex.plane({self.i}, {self.j})"
        return f"Vertex.ray({self.i})"


@dataclass(frozen=True)
class SpacePoint:
    """A point of the continuous state space.

    kind 'darning' is the collapsed disc; 'plane' carries (x, y) with
    |.| > epsilon; 'ray' carries the distance from the junction in x.
    """

    kind: str
    x: float = 0.0
    y: float = 0.0


@dataclass(frozen=True)
class LatticeParams:
    """Parameters of a truncated lattice build.

    epsilon and window_radius must be dyadic rationals; the window is a
    max-norm box for the plane part and a length cap for the ray.
    boundary_mode 'induced' keeps the walk inside by dropping outside
    neighbors; 'absorbing' kills the walk at window-boundary vertices.
    """

    k: int
    epsilon: Fraction
    window_radius: Fraction
    boundary_mode: str = "induced"

    def __post_init__(self):
        object.__setattr__(self, "epsilon", _as_dyadic(self.epsilon))
        object.__setattr__(self, "window_radius", _as_dyadic(self.window_radius))
        if self.k < 1:
            raise ParameterError("k must be a positive integer")
        if not (0 < self.epsilon < Fraction(1, 2)):
            raise ParameterError("epsilon must lie in (0, 1/2)")
        if self.window_radius < 4 * self.epsilon:
            raise ParameterError("window_radius must be at least 4*epsilon")
        if self.boundary_mode not in ("induced", "absorbing"):
            raise ParameterError(f"unknown boundary_mode {self.boundary_mode!r}")

    @property
    def mesh(self) -> float:
        return 2.0 ** -self.k

    @property
    def speed(self) -> float:
        """Jump rate of the walk on this lattice."""
        return float(4 ** self.k)

    @property
    def theory_regime(self) -> bool:
        """True when epsilon < 1/64 and the mesh is below epsilon/4."""
        return self.epsilon < Fraction(1, 64) and Fraction(1, 2 ** self.k) < self.epsilon / 4


def _disc_le(i2j2: np.ndarray, params: LatticeParams) -> np.ndarray:
    """Exact test (i^2+j^2) * 2**-2k <= epsilon^2, vectorized over integers."""
    p = params.epsilon.numerator
    q = params.epsilon.denominator  # power of two
    # (i^2+j^2) / 4^k <= p^2 / q^2   <=>   (i^2+j^2) * q^2 <= p^2 * 4^k
    lhs = i2j2.astype(object) * (q * q)
    return np.array([v <= p * p * 4 ** params.k for v in lhs.ravel()], dtype=bool).reshape(i2j2.shape)


def _inside_closed_disc(i: np.ndarray, j: np.ndarray, params: LatticeParams) -> np.ndarray:
    i = np.asarray(i, dtype=np.int64)
    j = np.asarray(j, dtype=np.int64)
    p = params.epsilon.numerator
    q = params.epsilon.denominator
    rhs = p * p * 4 ** params.k
    if rhs < 2 ** 62 and q * q < 2 ** 31:
        return (i * i + j * j) * (q * q) <= rhs
    return _disc_le(i * i + j * j, params)


def segment_clears_disc(a: Vertex, b: Vertex, params: LatticeParams) -> bool:
    """Exact test that the axis-aligned unit edge [a, b] stays outside the disc.

    Both endpoints must be adjacent plane lattice points strictly outside
    the closed disc.  The minimum distance of the segment to the origin is
    attained either at an endpoint (then automatically > epsilon) or at the
    perpendicular foot, which lies on the segment only when it crosses the
    coordinate axis.
    """
    if a.kind != PLANE or b.kind != PLANE:
        raise ContractViolation("segment_clears_disc expects plane vertices")
    di, dj = abs(a.i - b.i), abs(a.j - b.j)
    if di + dj != 1:
        raise ContractViolation("vertices are not lattice-adjacent")
    if _inside_closed_disc(np.array([a.i, b.i]), np.array([a.j, b.j]), params).any():
        raise ContractViolation("endpoint inside the closed disc")
    lo_i, hi_i = min(a.i, b.i), max(a.i, b.i)
    lo_j, hi_j = min(a.j, b.j), max(a.j, b.j)
    p, q = params.epsilon.numerator, params.epsilon.denominator
    rhs = p * p * 4 ** params.k
    if di == 1 and lo_i <= 0 <= hi_i:
        return a.j * a.j * q * q > rhs
    if dj == 1 and lo_j <= 0 <= hi_j:
        return a.i * a.i * q * q > rhs
    return True


@dataclass
class VdLattice:
    """The truncated darned lattice with its graph, degrees and measure.

    Vertex 0 is the darning point, vertices 1..n_ray are Ray(1..n_ray),
    plane vertices follow in lexicographic (i, j) order.  adjacency is
    CSR over vertex indices; mass is the reference measure making the
    walk symmetric.
    """

    params: LatticeParams
    kind: np.ndarray          # uint8 per vertex
    ci: np.ndarray            # int32: plane i / ray n
    cj: np.ndarray            # int32: plane j
    indptr: np.ndarray
    indices: np.ndarray
    degree: np.ndarray
    mass: np.ndarray
    edge_u: np.ndarray        # unoriented edges, u < v
    edge_v: np.ndarray
    edge_class: np.ndarray    # 0 = plane part, 1 = ray part
    absorbing: np.ndarray     # bool, window-boundary vertices (absorbing mode)
    warnings: list = field(default_factory=list)
    _dist_to_darning: np.ndarray | None = None
    _vertex_index: dict | None = None

    # -- basic queries ---------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.kind)

    @property
    def n_edges(self) -> int:
        return len(self.edge_u)

    @property
    def darning_index(self) -> int:
        return 0

    @property
    def n_ray(self) -> int:
        return int(np.count_nonzero(self.kind == RAY))

    def neighbors(self, idx: int) -> np.ndarray:
        return self.indices[self.indptr[idx]:self.indptr[idx + 1]]

    def vertex(self, idx: int) -> Vertex:
        kd = int(self.kind[idx])
        if kd == DARNING:
            return Vertex.darning()
        if kd == RAY:
            return Vertex.ray(int(self.ci[idx]))
        return Vertex.plane(int(self.ci[idx]), int(self.cj[idx]))

    def index_of(self, v: Vertex) -> int:
        if v.kind == DARNING:
            return 0
        if v.kind == RAY:
            n = v.i
            if not 1 <= n <= self.n_ray:
                raise ParameterError(f"{v!r} outside the lattice window")
            return n
        if self._vertex_index is None:
            plane = np.nonzero(self.kind == PLANE)[0]
            self._vertex_index = {
                (int(self.ci[t]), int(self.cj[t])): int(t) for t in plane
            }
        try:
            return self._vertex_index[(v.i, v.j)]
        except KeyError:
            raise ParameterError(f"{v!r} is not a vertex of this lattice") from None

    # -- geometry --------------------------------------------------------

    def embed_all(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Embedded coordinates (x, y) and geodesic norms |.|_rho per vertex."""
        h = self.params.mesh
        eps = float(self.params.epsilon)
        x = np.where(self.kind == PLANE, self.ci * h, np.where(self.kind == RAY, self.ci * h, 0.0))
        y = np.where(self.kind == PLANE, self.cj * h, 0.0)
        r = np.hypot(x, y)
        rho = np.where(self.kind == PLANE, r - eps,
                       np.where(self.kind == RAY, self.ci * h, 0.0))
        return x, y, rho

    def embed(self, v: Vertex) -> SpacePoint:
        h = self.params.mesh
        if v.kind == DARNING:
            return SpacePoint("darning")
        if v.kind == PLANE:
            return SpacePoint("plane", v.i * h, v.j * h)
        return SpacePoint("ray", v.i * h)

    def mass_exact(self) -> list:
        """The reference measure as exact rationals (for exact-form checks)."""
        h = Fraction(1, 2 ** self.params.k)
        out = []
        for t in range(self.n_vertices):
            v = int(self.degree[t])
            kd = int(self.kind[t])
            if kd == PLANE:
                out.append(h * h / 4 * v)
            elif kd == RAY:
                out.append(h / 2 * v)
            else:
                out.append(h / 2 + h * h / 4 * (v - 1))
        return out

    def distances_from(self, idx: int) -> np.ndarray:
        """Graph metric d_k from one vertex to all others (length units)."""
        hops = csgraph.dijkstra(self._csr(), unweighted=True, indices=idx)
        return hops * self.params.mesh

    def dist_to_darning(self) -> np.ndarray:
        if self._dist_to_darning is None:
            self._dist_to_darning = self.distances_from(0)
        return self._dist_to_darning

    def _csr(self) -> sp.csr_matrix:
        n = self.n_vertices
        return sp.csr_matrix(
            (np.ones(len(self.indices), dtype=np.int8), self.indices, self.indptr),
            shape=(n, n))

    def interior_mask(self, margin_cells: int = 2) -> np.ndarray:
        """Vertices at graph distance >= margin from the window boundary."""
        N = _window_cells(self.params)
        Nr = self.n_ray
        m = np.ones(self.n_vertices, dtype=bool)
        plane = self.kind == PLANE
        m[plane] = np.maximum(np.abs(self.ci[plane]), np.abs(self.cj[plane])) <= N - margin_cells
        ray = self.kind == RAY
        m[ray] = self.ci[ray] <= Nr - margin_cells
        return m

    # -- invariants ------------------------------------------------------

    def check_invariants(self) -> None:
        """Raise AssertionError on any violated construction invariant."""
        params = self.params
        h = params.mesh
        deg = np.diff(self.indptr)
        assert np.array_equal(deg, self.degree)
        # degree symmetry comes with the symmetric CSR; spot-check anyway
        csr = self._csr()
        assert (csr != csr.T).nnz == 0
        assert int(self.degree.sum()) == 2 * self.n_edges
        # single darning component, connected graph
        ncomp, _ = csgraph.connected_components(csr, directed=False)
        assert ncomp == 1, "lattice graph is not connected"
        # at most one edge joins any vertex to the darning point
        darn_nbrs = self.neighbors(0)
        assert len(darn_nbrs) == len(set(darn_nbrs.tolist()))
        # three-case measure definition
        vk = self.degree.astype(float)
        expect = np.where(self.kind == PLANE, h * h / 4 * vk,
                          np.where(self.kind == RAY, h / 2 * vk,
                                   h / 2 + h * h / 4 * (vk - 1)))
        assert np.array_equal(self.mass, expect)
        # plane-plane edges clear the disc (exact vectorized re-test)
        uu, vv = self.edge_u, self.edge_v
        both_plane = (self.kind[uu] == PLANE) & (self.kind[vv] == PLANE)
        ui, uj = self.ci[uu[both_plane]], self.cj[uu[both_plane]]
        vi, vj = self.ci[vv[both_plane]], self.cj[vv[both_plane]]
        p, q = params.epsilon.numerator, params.epsilon.denominator
        rhs = p * p * 4 ** params.k
        horiz = uj == vj
        cross_h = horiz & (np.minimum(ui, vi) <= 0) & (np.maximum(ui, vi) >= 0)
        cross_v = ~horiz & (np.minimum(uj, vj) <= 0) & (np.maximum(uj, vj) >= 0)
        assert np.all(uj[cross_h] ** 2 * q * q > rhs)
        assert np.all(ui[cross_v] ** 2 * q * q > rhs)
        # full degree away from the window boundary and the disc
        x, y, _ = self.embed_all()
        far = self.interior_mask(1) & (np.hypot(x, y) > float(params.epsilon) + 2 * h)
        plane_far = far & (self.kind == PLANE)
        ray_far = far & (self.kind == RAY) & (self.ci >= 1)
        assert np.all(self.degree[plane_far] == 4)
        assert np.all(self.degree[ray_far] == 2)
        if params.theory_regime:
            v_star = float(self.degree[0])
            assert self.mass[0] < h, "m_k at the darning point must be < 2^-k"
            assert v_star <= 56 * float(params.epsilon) * 2 ** params.k + 28

    # -- export ----------------------------------------------------------

    def manifest(self) -> dict:
        p = self.params
        return {
            "k": p.k,
            "epsilon": str(p.epsilon),
            "window_radius": str(p.window_radius),
            "boundary_mode": p.boundary_mode,
            "theory_regime": p.theory_regime,
            "warnings": list(self.warnings),
            "n_vertices": self.n_vertices,
            "n_edges": self.n_edges,
            "darning_degree": int(self.degree[0]),
            "darning_mass": float(self.mass[0]),
        }

    def write_edge_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("index,kind,i,j,neighbors\n")
            for t in range(self.n_vertices):
                nbrs = " ".join(str(int(u)) for u in self.neighbors(t))
                fh.write(f"{t},{_KIND_NAMES[int(self.kind[t])]},"
                         f"{int(self.ci[t])},{int(self.cj[t])},{nbrs}\n")


def _window_cells(params: LatticeParams) -> int:
    r = params.window_radius
    return (r.numerator * 2 ** params.k) // r.denominator


def build_lattice(params: LatticeParams) -> VdLattice:
    """Build the induced subgraph of the darned lattice inside the window."""
    k = params.k
    N = _window_cells(params)
    Nr = N  # ray capped at the same length as the plane half-width
    warnings = []
    if not params.theory_regime:
        warnings.append("outside-theory-regime")

    rng_i = np.arange(-N, N + 1, dtype=np.int64)
    gi, gj = np.meshgrid(rng_i, rng_i, indexing="ij")
    inside = _inside_closed_disc(gi, gj, params)
    plane_mask = ~inside
    if not plane_mask.any():
        raise DegenerateGeometryError("disc fills the entire window")
    if inside.sum() == 0:
        raise DegenerateGeometryError(
            "no lattice point falls inside the disc; darning would be isolated")

    n_plane = int(plane_mask.sum())
    first_plane = 1 + Nr
    vid = np.full(gi.shape, -1, dtype=np.int64)
    vid[plane_mask] = first_plane + np.arange(n_plane)

    n = first_plane + n_plane
    kind = np.empty(n, dtype=np.uint8)
    ci = np.zeros(n, dtype=np.int64)
    cj = np.zeros(n, dtype=np.int64)
    kind[0] = DARNING
    kind[1:first_plane] = RAY
    ci[1:first_plane] = np.arange(1, Nr + 1)
    kind[first_plane:] = PLANE
    ci[first_plane:] = gi[plane_mask]
    cj[first_plane:] = gj[plane_mask]

    p, q = params.epsilon.numerator, params.epsilon.denominator
    rhs = p * p * 4 ** k
    clear_axis = lambda c: c.astype(np.int64) ** 2 * (q * q) > rhs  # noqa: E731

    edges_u, edges_v = [], []

    # plane-plane, horizontal: (i, j) -- (i+1, j)
    a, b = plane_mask[:-1, :], plane_mask[1:, :]
    ii, jj = gi[:-1, :], gj[:-1, :]
    ok = a & b
    crosses = (ii <= 0) & (ii + 1 >= 0)
    ok &= ~crosses | clear_axis(jj)
    edges_u.append(vid[:-1, :][ok])
    edges_v.append(vid[1:, :][ok])

    # plane-plane, vertical: (i, j) -- (i, j+1)
    a, b = plane_mask[:, :-1], plane_mask[:, 1:]
    ii, jj = gi[:, :-1], gj[:, :-1]
    ok = a & b
    crosses = (jj <= 0) & (jj + 1 >= 0)
    ok &= ~crosses | clear_axis(ii)
    edges_u.append(vid[:, :-1][ok])
    edges_v.append(vid[:, 1:][ok])

    # plane-darning: a plane vertex with any full-lattice neighbor in the disc
    nb_inside = np.zeros(gi.shape, dtype=bool)
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        nb_inside |= _inside_closed_disc(gi + di, gj + dj, params)
    to_darning = plane_mask & nb_inside
    edges_u.append(np.zeros(int(to_darning.sum()), dtype=np.int64))
    edges_v.append(vid[to_darning])

    # ray chain including darning -- Ray(1)
    ray_ids = np.arange(0, Nr + 1, dtype=np.int64)
    edges_u.append(ray_ids[:-1])
    edges_v.append(ray_ids[1:])

    eu = np.concatenate(edges_u)
    ev = np.concatenate(edges_v)
    lo = np.minimum(eu, ev)
    hi = np.maximum(eu, ev)
    order = np.lexsort((hi, lo))
    eu, ev = lo[order], hi[order]

    ray_like = (kind[eu] != PLANE) & (kind[ev] != PLANE)
    edge_class = np.where(ray_like, 1, 0).astype(np.uint8)

    adj = sp.coo_matrix(
        (np.ones(2 * len(eu), dtype=np.int8),
         (np.concatenate([eu, ev]), np.concatenate([ev, eu]))),
        shape=(n, n)).tocsr()
    adj.sort_indices()
    degree = np.diff(adj.indptr).astype(np.int64)

    h = params.mesh
    vk = degree.astype(float)
    mass = np.where(kind == PLANE, h * h / 4 * vk,
                    np.where(kind == RAY, h / 2 * vk,
                             h / 2 + h * h / 4 * (vk - 1)))

    absorbing = np.zeros(n, dtype=bool)
    if params.boundary_mode == "absorbing":
        on_rim = np.zeros(n, dtype=bool)
        pl = kind == PLANE
        on_rim[pl] = np.maximum(np.abs(ci[pl]), np.abs(cj[pl])) == N
        on_rim[kind == RAY] = ci[kind == RAY] == Nr
        absorbing = on_rim

    lat = VdLattice(params=params, kind=kind, ci=ci, cj=cj,
                    indptr=adj.indptr.astype(np.int64),
                    indices=adj.indices.astype(np.int64),
                    degree=degree, mass=mass,
                    edge_u=eu, edge_v=ev, edge_class=edge_class,
                    absorbing=absorbing, warnings=warnings)
    return lat


def graph_distance(lat: VdLattice, x: Vertex, y: Vertex) -> float:
    """Graph metric d_k: 2^-k times the shortest edge count."""
    xi, yi = lat.index_of(x), lat.index_of(y)
    if xi == yi:
        return 0.0
    d = lat.distances_from(xi)[yi]
    if not np.isfinite(d):
        raise RuntimeError("vertices in different components; invariants broken")
    return float(d)


def geodesic_distance(p: SpacePoint, q: SpacePoint, epsilon: float) -> float:
    """Geodesic metric on the continuous space.

    Plane points use the chord distance capped by the route through the
    darning point; ray-plane pairs always route through the junction.
    """
    eps = float(epsilon)

    def norm(pt):
        if pt.kind == "darning":
            return 0.0
        if pt.kind == "ray":
            if pt.x < 0:
                raise ParameterError("ray coordinate must be >= 0")
            return pt.x
        r = float(np.hypot(pt.x, pt.y))
        if r < eps:
            raise ParameterError("plane point inside the open disc")
        return r - eps

    np_, nq = norm(p), norm(q)
    if p.kind == "plane" and q.kind == "plane":
        chord = float(np.hypot(p.x - q.x, p.y - q.y))
        return min(chord, np_ + nq)
    if p.kind == "ray" and q.kind == "ray":
        return abs(p.x - q.x)
    return np_ + nq


def embed(x: Vertex, params: LatticeParams) -> SpacePoint:
    """Embed a lattice vertex into the continuous state space."""
    h = params.mesh
    if x.kind == DARNING:
        return SpacePoint("darning")
    if x.kind == PLANE:
        return SpacePoint("plane", x.i * h, x.j * h)
    return SpacePoint("ray", x.i * h)


def write_manifest(lat: VdLattice, path) -> None:
    with open(path, "w") as fh:
        json.dump(lat.manifest(), fh, indent=2, sort_keys=True)
        fh.write("\n")
