"""Numerical certification of the inequality chain.

Isoperimetric ratios on the two weighted subgraphs (plane part with the
darning point, ray part with the darning point), Nash-type implied
constants, the exponential-weight energy bound used by the Davies
off-diagonal method, and empirical constants for the two-regime heat
kernel upper bound.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .kernel import JumpKernel, transition_matrix_multi
from .lattice import DARNING, PLANE, RAY, VdLattice, Vertex

PLANE_PART = "plane"
RAY_PART = "ray"


@dataclass
class WeightedPart:
    """One of the two weighted subgraphs: uniform edge weight, vertex
    measure nu(x) = part-degree(x) * weight."""

    name: str
    weight: float
    member: np.ndarray        # bool over lattice vertices
    part_degree: np.ndarray   # degree within the part
    nu: np.ndarray
    adjacency: list           # neighbor lists within the part
    alpha: int                # isoperimetric dimension parameter


def weighted_part(lat: VdLattice, name: str) -> WeightedPart:
    h = lat.params.mesh
    if name == PLANE_PART:
        member = lat.kind != RAY
        cls, weight, alpha = 0, h * h / 4.0, 2
    elif name == RAY_PART:
        member = lat.kind != PLANE
        cls, weight, alpha = 1, h / 2.0, 1
    else:
        raise ParameterError(f"unknown part {name!r}")
    n = lat.n_vertices
    adjacency = [[] for _ in range(n)]
    deg = np.zeros(n, dtype=np.int64)
    for u, v, c in zip(lat.edge_u, lat.edge_v, lat.edge_class):
        if c == cls:
            adjacency[u].append(int(v))
            adjacency[v].append(int(u))
            deg[u] += 1
            deg[v] += 1
    return WeightedPart(name=name, weight=weight, member=member,
                        part_degree=deg, nu=deg * weight,
                        adjacency=adjacency, alpha=alpha)


@dataclass
class IsoReport:
    vertices: list
    boundary_weight: float
    mass: float
    normalized_constant: float
    part: str
    warnings: list = field(default_factory=list)


def _iso_normalize(lat: VdLattice, part: WeightedPart,
                   boundary: float, mass: float) -> float:
    h = lat.params.mesh
    if part.alpha == 2:
        return boundary / (h * math.sqrt(mass))
    return boundary / h


def iso_ratio(lat: VdLattice, A, part: WeightedPart) -> IsoReport:
    """Boundary weight, mass and normalized isoperimetric ratio of A."""
    idx = [a if isinstance(a, (int, np.integer)) else lat.index_of(a) for a in A]
    if not idx:
        raise ParameterError("A must be nonempty")
    aset = set(int(i) for i in idx)
    if not all(part.member[i] for i in aset):
        raise ParameterError("A is not contained in the chosen part")
    warns = []
    interior = lat.interior_mask(2)
    if not all(interior[i] for i in aset):
        warns.append("set-touches-window-margin")
    cut = 0
    for x in aset:
        for y in part.adjacency[x]:
            if y not in aset:
                cut += 1
    boundary = cut * part.weight
    mass = float(part.nu[list(aset)].sum())
    return IsoReport(vertices=sorted(aset), boundary_weight=boundary,
                     mass=mass,
                     normalized_constant=_iso_normalize(lat, part, boundary, mass),
                     part=part.name, warnings=warns)


def _connected_subsets(adjacency, allowed, max_size):
    """Every connected subset of size <= max_size exactly once.

    Root-anchored extension: a subset is produced from its minimal
    vertex; the extension set only ever receives exclusive neighbors of
    the newest member, which makes each subset appear exactly once.
    """
    allowed_ids = [v for v in range(len(adjacency)) if allowed[v]]
    for root in allowed_ids:
        stack = [([root], [y for y in adjacency[root] if allowed[y] and y > root])]
        while stack:
            sub, ext = stack.pop()
            yield sub
            if len(sub) == max_size:
                continue
            in_sub = set(sub)
            closed = in_sub.union(*(set(adjacency[v]) for v in sub))
            for i, w in enumerate(ext):
                new_ext = ext[i + 1:] + [
                    y for y in adjacency[w]
                    if allowed[y] and y > root and y not in closed]
                stack.append((sub + [w], new_ext))


@dataclass
class IsoScanResult:
    part: str
    min_constant: float
    witness: list
    n_enumerated: int
    n_random: int


def iso_scan(lat: VdLattice, part: WeightedPart, exhaustive_max_size: int,
             n_random: int, seed: int, max_random_size: int = 1000) -> IsoScanResult:
    """Minimum normalized ratio over all small connected subsets plus a
    seeded family of larger random connected subsets."""
    if exhaustive_max_size > 8:
        raise ParameterError("exhaustive enumeration is limited to size 8")
    allowed = part.member & lat.interior_mask(2)
    weight = part.weight
    nu = part.nu
    adjacency = part.adjacency
    pdeg = part.part_degree
    best = math.inf
    witness: list = []
    count = 0
    for sub in _connected_subsets(adjacency, allowed, exhaustive_max_size):
        count += 1
        aset = set(sub)
        internal = sum(1 for x in sub for y in adjacency[x] if y in aset) // 2
        boundary = (int(pdeg[sub].sum()) - 2 * internal) * weight
        mass = float(nu[sub].sum())
        c = _iso_normalize(lat, part, boundary, mass)
        if c < best:
            best, witness = c, sorted(aset)
    rng = np.random.default_rng(seed)
    pool = np.nonzero(allowed)[0]
    for _ in range(n_random):
        size = int(rng.integers(2, max_random_size + 1))
        start = int(pool[rng.integers(len(pool))])
        aset = {start}
        frontier = [y for y in adjacency[start] if allowed[y]]
        while len(aset) < size and frontier:
            pick = int(rng.integers(len(frontier)))
            v = frontier.pop(pick)
            if v in aset:
                continue
            aset.add(v)
            frontier.extend(y for y in adjacency[v] if allowed[y] and y not in aset)
        sub = list(aset)
        internal = sum(1 for x in sub for y in adjacency[x] if y in aset) // 2
        boundary = (int(pdeg[sub].sum()) - 2 * internal) * weight
        mass = float(nu[sub].sum())
        c = _iso_normalize(lat, part, boundary, mass)
        if c < best:
            best, witness = c, sorted(aset)
    return IsoScanResult(part=part.name, min_constant=best, witness=witness,
                         n_enumerated=count, n_random=n_random)


def iso_min_naive(lat: VdLattice, part: WeightedPart, max_size: int,
                  candidates=None) -> float:
    """Independent brute-force oracle: all subsets by combinations, with
    a direct connectivity check.  Only usable on tiny vertex pools."""
    allowed = part.member & lat.interior_mask(2)
    pool = [int(v) for v in np.nonzero(allowed)[0]]
    if candidates is not None:
        pool = [v for v in pool if v in set(candidates)]
    best = math.inf
    for size in range(1, max_size + 1):
        for combo in itertools.combinations(pool, size):
            aset = set(combo)
            seen = {combo[0]}
            queue = [combo[0]]
            while queue:
                x = queue.pop()
                for y in part.adjacency[x]:
                    if y in aset and y not in seen:
                        seen.add(y)
                        queue.append(y)
            if len(seen) != size:
                continue
            internal = sum(1 for x in combo for y in part.adjacency[x]
                           if y in aset) // 2
            boundary = (int(part.part_degree[list(combo)].sum())
                        - 2 * internal) * part.weight
            mass = float(part.nu[list(combo)].sum())
            best = min(best, _iso_normalize(lat, part, boundary, mass))
    return best


# -- Nash ----------------------------------------------------------------

@dataclass
class NashReport:
    plane_energy: float
    ray_energy: float
    plane_constant: float
    ray_constant: float
    combined_lhs: float
    combined_rhs: float
    combined_constant: float
    warnings: list = field(default_factory=list)


def nash_check(lat: VdLattice, f) -> NashReport:
    """Implied Nash constants of both weighted parts plus the combined
    two-part bound evaluated in the reference measure m_k."""
    f = np.asarray(f, dtype=float)
    if len(f) != lat.n_vertices:
        raise ParameterError("f must cover every vertex")
    if not f.any():
        raise ParameterError("f must not vanish identically")
    warns = []
    support = np.nonzero(f)[0]
    if not lat.interior_mask(2)[support].all():
        warns.append("support-touches-window-margin")
    h = lat.params.mesh
    df2 = (f[lat.edge_u] - f[lat.edge_v]) ** 2
    plane_edges = lat.edge_class == 0
    e_plane = float(df2[plane_edges].sum()) * (h * h / 4.0)
    e_ray = float(df2[~plane_edges].sum()) * (h / 2.0)
    p1 = weighted_part(lat, PLANE_PART)
    p2 = weighted_part(lat, RAY_PART)
    absf = np.abs(f)
    l1_p = float((absf * p1.nu).sum())
    l2sq_p = float((f * f * p1.nu).sum())
    l1_r = float((absf * p2.nu).sum())
    l2sq_r = float((f * f * p2.nu).sum())
    # alpha=2: ||f||_2^4 <= C * E * ||f||_1^2; alpha=1: ||f||_2^6 <= C * E * ||f||_1^4
    c_plane = e_plane * l1_p ** 2 / l2sq_p ** 2 if l2sq_p > 0 else math.inf
    c_ray = e_ray * l1_r ** 4 / l2sq_r ** 3 if l2sq_r > 0 else math.inf
    l1_m = float((absf * lat.mass).sum())
    lhs = float((f * f * lat.mass).sum())
    rhs = (e_plane * l1_m ** 2) ** 0.5 + (e_ray * l1_m ** 4) ** (1.0 / 3.0)
    return NashReport(plane_energy=e_plane, ray_energy=e_ray,
                      plane_constant=c_plane, ray_constant=c_ray,
                      combined_lhs=lhs, combined_rhs=rhs,
                      combined_constant=lhs / rhs if rhs > 0 else math.inf,
                      warnings=warns)


# -- Davies weights ------------------------------------------------------

@dataclass
class DaviesReport:
    alpha: float
    cap: float
    max_sqrt_gamma: float
    bound: float
    max_plane: float
    max_ray: float
    darning_value: float

    @property
    def ok(self) -> bool:
        return self.max_sqrt_gamma <= self.bound


def davies_weight_check(lat: VdLattice, kern: JumpKernel, alpha: float,
                        cap: float) -> DaviesReport:
    """Energy-measure density of the capped-distance exponential weight.

    psi = alpha * (d_k(., darning) ^ cap); the report carries
    sup_x sqrt(Gamma(psi)({x}) / m_k(x)) with
    Gamma({x})/m_k(x) = (lambda_k/2) * sum_y j_k(x,y) (e^{psi(y)-psi(x)} - 1)^2,
    which must stay below sqrt(2)*alpha for alpha <= 2^{k-1}.
    """
    k = lat.params.k
    if not 0 < alpha <= 2 ** (k - 1):
        raise ParameterError("alpha must lie in (0, 2^(k-1)]")
    if cap <= 0:
        raise ParameterError("cap must be positive")
    d = lat.dist_to_darning()
    psi = alpha * np.minimum(d, cap)
    rows = np.repeat(np.arange(lat.n_vertices), lat.degree)
    dpsi = psi[lat.indices] - psi[rows]
    contrib = np.expm1(dpsi) ** 2 * kern.probs
    per_vertex = np.bincount(rows, weights=contrib, minlength=lat.n_vertices)
    gamma = 0.5 * kern.speed * per_vertex
    root = np.sqrt(gamma)
    return DaviesReport(
        alpha=alpha, cap=cap,
        max_sqrt_gamma=float(root.max()),
        bound=math.sqrt(2.0) * alpha,
        max_plane=float(root[lat.kind == PLANE].max()),
        max_ray=float(root[lat.kind == RAY].max()),
        darning_value=float(root[0]))


# -- heat-kernel bound ---------------------------------------------------

@dataclass
class RegimeReport:
    regime: str
    t: float
    max_ratio: float
    witness: tuple
    cells_checked: int
    cells_skipped: int


def default_hk_sources(lat: VdLattice) -> list[int]:
    """A representative spread of source vertices: the darning point,
    near/mid ray points, and plane vertices at several radii."""
    sources = [0]
    nr = lat.n_ray
    for n in {1, max(1, nr // 4), max(1, nr // 2)}:
        sources.append(n)
    _, _, rho = lat.embed_all()
    plane = np.nonzero(lat.kind == PLANE)[0]
    order = plane[np.argsort(rho[plane], kind="stable")]
    for q in (0.0, 0.25, 0.5, 0.9):
        sources.append(int(order[int(q * (len(order) - 1))]))
    out = []
    for s in sources:
        if s not in out:
            out.append(s)
    return out


def hk_bound_constant(lat: VdLattice, kern: JumpKernel, times,
                      tol: float = 1e-10, sources=None,
                      floor: float = 1e-12) -> list[RegimeReport]:
    """Empirical minimal constants for the two-regime density bound.

    Near regime (d_k <= 16*2^k*t): density against
    (1/t v 1/sqrt(t)) * exp(-d_k^2/(32 t)); far regime against
    (1/t v 1/sqrt(t)) * exp(-2^k d_k / 2).  Cells with density below
    the floor are skipped and counted.
    """
    if sources is None:
        sources = default_hk_sources(lat)
    times = list(times)
    dists = {s: lat.distances_from(s) for s in sources}
    blocks = transition_matrix_multi(lat, kern, sources, times, tol)
    k = lat.params.k
    reports = []
    for t in times:
        pref = max(1.0 / t, 1.0 / math.sqrt(t))
        per_regime = {"near": [0.0, None, 0, 0], "far": [0.0, None, 0, 0]}
        for c, s in enumerate(sources):
            dens = blocks[t][:, c] / lat.mass
            d = dists[s]
            near = d <= 16.0 * 2 ** k * t
            for name, mask in (("near", near), ("far", ~near)):
                slot = per_regime[name]
                cells = np.nonzero(mask)[0]
                if not len(cells):
                    continue
                dn = dens[cells]
                ok = dn > floor
                slot[3] += int((~ok).sum())
                cells, dn = cells[ok], dn[ok]
                if not len(cells):
                    continue
                if name == "near":
                    bound = pref * np.exp(-d[cells] ** 2 / (32.0 * t))
                else:
                    bound = pref * np.exp(-(2 ** k) * d[cells] / 2.0)
                ratio = dn / bound
                slot[2] += len(cells)
                i = int(np.argmax(ratio))
                if ratio[i] > slot[0]:
                    slot[0] = float(ratio[i])
                    slot[1] = (s, int(cells[i]))
        for name in ("near", "far"):
            mx, wit, checked, skipped = per_regime[name]
            reports.append(RegimeReport(regime=name, t=t, max_ratio=mx,
                                        witness=wit, cells_checked=checked,
                                        cells_skipped=skipped))
    return reports
