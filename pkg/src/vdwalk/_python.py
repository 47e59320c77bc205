"""Pure numpy implementation of the hot loops.

Drop-in replacement for the compiled module `vdwalk._native`: same
signatures, same bit-for-bit results.  The walk advances all paths of a
batch one event at a time with vectorized indexing; the pairwise metric
scan broadcasts over the (deduplicated) visited set.
"""

from __future__ import annotations

import numpy as np


def fill_states(indptr, indices, degree, darning_cum, absorbing, x0, u, n_events):
    """Advance a batch of walks through their uniform draws.

    u has shape (paths, block); path p consumes u[p, s] at event s for
    s < n_events[p].  Vertex 0 (the darning point) uses the cumulative
    row darning_cum; every other vertex picks uniformly among its
    neighbors.  Absorbing vertices freeze the path.  Returns an
    (paths, max_events) int64 array of post-event states; entries at
    columns >= n_events[p] repeat the last state and carry no meaning.
    """
    absorbing = np.asarray(absorbing).astype(bool)
    n_paths = u.shape[0]
    max_ev = int(n_events.max()) if n_paths else 0
    out = np.empty((n_paths, max_ev), dtype=np.int64)
    cur = np.full(n_paths, x0, dtype=np.int64)
    darn0 = indptr[0]
    n_darn = len(darning_cum)
    for step in range(max_ev):
        uu = u[:, step]
        act = (step < n_events) & ~absorbing[cur]
        nxt = cur.copy()
        nd = act & (cur != 0)
        if nd.any():
            c = cur[nd]
            d = degree[c]
            pick = np.minimum((uu[nd] * d).astype(np.int64), d - 1)
            nxt[nd] = indices[indptr[c] + pick]
        da = act & (cur == 0)
        if da.any():
            pick = np.searchsorted(darning_cum, uu[da], side="right")
            pick = np.minimum(pick, n_darn - 1)
            nxt[da] = indices[darn0 + pick]
        cur = nxt
        out[:, step] = cur
    return out


def pairwise_rho_max(px, py, rho_norm, kind, idx):
    """Maximal geodesic distance over all pairs drawn from idx.

    kind codes: 0 darning, 1 plane, 2 ray.  Plane pairs take the chord
    capped by the route through the darning point; ray pairs the
    coordinate difference; mixed pairs always route through the darning
    point.
    """
    if len(idx) < 2:
        return 0.0
    x, y = px[idx], py[idx]
    r, kd = rho_norm[idx], kind[idx]
    through = r[:, None] + r[None, :]
    chord = np.hypot(x[:, None] - x[None, :], y[:, None] - y[None, :])
    d = np.where((kd[:, None] == 1) & (kd[None, :] == 1),
                 np.minimum(chord, through), through)
    both_ray = (kd[:, None] == 2) & (kd[None, :] == 2)
    d = np.where(both_ray, np.abs(r[:, None] - r[None, :]), d)
    return float(d.max())
