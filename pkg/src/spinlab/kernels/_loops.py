"""Inner loops. Compiled with numba unless SPINLAB_DISABLE_NUMBA is set.

Every routine takes its randomness as pre-drawn uniforms in [0, 1) so the two
backends produce identical output. Site updates invert the conditional CDF
along the per-vertex spin order (``orders[v]``, lowest spin first); feeding
the same uniform to two copies therefore gives the monotone coupling.
"""

import math

import numpy as np

from .._accel import jit


@jit
def site_weights(spins, v, nbr_ptr, nbr_idx, U, hard, h, allowed, w):
    """Fill ``w`` with unnormalised conditional weights at ``v``; return their sum."""
    q = U.shape[0]
    best = -np.inf
    for s in range(q):
        ok = allowed[v, s]
        lw = h[v, s]
        for j in range(nbr_ptr[v], nbr_ptr[v + 1]):
            t = spins[nbr_idx[j]]
            if hard[s, t]:
                ok = False
            lw += U[s, t]
        if ok:
            w[s] = lw
            if lw > best:
                best = lw
        else:
            w[s] = -np.inf
    total = 0.0
    for s in range(q):
        if w[s] == -np.inf:
            w[s] = 0.0
        else:
            w[s] = math.exp(w[s] - best)
            total += w[s]
    return total


@jit
def pick(w, total, order_row, u):
    """Inverse-CDF draw from weights ``w`` along ``order_row``; -1 if all weights vanish."""
    target = u * total
    acc = 0.0
    last = -1
    for r in range(order_row.shape[0]):
        s = order_row[r]
        if w[s] > 0.0:
            acc += w[s]
            last = s
            if target < acc:
                return s
    return last


@jit
def site_updates(spins, verts, uniforms, nbr_ptr, nbr_idx, U, hard, h, allowed, orders):
    """Sequential heat-bath updates at ``verts[i]`` using ``uniforms[i]``."""
    w = np.empty(U.shape[0])
    for i in range(verts.shape[0]):
        v = verts[i]
        total = site_weights(spins, v, nbr_ptr, nbr_idx, U, hard, h, allowed, w)
        s = pick(w, total, orders[v], uniforms[i])
        if s < 0:
            return False
        spins[v] = s
    return True


@jit
def scan_sweeps(spins, order, uniforms, nbr_ptr, nbr_idx, U, hard, h, allowed, orders):
    """Apply ``uniforms.shape[0]`` sweeps of the scan ``order`` in place."""
    w = np.empty(U.shape[0])
    for t in range(uniforms.shape[0]):
        for i in range(order.shape[0]):
            v = order[i]
            total = site_weights(spins, v, nbr_ptr, nbr_idx, U, hard, h, allowed, w)
            s = pick(w, total, orders[v], uniforms[t, i])
            if s < 0:
                return False
            spins[v] = s
    return True


@jit
def _hamming(X, Y):
    c = 0
    for v in range(X.shape[0]):
        if X[v] != Y[v]:
            c += 1
    return c


@jit
def _dominates(X, Y, rank):
    for v in range(X.shape[0]):
        if rank[v, X[v]] < rank[v, Y[v]]:
            return False
    return True


@jit
def coupled_scan_sweeps(X, Y, order, uniforms, hamming, nbr_ptr, nbr_idx, U, hard, h, allowed,
                        orders, rank, check_order, stop_at_coalescence):
    """Run coupled sweeps sharing one uniform per site update.

    ``hamming[t]`` receives the disagreement count after sweep ``t``.
    Returns ``(sweeps_done, coalesced_at, order_violation)`` where
    ``coalesced_at`` is the 1-based sweep of first coalescence or -1.
    """
    w = np.empty(U.shape[0])
    coalesced_at = -1
    done = 0
    for t in range(uniforms.shape[0]):
        for i in range(order.shape[0]):
            v = order[i]
            u = uniforms[t, i]
            total = site_weights(X, v, nbr_ptr, nbr_idx, U, hard, h, allowed, w)
            X[v] = pick(w, total, orders[v], u)
            total = site_weights(Y, v, nbr_ptr, nbr_idx, U, hard, h, allowed, w)
            Y[v] = pick(w, total, orders[v], u)
        done = t + 1
        hamming[t] = _hamming(X, Y)
        if check_order and not _dominates(X, Y, rank):
            return done, coalesced_at, True
        if hamming[t] == 0 and coalesced_at < 0:
            coalesced_at = t + 1
            if stop_at_coalescence:
                return done, coalesced_at, False
    return done, coalesced_at, False


@jit
def glauber_steps(spins, uniforms, nbr_ptr, nbr_idx, U, hard, h, allowed, orders):
    """Random-site heat-bath steps; ``uniforms[t] = (site draw, spin draw)``."""
    n = spins.shape[0]
    w = np.empty(U.shape[0])
    for t in range(uniforms.shape[0]):
        v = min(int(uniforms[t, 0] * n), n - 1)
        total = site_weights(spins, v, nbr_ptr, nbr_idx, U, hard, h, allowed, w)
        s = pick(w, total, orders[v], uniforms[t, 1])
        if s < 0:
            return False
        spins[v] = s
    return True


@jit
def coupled_glauber_steps(X, Y, uniforms, hamming, nbr_ptr, nbr_idx, U, hard, h, allowed, orders,
                          stop_at_coalescence):
    """Glauber grand coupling: shared site and shared spin uniform.

    Returns ``(steps_done, coalesced_at)`` with ``coalesced_at`` 1-based or -1.
    """
    n = X.shape[0]
    w = np.empty(U.shape[0])
    coalesced_at = -1
    done = 0
    d = _hamming(X, Y)
    for t in range(uniforms.shape[0]):
        v = min(int(uniforms[t, 0] * n), n - 1)
        before = X[v] != Y[v]
        total = site_weights(X, v, nbr_ptr, nbr_idx, U, hard, h, allowed, w)
        X[v] = pick(w, total, orders[v], uniforms[t, 1])
        total = site_weights(Y, v, nbr_ptr, nbr_idx, U, hard, h, allowed, w)
        Y[v] = pick(w, total, orders[v], uniforms[t, 1])
        after = X[v] != Y[v]
        d += int(after) - int(before)
        hamming[t] = d
        done = t + 1
        if d == 0 and coalesced_at < 0:
            coalesced_at = t + 1
            if stop_at_coalescence:
                break
    return done, coalesced_at


@jit
def _find(parent, a):
    root = a
    while parent[root] != root:
        root = parent[root]
    while parent[a] != root:
        nxt = parent[a]
        parent[a] = root
        a = nxt
    return root


@jit
def _union(parent, a, b):
    ra = _find(parent, a)
    rb = _find(parent, b)
    if ra < rb:
        parent[rb] = ra
    elif rb < ra:
        parent[ra] = rb


@jit
def sw_update(spins, edges, p, u_edges, u_colors, q, mode, tile_mask, parent, degree):
    """One Swendsen-Wang-family update in place.

    An edge is kept when monochromatic and ``u_edges[e] < p``. ``mode`` 0
    recolours every component with ``u_colors[root]`` (root = smallest index
    in the component), mode 1 recolours isolated vertices, mode 2 isolated
    vertices with ``tile_mask`` set.
    """
    n = spins.shape[0]
    for v in range(n):
        parent[v] = v
        degree[v] = 0
    for e in range(edges.shape[0]):
        a = edges[e, 0]
        b = edges[e, 1]
        if spins[a] == spins[b] and u_edges[e] < p:
            degree[a] += 1
            degree[b] += 1
            _union(parent, a, b)
    for v in range(n):
        if mode == 0:
            r = _find(parent, v)
        elif degree[v] == 0 and (mode == 1 or tile_mask[v]):
            r = v
        else:
            continue
        c = int(u_colors[r] * q)
        if c >= q:
            c = q - 1
        spins[v] = c


@jit
def subset_components(n, edges):
    """For every edge subset (bitmask over ``edges``) return the number of
    connected components of ``(V, A)`` and the bitmask of isolated vertices."""
    k = edges.shape[0]
    total = 1 << k
    ncomp = np.empty(total, dtype=np.int64)
    iso = np.empty(total, dtype=np.int64)
    parent = np.empty(n, dtype=np.int64)
    degree = np.empty(n, dtype=np.int64)
    for mask in range(total):
        for v in range(n):
            parent[v] = v
            degree[v] = 0
        for e in range(k):
            if (mask >> e) & 1:
                a = edges[e, 0]
                b = edges[e, 1]
                degree[a] += 1
                degree[b] += 1
                _union(parent, a, b)
        c = 0
        bits = 0
        for v in range(n):
            if parent[v] == v:
                c += 1
            if degree[v] == 0:
                bits |= 1 << v
        ncomp[mask] = c
        iso[mask] = bits
    return ncomp, iso


@jit
def _slice_state(dist, verts, q, s, orders, uniforms, offset, w):
    """Draw a slice state from ``dist`` site by site (chain rule, inverse CDF)."""
    M = dist.shape[0]
    chosen = 0
    qj = 1
    for j in range(s):
        for c in range(q):
            w[c] = 0.0
        for a in range(M):
            if a % qj == chosen:
                w[(a // qj) % q] += dist[a]
        total = 0.0
        for c in range(q):
            total += w[c]
        spin = pick(w, total, orders[verts[j]], uniforms[offset + j])
        if spin < 0:
            return -1
        chosen += spin * qj
        qj *= q
    return chosen


@jit
def sample_component(spins, slices, intra, tmat, region_mask, uniforms,
                     nbr_ptr, nbr_idx, U, hard, h, allowed, orders):
    """Exact heat-bath resample of one connected component of a region.

    The component is cut into slices (rows of ``slices``); a slice state is a
    base-q number with digit ``j`` the spin of ``slices[i, j]``. Consecutive
    slices interact only through ``tmat`` (same position ``j`` adjacent),
    ``intra`` lists adjacent position pairs inside a slice. Forward filtering
    followed by backward sampling; within a slice sites are drawn one at a
    time from ``uniforms`` (``slices.size`` of them, last slice first).
    Returns False if the conditional measure is degenerate.
    """
    S = slices.shape[0]
    s = slices.shape[1]
    q = U.shape[0]
    M = 1
    for _ in range(s):
        M *= q
    alpha = np.zeros((S, M))
    logp = np.empty(M)
    digits = np.empty(s, dtype=np.int64)
    for i in range(S):
        best = -np.inf
        for a in range(M):
            x = a
            for j in range(s):
                digits[j] = x % q
                x //= q
            lw = 0.0
            ok = True
            for j in range(s):
                v = slices[i, j]
                sj = digits[j]
                if not allowed[v, sj]:
                    ok = False
                lw += h[v, sj]
                for t in range(nbr_ptr[v], nbr_ptr[v + 1]):
                    nb = nbr_idx[t]
                    if not region_mask[nb]:
                        sp = spins[nb]
                        if hard[sj, sp]:
                            ok = False
                        lw += U[sj, sp]
            for e in range(intra.shape[0]):
                a1 = digits[intra[e, 0]]
                a2 = digits[intra[e, 1]]
                if hard[a1, a2]:
                    ok = False
                lw += U[a1, a2]
            if ok:
                logp[a] = lw
                if lw > best:
                    best = lw
            else:
                logp[a] = -np.inf
        if best == -np.inf:
            return False
        norm = 0.0
        for b in range(M):
            node = 0.0 if logp[b] == -np.inf else math.exp(logp[b] - best)
            if i == 0:
                val = node
            elif node == 0.0:
                val = 0.0
            else:
                acc = 0.0
                for a in range(M):
                    acc += alpha[i - 1, a] * tmat[a, b]
                val = node * acc
            alpha[i, b] = val
            norm += val
        if norm <= 0.0:
            return False
        for b in range(M):
            alpha[i, b] /= norm

    dist = np.empty(M)
    w = np.empty(q)
    nxt = -1
    offset = 0
    for i in range(S - 1, -1, -1):
        if i == S - 1:
            for a in range(M):
                dist[a] = alpha[i, a]
        else:
            for a in range(M):
                dist[a] = alpha[i, a] * tmat[a, nxt]
        state = _slice_state(dist, slices[i], q, s, orders, uniforms, offset, w)
        if state < 0:
            return False
        x = state
        for j in range(s):
            spins[slices[i, j]] = x % q
            x //= q
        nxt = state
        offset += s
    return True
