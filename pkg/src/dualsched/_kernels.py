"""Jitted numerical kernels.

Everything in here is deliberately free of Python objects so numba can
compile it once (cache=True) and the per-call overhead stays in the
microsecond range.  The public modules wrap these with argument checking
and friendlier return types.
"""

import numpy as np
from numba import njit

# Return codes for fw_quadratic.
FW_GAP_OK = 0        # duality-gap tolerance met
FW_TARGET_OK = 1     # objective-value target met (least-squares mode)
FW_TARGET_UNREACHABLE = 2  # certified lower bound above the target
FW_CAP = 3           # iteration cap hit

_REFRESH_EVERY = 1024  # recompute the gradient from scratch now and then


@njit(cache=True)
def fw_quadratic(P, q, gap_tol, phi_target, max_iter, u0=None):
    """Minimize u'Pu + q'u over the standard simplex by Frank-Wolfe.

    Away steps are included so the method converges linearly wherever the
    optimum sits (plain FW zigzags sublinearly at interior optima).  The
    linear-minimization oracle is over the simplex vertices with ties
    broken toward the lowest index, line search is exact (the objective
    is quadratic), and the certificate is the standard FW duality gap
    max_j <-grad, v_j - u> evaluated at the returned point.

    Starts from the first vertex unless a warm-start point u0 is given.
    Returns (u, phi, gap, iterations, code) where phi = u'Pu + q'u for
    the returned u and code is one of the FW_* constants above.
    """
    V = q.shape[0]
    u = np.zeros(V)
    if u0 is None:
        u[0] = 1.0
    else:
        u[:] = u0
    grad = 2.0 * np.dot(P, u) + q

    best_gap = np.inf
    best_u = u.copy()
    best_phi = np.dot(u, np.dot(P, u)) + np.dot(q, u)
    code = FW_CAP

    it = 0
    while True:
        # LMO and away candidate in one pass.
        j_fw = 0
        gmin = grad[0]
        j_aw = -1
        gmax = -np.inf
        gdotu = 0.0
        qdotu = 0.0
        for l in range(V):
            g = grad[l]
            if g < gmin:
                gmin = g
                j_fw = l
            if u[l] > 0.0 and g > gmax:
                gmax = g
                j_aw = l
            gdotu += g * u[l]
            qdotu += q[l] * u[l]
        gap = gdotu - gmin
        uPu = 0.5 * (gdotu - qdotu)
        phi = uPu + qdotu

        if gap < best_gap:
            best_gap = gap
            best_phi = phi
            best_u[:] = u

        if gap <= gap_tol:
            code = FW_GAP_OK
            break
        if phi <= phi_target:
            best_gap = gap
            best_phi = phi
            best_u[:] = u
            code = FW_TARGET_OK
            break
        if phi - gap > phi_target and phi_target > -np.inf:
            # phi - gap lower-bounds the optimum, so the target is
            # certifiably out of reach.
            code = FW_TARGET_UNREACHABLE
            break
        if it >= max_iter:
            code = FW_CAP
            break

        gap_aw = gmax - gdotu
        away = gap_aw > gap and j_aw >= 0 and u[j_aw] < 1.0
        if away:
            jd = j_aw
            gdir = gap_aw
            gamma_max = u[jd] / (1.0 - u[jd])
        else:
            jd = j_fw
            gdir = gap
            gamma_max = 1.0

        # d = +-(v_jd - u); d'Pd is the same for both signs.
        Pju = 0.0
        for l in range(V):
            Pju += P[jd, l] * u[l]
        dPd = P[jd, jd] - 2.0 * Pju + uPu

        gamma = gamma_max
        if dPd > 0.0:
            g_star = gdir / (2.0 * dPd)
            if g_star < gamma:
                gamma = g_star
        if gamma <= 0.0:
            # Numerically stuck; the best certificate so far stands.
            code = FW_CAP
            break

        if away:
            for l in range(V):
                u[l] = (1.0 + gamma) * u[l]
            u[jd] -= gamma
            if gamma >= gamma_max:
                u[jd] = 0.0  # drop step, keep the support exact
            for l in range(V):
                grad[l] += gamma * ((grad[l] - q[l]) - 2.0 * P[l, jd])
        else:
            for l in range(V):
                u[l] = (1.0 - gamma) * u[l]
            u[jd] += gamma
            for l in range(V):
                grad[l] += gamma * (2.0 * P[l, jd] - (grad[l] - q[l]))

        it += 1
        if it % _REFRESH_EVERY == 0:
            # Undo accumulated float drift in the incremental gradient.
            for l in range(V):
                g = q[l]
                for m in range(V):
                    g += 2.0 * P[l, m] * u[m]
                grad[l] = g

    return best_u, best_phi, best_gap, it, code


@njit(cache=True)
def largest_component(w):
    """Index of the largest entry of w, lowest index on ties."""
    j = 0
    m = w[0]
    for l in range(1, w.shape[0]):
        if w[l] > m:
            m = w[l]
            j = l
    return j


@njit(cache=True)
def myopic_run(U, s0):
    """Replay the myopic rule over the rows of U starting from s0.

    Returns (indices, s_final, min_seen, max_seen, max_norm2) where the
    min/max are over every intermediate running sum and max_norm2 is the
    largest ||s_k||_2 observed.
    """
    steps, V = U.shape
    s = s0.copy()
    idx = np.empty(steps, dtype=np.int64)
    min_seen = np.inf
    max_seen = -np.inf
    max_n2 = 0.0
    for k in range(steps):
        for l in range(V):
            s[l] += U[k, l]
        j = largest_component(s)
        s[j] -= 1.0
        idx[k] = j
        n2 = 0.0
        for l in range(V):
            v = s[l]
            if v < min_seen:
                min_seen = v
            if v > max_seen:
                max_seen = v
            n2 += v * v
        n2 = np.sqrt(n2)
        if n2 > max_n2:
            max_n2 = n2
    return idx, s, min_seen, max_seen, max_n2


@njit(cache=True)
def myopic_run_random(V, steps, seed):
    """Myopic rule over `steps` uniform random simplex points.

    Draws are generated in place (exponentials normalized) so millions of
    steps never materialize a steps-by-V array.  Returns
    (s_final, min_seen, max_seen, max_norm2).
    """
    np.random.seed(seed)
    s = np.zeros(V)
    w = np.empty(V)
    min_seen = np.inf
    max_seen = -np.inf
    max_n2 = 0.0
    for _ in range(steps):
        tot = 0.0
        for l in range(V):
            w[l] = np.random.exponential(1.0)
            tot += w[l]
        for l in range(V):
            s[l] += w[l] / tot
        j = largest_component(s)
        s[j] -= 1.0
        n2 = 0.0
        for l in range(V):
            v = s[l]
            if v < min_seen:
                min_seen = v
            if v > max_seen:
                max_seen = v
            n2 += v * v
        n2 = np.sqrt(n2)
        if n2 > max_n2:
            max_n2 = n2
    return s, min_seen, max_seen, max_n2


@njit(cache=True)
def amortized_run_random(V, steps, tau, seed):
    """Amortized rule: update on the first slot of every tau-slot window.

    Between updates the previous action is repeated.  Returns
    (s_final, min_seen, max_seen, max_norm2) over the running sums.
    """
    np.random.seed(seed)
    s = np.zeros(V)
    w = np.empty(V)
    last = 0
    min_seen = np.inf
    max_seen = -np.inf
    max_n2 = 0.0
    for k in range(steps):
        tot = 0.0
        for l in range(V):
            w[l] = np.random.exponential(1.0)
            tot += w[l]
        for l in range(V):
            s[l] += w[l] / tot
        if k % tau == 0:
            last = largest_component(s)
        s[last] -= 1.0
        n2 = 0.0
        for l in range(V):
            v = s[l]
            if v < min_seen:
                min_seen = v
            if v > max_seen:
                max_seen = v
            n2 += v * v
        n2 = np.sqrt(n2)
        if n2 > max_n2:
            max_n2 = n2
    return s, min_seen, max_seen, max_n2


@njit(cache=True)
def block_greedy(r, count):
    """Pick `count` basis vectors greedily from the working vector r.

    Each pick decrements a largest component (ties to the lowest index),
    which is an inf-norm argmin in every reachable state.  r is modified
    in place; the pick order is returned.
    """
    idx = np.empty(count, dtype=np.int64)
    for i in range(count):
        j = largest_component(r)
        r[j] -= 1.0
        idx[i] = j
    return idx


@njit(cache=True)
def block_chain_random(V, T, n_blocks, seed):
    """Chain block selections over random simplex inputs.

    Each block holds T*V uniform simplex draws; the carried residual seeds
    the next block.  Returns (carried_final, max_carried_inf,
    max_carried_sum_abs, max_intra_inf) where max_intra_inf is the largest
    ||sum_{i<=j} (u_i - e_i)||_inf seen at any position inside any block
    (e's in greedy pick order, offset by the incoming carried residual).
    """
    np.random.seed(seed)
    L = T * V
    carried = np.zeros(V)
    U = np.empty((L, V))
    r = np.empty(V)
    div = np.empty(V)
    max_c_inf = 0.0
    max_c_sum = 0.0
    max_intra = 0.0
    for _ in range(n_blocks):
        for i in range(L):
            tot = 0.0
            for l in range(V):
                U[i, l] = np.random.exponential(1.0)
                tot += U[i, l]
            for l in range(V):
                U[i, l] /= tot
        for l in range(V):
            r[l] = carried[l]
            for i in range(L):
                r[l] += U[i, l]
        idx = block_greedy(r, L)
        # r now ends at the new carried residual.
        for l in range(V):
            div[l] = carried[l]
        for i in range(L):
            for l in range(V):
                div[l] += U[i, l]
            div[idx[i]] -= 1.0
            for l in range(V):
                a = abs(div[l])
                if a > max_intra:
                    max_intra = a
        c_sum = 0.0
        for l in range(V):
            carried[l] = r[l]
            a = abs(r[l])
            c_sum += a
            if a > max_c_inf:
                max_c_inf = a
        if c_sum > max_c_sum:
            max_c_sum = c_sum
    return carried, max_c_inf, max_c_sum, max_intra
