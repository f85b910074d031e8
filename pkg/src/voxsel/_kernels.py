"""Hot inner loops of the Gibbs sweep.

Compiled with numba when available; the same functions run uncompiled
otherwise (identical numerics, just slow).  No randomness is generated
in here: callers pass pre-drawn uniforms/normals so that the RNG stream
is owned entirely by the Python layer and results do not depend on
whether compilation happened.

Layout notes: ``xt`` is the design matrix transposed, C-contiguous
(p, n), so each voxel's column is a contiguous row; ``col_ss`` caches
the squared norms of those rows; the lattice adjacency is CSR
(indptr, indices).  The residual vector always tracks
y - X @ (theta[z] * gamma) and is updated in place on every accepted
flip, label move, or atom redraw.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    NUMBA_ENABLED = True
except ImportError:  # pragma: no cover - exercised only without numba
    NUMBA_ENABLED = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(f):
            return f

        return wrap


@njit(cache=True)
def fisher_yates(order, u_order):
    p = order.shape[0]
    for i in range(p):
        order[i] = i
    for i in range(p - 1, 0, -1):
        k = int(u_order[i] * (i + 1))
        if k > i:
            k = i
        tmp = order[i]
        order[i] = order[k]
        order[k] = tmp


@njit(cache=True)
def neighbor_counts(gamma, indptr, indices, out):
    p = gamma.shape[0]
    for j in range(p):
        s = 0
        for k in range(indptr[j], indptr[j + 1]):
            s += gamma[indices[k]]
        out[j] = s


@njit(cache=True)
def gamma_sweep(
    gamma, z, theta, resid, xt, col_ss, indptr, indices, ncount,
    a, two_b, sigma2, u_order, logit_u, use_lik, order_buf,
):
    """One full pass of single-voxel indicator updates in random order.

    The posterior on-probability is sigmoid(prior_logit + log_F) where
    prior_logit = a + 2b * (#selected neighbors) and log_F compares the
    residual sum of squares with voxel j in versus out at its current
    coefficient.  The Bernoulli draw u < sigmoid(logit) is evaluated as
    logit > logit(u), with logit_u precomputed by the caller, so no
    transcendentals run in the loop.  `ncount` caches each voxel's
    selected-neighbor count and is maintained on every accepted flip.
    Returns -1, or the voxel index where a non-finite log-odds appeared.
    """
    p = gamma.shape[0]
    n = resid.shape[0]
    fisher_yates(order_buf, u_order)
    for t in range(p):
        j = order_buf[t]
        logit = a + two_b * ncount[j]
        bj = theta[z[j]]
        if use_lik and bj != 0.0 and col_ss[j] > 0.0:
            row = xt[j]
            dot = 0.0
            for i in range(n):
                dot += resid[i] * row[i]
            if gamma[j] == 1:
                # cached residual already includes voxel j
                logf = (2.0 * bj * dot + bj * bj * col_ss[j]) / (2.0 * sigma2)
            else:
                logf = (2.0 * bj * dot - bj * bj * col_ss[j]) / (2.0 * sigma2)
            logit += logf
        if not np.isfinite(logit):
            return j
        new = np.uint8(1) if logit > logit_u[t] else np.uint8(0)
        if new != gamma[j]:
            row = xt[j]
            if new == 1:
                for i in range(n):
                    resid[i] -= bj * row[i]
                for k in range(indptr[j], indptr[j + 1]):
                    ncount[indices[k]] += 1
            else:
                for i in range(n):
                    resid[i] += bj * row[i]
                for k in range(indptr[j], indptr[j + 1]):
                    ncount[indices[k]] -= 1
            gamma[j] = new
    return -1


@njit(cache=True)
def z_sweep(
    gamma, z, theta, resid, xt, col_ss, logw, cumw, sigma2, u, use_lik,
    logp_buf, counts_out,
):
    """Label updates for every voxel, sequential in index order.

    Unselected voxels (or likelihood off) draw straight from the stick
    weights by inverting their cumulative sum.  For a selected voxel,
    moving its label from the current atom to atom h shifts the
    residual by -(theta[h] - theta_old) * X_j, so each candidate's
    log-probability needs one dot product with the cached residual.
    Candidates more than 40 nats below the best carry weights
    (< 4.3e-18) beneath double resolution of the normalizer, which is
    always >= 1, and are dropped without exponentiating.  Fills
    counts_out with the new per-atom label counts over all voxels.
    Returns -1 or the failing voxel index.
    """
    p = gamma.shape[0]
    n = resid.shape[0]
    hmax = theta.shape[0]
    for h in range(hmax):
        counts_out[h] = 0
    for j in range(p):
        old = z[j]
        if gamma[j] == 0 or not use_lik:
            # smallest h with cumw[h] > u; the stick weights decay
            # geometrically, so a forward scan terminates early
            uj = u[j]
            new = hmax - 1
            for h in range(hmax):
                if cumw[h] > uj:
                    new = h
                    break
            if gamma[j] == 0:
                z[j] = new
                counts_out[new] += 1
                continue
        else:
            th_old = theta[old]
            row = xt[j]
            dot = 0.0
            for i in range(n):
                dot += resid[i] * row[i]
            ss = col_ss[j]
            best = -np.inf
            for h in range(hmax):
                d = theta[h] - th_old
                val = logw[h] - (d * d * ss - 2.0 * d * dot) / (2.0 * sigma2)
                logp_buf[h] = val
                if val > best:
                    best = val
            if not np.isfinite(best):
                return j
            tot = 0.0
            for h in range(hmax):
                v = logp_buf[h] - best
                e = np.exp(v) if v > -40.0 else 0.0
                logp_buf[h] = e
                tot += e
            target = u[j] * tot
            cum = 0.0
            new = hmax - 1
            for h in range(hmax):
                cum += logp_buf[h]
                if cum > target:
                    new = h
                    break
        if new != old:
            th_old = theta[old]
            d = theta[new] - th_old
            row = xt[j]
            for i in range(n):
                resid[i] -= d * row[i]
            z[j] = new
        counts_out[z[j]] += 1
    return -1


@njit(cache=True)
def weights_update(gen, counts, total, alpha, w, w_prime):
    """Stick-proportion Beta draws and stick breaking, in place.

    Consumes the generator exactly like a vectorized Beta call over the
    first H-1 components (element order equals fill order).
    """
    hmax = w.shape[0]
    greater = total
    remaining = 1.0
    for h in range(hmax - 1):
        greater -= counts[h]
        wp = gen.beta(1.0 + counts[h], alpha + greater)
        w_prime[h] = wp
        w[h] = wp * remaining
        remaining *= 1.0 - wp
    w_prime[hmax - 1] = 1.0
    w[hmax - 1] = remaining


@njit(cache=True)
def beta_cluster_sweep(
    gamma, z, theta, resid, xt, sigma2, v2, eps, use_lik, jacobi, xh, acc,
):
    """Redraw every cluster atom from its conjugate normal conditional.

    Cluster h regresses the partial residual (residual plus cluster h's
    own contribution) on the summed column X^h of its selected members:
    S = |X^h|^2 / sigma2 + 1/v2, mu = <partial residual, X^h> / sigma2 / S.
    Empty clusters (or likelihood off) draw from the N(0, v2) base
    measure.  Sequential by default (exact Gibbs); `jacobi` computes all
    conditionals from the sweep-entry residual and applies the moves at
    the end (approximation, available behind a flag).
    """
    p = gamma.shape[0]
    n = resid.shape[0]
    hmax = theta.shape[0]
    counts = np.zeros(hmax, dtype=np.int64)
    for j in range(p):
        if gamma[j] == 1:
            counts[z[j]] += 1
    offsets = np.zeros(hmax + 1, dtype=np.int64)
    for h in range(hmax):
        offsets[h + 1] = offsets[h] + counts[h]
    members = np.empty(offsets[hmax], dtype=np.int64)
    cursor = offsets[:hmax].copy()
    for j in range(p):
        if gamma[j] == 1:
            h = z[j]
            members[cursor[h]] = j
            cursor[h] += 1
    if jacobi:
        for i in range(n):
            acc[i] = 0.0
    sqrt_v2 = np.sqrt(v2)
    for h in range(hmax):
        m0 = offsets[h]
        m1 = offsets[h + 1]
        old = theta[h]
        if m0 == m1:
            theta[h] = eps[h] * sqrt_v2
            continue
        for i in range(n):
            xh[i] = 0.0
        for m in range(m0, m1):
            row = xt[members[m]]
            for i in range(n):
                xh[i] += row[i]
        if use_lik:
            ss = 0.0
            dot = 0.0
            for i in range(n):
                ss += xh[i] * xh[i]
                dot += resid[i] * xh[i]
            s_h = ss / sigma2 + 1.0 / v2
            mu_h = (dot + old * ss) / sigma2 / s_h
            new = mu_h + eps[h] / np.sqrt(s_h)
        else:
            new = eps[h] * sqrt_v2
        delta = new - old
        if jacobi:
            for i in range(n):
                acc[i] += delta * xh[i]
        else:
            for i in range(n):
                resid[i] -= delta * xh[i]
        theta[h] = new
    if jacobi:
        for i in range(n):
            resid[i] -= acc[i]
    return -1
