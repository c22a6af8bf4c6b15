"""Message-passing kernels for score inference.

Numba-compiled inner loops shared by the full-history solver and the
hypothetical-outcome evaluation used for information-gain scoring.  Falls
back to pure Python (slow, identical results) when numba is unavailable or
``NUMBA_DISABLE_JIT`` is set.

Layout: comparison ``t`` is a factor between score variables ``ia[t]`` and
``ib[t]`` with observed sign ``yy[t]``; its two outgoing messages are stored
in natural parameters (precision, precision-adjusted mean) in
``mpa/mta`` (to ``ia``) and ``mpb/mtb`` (to ``ib``).  Variable marginals are
running natural-parameter sums of the prior plus all incoming messages.
"""
from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(func):
            return func

        return wrap

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@njit(cache=True)
def norm_cdf(x):
    return 0.5 * math.erfc(-x / _SQRT2)


@njit(cache=True)
def trunc_moments(z):
    """Moment corrections of a standard normal truncated below at ``-z``:
    v = pdf(z)/cdf(z) and w = v*(v+z).  Stable in the deep lower tail via an
    asymptotic Mills-ratio expansion once erfc underflows."""
    if z < -30.0:
        t = -z
        v = t + 1.0 / t - 2.0 / t ** 3 + 10.0 / t ** 5 - 74.0 / t ** 7
        return v, v * (v + z)
    pdf = _INV_SQRT_2PI * math.exp(-0.5 * z * z)
    cdf = 0.5 * math.erfc(-z / _SQRT2)
    v = pdf / cdf
    return v, v * (v + z)


@njit(cache=True)
def adf_update(mu_i, var_i, mu_j, var_j, y, noise_var):
    """Absorb one sign observation into the (i, j) marginals by moment
    matching; returns the four updated parameters."""
    vd = var_i + var_j + noise_var
    sd = math.sqrt(vd)
    z = y * (mu_i - mu_j) / sd
    v, w = trunc_moments(z)
    new_mu_i = mu_i + y * (var_i / sd) * v
    new_var_i = var_i * (1.0 - (var_i / vd) * w)
    new_mu_j = mu_j - y * (var_j / sd) * v
    new_var_j = var_j * (1.0 - (var_j / vd) * w)
    return new_mu_i, new_var_i, new_mu_j, new_var_j


@njit(cache=True)
def _update_factor(t, ia, ib, yy, mpa, mta, mpb, mtb, marg_pi, marg_tau,
                   noise_var, damping):
    a = ia[t]
    b = ib[t]
    y = yy[t]
    pca = marg_pi[a] - mpa[t]
    tca = marg_tau[a] - mta[t]
    pcb = marg_pi[b] - mpb[t]
    tcb = marg_tau[b] - mtb[t]
    if pca <= 0.0 or pcb <= 0.0:
        return  # improper cavity; retry next sweep
    va = 1.0 / pca
    ma = tca * va
    vb = 1.0 / pcb
    mb = tcb * vb
    vd = va + vb + noise_var
    sd = math.sqrt(vd)
    z = y * (ma - mb) / sd
    v, w = trunc_moments(z)
    ma2 = ma + y * (va / sd) * v
    va2 = va * (1.0 - (va / vd) * w)
    mb2 = mb - y * (vb / sd) * v
    vb2 = vb * (1.0 - (vb / vd) * w)
    npa = 1.0 / va2 - pca
    nta = ma2 / va2 - tca
    npb = 1.0 / vb2 - pcb
    ntb = mb2 / vb2 - tcb
    if npa < 0.0:
        npa = 0.0
    if npb < 0.0:
        npb = 0.0
    if damping > 0.0:
        npa = (1.0 - damping) * npa + damping * mpa[t]
        nta = (1.0 - damping) * nta + damping * mta[t]
        npb = (1.0 - damping) * npb + damping * mpb[t]
        ntb = (1.0 - damping) * ntb + damping * mtb[t]
    marg_pi[a] += npa - mpa[t]
    marg_tau[a] += nta - mta[t]
    marg_pi[b] += npb - mpb[t]
    marg_tau[b] += ntb - mtb[t]
    mpa[t] = npa
    mta[t] = nta
    mpb[t] = npb
    mtb[t] = ntb


@njit(cache=True)
def ep_run(ia, ib, yy, mpa, mta, mpb, mtb, T, marg_pi, marg_tau, noise_var,
           active, tol, max_sweeps, damping_init):
    """Forward-backward Gauss-Seidel sweeps over the active comparison factors
    until no marginal mean or variance moves by more than ``tol`` in a sweep.

    The active set grows to any factor touching a still-changing variable, so
    a warm start from a converged state with only new factors active reaches
    the same fixed point as a cold run.  Damping escalates to 0.5 after three
    consecutive sign-alternating sweeps.  Returns (converged, sweeps)."""
    n = marg_pi.shape[0]
    damping = damping_init
    prev_dmu = np.zeros(n)
    mu0 = np.empty(n)
    var0 = np.empty(n)
    changed = np.empty(n, np.bool_)
    osc = 0
    sweeps = 0
    for _ in range(max_sweeps):
        sweeps += 1
        for v in range(n):
            mu0[v] = marg_tau[v] / marg_pi[v]
            var0[v] = 1.0 / marg_pi[v]
        for t in range(T):
            if active[t]:
                _update_factor(t, ia, ib, yy, mpa, mta, mpb, mtb,
                               marg_pi, marg_tau, noise_var, damping)
        for t in range(T - 1, -1, -1):
            if active[t]:
                _update_factor(t, ia, ib, yy, mpa, mta, mpb, mtb,
                               marg_pi, marg_tau, noise_var, damping)
        conv = True
        dot = 0.0
        for v in range(n):
            dmu = marg_tau[v] / marg_pi[v] - mu0[v]
            dvar = 1.0 / marg_pi[v] - var0[v]
            if abs(dmu) > tol or abs(dvar) > tol:
                changed[v] = True
                conv = False
            else:
                changed[v] = False
            dot += dmu * prev_dmu[v]
            prev_dmu[v] = dmu
        if conv:
            return 1, sweeps
        if dot < 0.0:
            osc += 1
            if osc >= 3:
                damping = 0.5
        else:
            osc = 0
        for t in range(T):
            active[t] = changed[ia[t]] or changed[ib[t]]
    return 0, sweeps


@njit(cache=True)
def _hyp_relax(ia, ib, yy, mpa, mta, mpb, mtb, T, marg_pi, marg_tau,
               noise_var, tol, rel_cut, max_visits, indptr, adj, queue,
               in_queue, saved, undo_t, undo_vals, pending):
    """Absorb the hypothetical factor stored in slot ``T`` by worklist
    relaxation: starting from the new factor, each processed factor
    accumulates the movement it causes at its endpoint marginals into
    ``pending``; once a variable's accumulated movement exceeds the effective
    tolerance its adjacent factors are re-enqueued (and the accumulator
    reset), so updates propagate outward toward the same fixed point as a
    full rerun.  Accumulating instead of testing single-update movements
    means many tiny moves at the same variable still propagate, so the
    truncation error is bounded by the tolerance per variable rather than by
    the number of dropped events.

    The effective tolerance is ``max(tol, rel_cut * d0)`` where ``d0`` is the
    marginal movement caused by absorbing the hypothetical factor itself, so
    the ripple is truncated at a fixed fraction of its own seed scale
    uniformly across near and far pairs.  ``indptr``/``adj`` is the CSR
    variable-to-factor adjacency of the first ``T`` factors.  Message edits
    are recorded for rollback; returns the undo count."""
    nsaved = 0
    head = 0
    tail = 0
    cap = queue.shape[0]
    queue[tail] = T
    tail += 1
    in_queue[T] = True
    visits = 0
    accumulate = False
    while head != tail and visits < max_visits:
        t = queue[head]
        head += 1
        if head == cap:
            head = 0
        in_queue[t] = False
        visits += 1
        if not saved[t]:
            saved[t] = True
            undo_t[nsaved] = t
            undo_vals[nsaved, 0] = mpa[t]
            undo_vals[nsaved, 1] = mta[t]
            undo_vals[nsaved, 2] = mpb[t]
            undo_vals[nsaved, 3] = mtb[t]
            nsaved += 1
        a = ia[t]
        b = ib[t]
        ma0 = marg_tau[a] / marg_pi[a]
        va0 = 1.0 / marg_pi[a]
        mb0 = marg_tau[b] / marg_pi[b]
        vb0 = 1.0 / marg_pi[b]
        _update_factor(t, ia, ib, yy, mpa, mta, mpb, mtb,
                       marg_pi, marg_tau, noise_var, 0.0)
        da = abs(marg_tau[a] / marg_pi[a] - ma0)
        dva = abs(1.0 / marg_pi[a] - va0)
        if dva > da:
            da = dva
        db = abs(marg_tau[b] / marg_pi[b] - mb0)
        dvb = abs(1.0 / marg_pi[b] - vb0)
        if dvb > db:
            db = dvb
        if visits == 1:
            # seed movement of the hypothetical factor sets the cutoff scale
            d0 = da if da > db else db
            if rel_cut * d0 > tol:
                tol = rel_cut * d0
                accumulate = True
            else:
                # exact mode: the threshold is the solver's own convergence
                # resolution, so dropped single-update movements are already
                # below tolerance and accumulation would only add cost
                accumulate = False
        if accumulate:
            pending[a] += da
            pending[b] += db
        for side in range(2):
            v = a if side == 0 else b
            if accumulate:
                moved = pending[v] > tol
                if moved:
                    pending[v] = 0.0
            else:
                moved = (da if side == 0 else db) > tol
            if not moved:
                continue
            for k in range(indptr[v], indptr[v + 1]):
                s = adj[k]
                if not in_queue[s]:
                    queue[tail] = s
                    tail += 1
                    if tail == cap:
                        tail = 0
                    in_queue[s] = True
            # the hypothetical factor is not in the CSR adjacency
            if (v == ia[T] or v == ib[T]) and not in_queue[T]:
                queue[tail] = T
                tail += 1
                if tail == cap:
                    tail = 0
                in_queue[T] = True
    # drain any leftover flags (max_visits safety stop)
    while head != tail:
        in_queue[queue[head]] = False
        head += 1
        if head == cap:
            head = 0
    return nsaved


@njit(cache=True)
def eig_full_round(ia, ib, yy, mpa, mta, mpb, mtb, T, marg_pi, marg_tau,
                   noise_var, beta_sq, tol, rel_cut, max_sweeps, indptr, adj,
                   thresholds, uniforms, gains, mask):
    """One round of expected-information-gain evaluation over all unordered
    pairs under the full-posterior model.

    ``thresholds``/``uniforms`` hold the roulette acceptance threshold and the
    pre-drawn uniform per pair in canonical (i<j) order; a pair is evaluated
    iff its uniform falls below its threshold.  ``gains`` gets the
    outcome-weighted KL gain (NaN when skipped), ``mask`` the evaluated flag.
    The caller's message/marginal state is restored before returning."""
    n = marg_pi.shape[0]
    base_pi = marg_pi.copy()
    base_tau = marg_tau.copy()
    base_mu = np.empty(n)
    base_var = np.empty(n)
    for v in range(n):
        base_mu[v] = base_tau[v] / base_pi[v]
        base_var[v] = 1.0 / base_pi[v]
    saved = np.zeros(T + 1, np.bool_)
    undo_t = np.empty(T + 1, np.int64)
    undo_vals = np.empty((T + 1, 4))
    queue = np.empty(T + 2, np.int64)
    in_queue = np.zeros(T + 1, np.bool_)
    pending = np.zeros(n)
    max_visits = max_sweeps * (T + 1)
    k = 0
    for i in range(n):
        for j in range(i + 1, n):
            if uniforms[k] >= thresholds[k]:
                gains[i, j] = np.nan
                gains[j, i] = np.nan
                mask[i, j] = False
                mask[j, i] = False
                k += 1
                continue
            k += 1
            p = norm_cdf((base_mu[i] - base_mu[j])
                         / math.sqrt(2.0 * (base_var[i] + base_var[j] + beta_sq)))
            gain = 0.0
            for s in range(2):
                y = 1.0 if s == 0 else -1.0
                ia[T] = i
                ib[T] = j
                yy[T] = y
                mpa[T] = 0.0
                mta[T] = 0.0
                mpb[T] = 0.0
                mtb[T] = 0.0
                nsaved = _hyp_relax(ia, ib, yy, mpa, mta, mpb, mtb, T,
                                    marg_pi, marg_tau, noise_var, tol,
                                    rel_cut, max_visits, indptr, adj, queue,
                                    in_queue, saved, undo_t, undo_vals,
                                    pending)
                kl = 0.0
                for v in range(n):
                    nv = 1.0 / marg_pi[v]
                    d = marg_tau[v] / marg_pi[v] - base_mu[v]
                    kl += 0.5 * (nv / base_var[v] + d * d / base_var[v]
                                 - 1.0 + math.log(base_var[v] / nv))
                gain += (p if y > 0.0 else 1.0 - p) * kl
                for q in range(nsaved):
                    t = undo_t[q]
                    mpa[t] = undo_vals[q, 0]
                    mta[t] = undo_vals[q, 1]
                    mpb[t] = undo_vals[q, 2]
                    mtb[t] = undo_vals[q, 3]
                    saved[t] = False
                    pending[ia[t]] = 0.0
                    pending[ib[t]] = 0.0
                for v in range(n):
                    marg_pi[v] = base_pi[v]
                    marg_tau[v] = base_tau[v]
            gains[i, j] = gain
            gains[j, i] = gain
            mask[i, j] = True
            mask[j, i] = True
