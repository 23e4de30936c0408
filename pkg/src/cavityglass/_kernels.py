"""Numba kernels for state-vector trajectories in the sigma^x product basis.

Basis index ``s``: bit ``i`` set means sigma^x_i = -1.  sigma^z flips bit i,
sigma^y acts as ``(sigma^y psi)[s] = i x_i(s) psi[s ^ (1 << i)]``.
"""
import cmath
import math

import numpy as np
from numba import njit


@njit(cache=True)
def seed_numba(seed):
    np.random.seed(seed)


@njit(cache=True)
def _norm2(psi):
    acc = 0.0
    for s in range(psi.size):
        acc += psi[s].real * psi[s].real + psi[s].imag * psi[s].imag
    return acc


@njit(cache=True)
def _draw_logr():
    return math.log(1.0 - np.random.random())


@njit(cache=True)
def split_step(psi, X, e, F, Jd, cD, om, hc, bq, dt):
    """One Strang step: diag/2, transverse rotations, S^x S^y flips, diag/2."""
    D = psi.size
    n = Jd.size
    ph = np.empty(D, dtype=np.complex128)
    a = -1j * cD * dt / 2
    for s in range(D):
        ph[s] = cmath.exp(a * e[s])
        psi[s] *= ph[s]
    for j in range(n):
        b = 1 << j
        th = (om + Jd[j] * hc) * dt / 2
        co = cmath.cos(th)
        si = -1j * cmath.sin(th)
        for s in range(D):
            if s & b:
                continue
            p0 = psi[s]
            p1 = psi[s | b]
            psi[s] = co * p0 + si * p1
            psi[s | b] = co * p1 + si * p0
    if bq != 0:
        q = bq * dt / 4
        for j in range(n):
            b = 1 << j
            for s in range(D):
                if s & b:
                    continue
                phi = q * F[s, j]
                c = 1 - phi * phi / 2
                p0 = psi[s]
                p1 = psi[s | b]
                psi[s] = c * p0 + phi * p1
                psi[s | b] = c * p1 - phi * p0
    for s in range(D):
        psi[s] *= ph[s]


@njit(cache=True)
def spin_expectations(psi, X, out_x, out_y, out_z):
    D = psi.size
    n = out_x.size
    for j in range(n):
        b = 1 << j
        ax = 0.0
        ay = 0.0
        az = 0.0
        for s in range(D):
            if s & b:
                continue
            p0 = psi[s]
            p1 = psi[s | b]
            ax += abs(p0) ** 2 - abs(p1) ** 2
            c = p0.conjugate() * p1
            az += 2 * c.real
            # <p0| i p1> + <p1| -i p0> = -2 Im(conj(p0) p1)
            ay += -2 * c.imag
        out_x[j] = ax
        out_y[j] = ay
        out_z[j] = az


@njit(cache=True)
def hamiltonian_expectation(psi, X, e, F, Jd, ed, ez, ezJ, ey):
    """<H> for H = ed*e(x) + sum_j (ez + ezJ*Jd_j) S^z_j + ey * sum_j F_j S^y_j."""
    D = psi.size
    n = Jd.size
    en = 0.0
    for s in range(D):
        en += ed * e[s] * (abs(psi[s]) ** 2)
    for j in range(n):
        b = 1 << j
        hz = (ez + ezJ * Jd[j]) / 2
        for s in range(D):
            if s & b:
                continue
            p0 = psi[s]
            p1 = psi[s | b]
            c = p0.conjugate() * p1
            en += hz * 2 * c.real
            if ey != 0:
                en += ey * F[s, j] * (-c.imag)
    return en


@njit(cache=True)
def _channel_moments_diag(psi, A, ck, ap):
    """Return (<C_k^dag C_k>, <C_k>) for alpha_- = 0 (diagonal collapse operators)."""
    D = psi.size
    n = A.shape[1]
    m1 = np.zeros(n)
    m2 = np.zeros(n)
    for s in range(D):
        p = abs(psi[s]) ** 2
        for k in range(n):
            a = A[s, k]
            m1[k] += p * a
            m2[k] += p * a * a
    cc = np.empty(n)
    mc = np.empty(n, dtype=np.complex128)
    for k in range(n):
        amp = ck[k] * ap
        cc[k] = abs(amp) ** 2 * m2[k]
        mc[k] = amp * m1[k]
    return cc, mc


@njit(cache=True)
def _collapse_vectors(psi, X, A, Vc, ck, ap, am):
    """All C_k psi as columns of a (D, n) array (general alpha_-)."""
    D = psi.size
    n = A.shape[1]
    W = np.empty((D, n), dtype=np.complex128)
    for i in range(n):
        b = 1 << i
        for s in range(D):
            W[s, i] = 0.5j * X[s, i] * psi[s ^ b]
    Y = W @ Vc
    out = np.empty((D, n), dtype=np.complex128)
    for s in range(D):
        for k in range(n):
            out[s, k] = ck[k] * (ap * A[s, k] * psi[s] + 1j * am * Y[s, k])
    return out


@njit(cache=True)
def _pick(weights):
    tot = 0.0
    for w in weights:
        tot += w
    r = np.random.random() * tot
    acc = 0.0
    for k in range(weights.size):
        acc += weights[k]
        if r < acc:
            return k
    return weights.size - 1


@njit(cache=True)
def _jump_general(psi, X, A, Vc, ck, ap, am, beta, xi):
    n = A.shape[1]
    Cpsi = _collapse_vectors(psi, X, A, Vc, ck, ap, am)
    cc = np.zeros(n)
    mc = np.zeros(n, dtype=np.complex128)
    for k in range(n):
        for s in range(psi.size):
            cc[k] += abs(Cpsi[s, k]) ** 2
            mc[k] += psi[s].conjugate() * Cpsi[s, k]
    w = cc + beta * beta
    k = _pick(w)
    rp = w[k] + 2 * beta * (xi.conjugate() * mc[k]).real
    sign = 1 if np.random.random() * 2 * w[k] < rp else -1
    shift = sign * beta * xi
    for s in range(psi.size):
        psi[s] = Cpsi[s, k] + shift * psi[s]
    nrm = math.sqrt(_norm2(psi))
    psi /= nrm
    return k, sign


@njit(cache=True)
def _jump_diag(psi, A, ck, ap, beta, xi):
    cc, mc = _channel_moments_diag(psi, A, ck, ap)
    w = cc + beta * beta
    k = _pick(w)
    rp = w[k] + 2 * beta * (xi.conjugate() * mc[k]).real
    sign = 1 if np.random.random() * 2 * w[k] < rp else -1
    amp = ck[k] * ap
    shift = sign * beta * xi
    for s in range(psi.size):
        psi[s] *= amp * A[s, k] + shift
    nrm = math.sqrt(_norm2(psi))
    psi /= nrm
    return k, sign


@njit(cache=True)
def _record(psi, X, e, F, Jd, idx, ecoef, h, out_x, out_y, out_z, out_h, out_en,
            states, want_states):
    n = Jd.size
    tx = np.empty(n)
    ty = np.empty(n)
    tz = np.empty(n)
    spin_expectations(psi, X, tx, ty, tz)
    out_x[idx] = tx
    out_y[idx] = ty
    out_z[idx] = tz
    out_h[idx] = h
    out_en[idx] = hamiltonian_expectation(psi, X, e, F, Jd, ecoef[idx, 0], ecoef[idx, 1],
                                          ecoef[idx, 2], ecoef[idx, 3])
    if want_states:
        states[idx] = psi


@njit(cache=True)
def run_trajectory(psi, X, e, F, A, Vc, Jd, sqrtlam,
                   dt, cD, om, hc, bq, cpre, ap, am, gconst,
                   sample_steps,
                   cD_f, cpre_f, ap_f, t_split, t_final, sample_times_diag,
                   beta, xi, ecoef, want_states,
                   out_x, out_y, out_z, out_h, out_en, states,
                   jt, jc, js):
    """Full trajectory: split-step regime then exact diagonal regime.

    Returns the number of jumps or -1 when the jump log overflowed.
    """
    n = Jd.size
    h = np.zeros(n, dtype=np.int64)
    n_split = cD.size
    nj = 0
    cap = jt.size
    logr = _draw_logr()
    logS = 0.0
    si = 0
    ns_split = sample_steps.size
    while si < ns_split and sample_steps[si] == 0:
        _record(psi, X, e, F, Jd, si, ecoef, h, out_x, out_y, out_z, out_h, out_en,
                states, want_states)
        si += 1
    for step in range(n_split):
        split_step(psi, X, e, F, Jd, cD[step], om[step], hc[step], bq[step], dt)
        nrm2 = _norm2(psi)
        psi /= math.sqrt(nrm2)
        logS += math.log(nrm2) - gconst[step] * dt
        if logS < logr:
            ck = cpre[step] * sqrtlam
            if am[step] == 0:
                k, sg = _jump_diag(psi, A, ck, ap[step], beta, xi)
            else:
                k, sg = _jump_general(psi, X, A, Vc, ck, ap[step], am[step], beta, xi)
            h[k] += sg
            if nj >= cap:
                return -1
            jt[nj] = (step + 1) * dt
            jc[nj] = k
            js[nj] = sg
            nj += 1
            logS = 0.0
            logr = _draw_logr()
        while si < ns_split and sample_steps[si] == step + 1:
            _record(psi, X, e, F, Jd, si, ecoef, h, out_x, out_y, out_z, out_h, out_en,
                    states, want_states)
            si += 1

    # exact event-driven evolution for the diagonal regime
    D = psi.size
    gam = np.empty(D)
    for s in range(D):
        gam[s] = -2 * cD_f.imag * e[s]
    ck = cpre_f * sqrtlam
    gc = beta * beta * n
    t = t_split
    di = 0
    nd = sample_times_diag.size
    p = np.empty(D)
    while True:
        t_next_sample = sample_times_diag[di] if di < nd else np.inf
        t_stop = min(t_next_sample, t_final)
        if t >= t_stop and di >= nd:
            break
        for s in range(D):
            p[s] = abs(psi[s]) ** 2
        # Newton for log sum p exp(-gam tau) - gc tau = logr - logS (convex, decreasing)
        target = logr - logS
        tau = 0.0
        for _ in range(200):
            z = 0.0
            zd = 0.0
            for s in range(D):
                w = p[s] * math.exp(-gam[s] * tau)
                z += w
                zd += gam[s] * w
            fval = math.log(z) - gc * tau - target
            fder = -zd / z - gc
            if fder > -1e-300:
                tau = np.inf
                break
            step_tau = fval / fder
            tau -= step_tau
            if abs(step_tau) <= 1e-14 * max(tau, 1e-12):
                break
        if not (tau >= 0.0 and tau < 1e300):
            tau = np.inf
        jump = t + tau < t_stop
        dtau = tau if jump else t_stop - t
        a = -1j * cD_f * dtau
        for s in range(D):
            psi[s] *= cmath.exp(a * e[s])
        nrm2 = _norm2(psi)
        psi /= math.sqrt(nrm2)
        logS += math.log(nrm2) - gc * dtau
        t += dtau
        if jump:
            k, sg = _jump_diag(psi, A, ck, ap_f, beta, xi)
            h[k] += sg
            if nj >= cap:
                return -1
            jt[nj] = t
            jc[nj] = k
            js[nj] = sg
            nj += 1
            logS = 0.0
            logr = _draw_logr()
        else:
            if di < nd and t >= t_next_sample:
                _record(psi, X, e, F, Jd, ns_split + di, ecoef, h, out_x, out_y, out_z,
                        out_h, out_en, states, want_states)
                di += 1
            if t >= t_final and di >= nd:
                break
    return nj
