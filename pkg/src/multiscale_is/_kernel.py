"""Compiled inner loop for one controlled trajectory.

Everything model-specific is passed in as flat arrays so a single compiled
specialization serves every experiment family.
"""
import math

import numba

OK, INVALID, CENSORED = 0, 1, 2

NO_CONTROL, FULL_MULTISCALE, HOMOGENIZED_ONLY = 0, 1, 2


@numba.njit(cache=True, inline="always")
def _trig(y, w, a, b, scale, offset):
    q = 0.0
    dq = 0.0
    for j in range(w.size):
        c = math.cos(w[j] * y)
        s = math.sin(w[j] * y)
        q += a[j] * c + b[j] * s
        dq += w[j] * (b[j] * c - a[j] * s)
    return offset + scale * q, scale * dq


@numba.njit(cache=True, inline="always")
def _hermite(p0, p1, m0, m1, u):
    u2 = u * u
    u3 = u2 * u
    return (2 * u3 - 3 * u2 + 1) * p0 + (u3 - 2 * u2 + u) * m0 + (-2 * u3 + 3 * u2) * p1 + (u3 - u2) * m1


@numba.njit(cache=True, inline="always")
def fast_potential(y, w, a, b, scale, offset, t0, th, tq, tdq, tddq):
    """(Q(y), Q'(y)); cubic Hermite from the table when ``y`` is inside it."""
    s = (y - t0) / th
    if s >= 0.0 and s < tq.size - 1:
        i = int(s)
        u = s - i
        q = _hermite(tq[i], tq[i + 1], th * tdq[i], th * tdq[i + 1], u)
        dq = _hermite(tdq[i], tdq[i + 1], th * tddq[i], th * tddq[i + 1], u)
        return q, dq
    return _trig(y, w, a, b, scale, offset)


@numba.njit(cache=True, inline="always")
def _horner(c, x):
    acc = 0.0
    for k in range(c.size - 1, -1, -1):
        acc = acc * x + c[k]
    return acc


@numba.njit(cache=True, inline="always")
def subsolution_gradient(kind, p, t, x):
    if kind == 1:
        kappa, D, T = p[0], p[1], p[2]
        et = math.exp(kappa * t)
        sgn = 1.0 if x >= 0.0 else -1.0
        den = (1.0 + 2.0 * D) * math.exp(2.0 * kappa * T) - 2.0 * D * et * et
        return -2.0 * et * (math.exp(kappa * T) - abs(x) * et) * sgn / den
    if kind == 2:
        return -1.0 / p[0]
    if kind == 3:
        return -x / p[0]
    return 0.0


@numba.njit(cache=True)
def integrate_path(
    gen, x0, t0, dt, n_fixed, eps, delta, D, exit_mode, x_minus, x_plus, max_steps,
    w, a, b, scale, offset, tab0, tabh, tab_period, tq, tdq, tddq,
    vprime, variant, ctrl_coef, sub_kind, sub_p,
):
    """Predictor-corrector Euler with the control applied alongside the noise.

    The trapezoidal correction acts on the uncontrolled drift only; the step
    is then the uncontrolled step driven by ``dW = dWbar + u dt / sqrt(eps)``,
    and the accumulated log-weight is the exact log density ratio of the
    discrete chain.
    """
    # Potential evaluation is written out inline (two stages per step): helper
    # calls taking the arrays cost ~10x the arithmetic in refcounting.
    sig = math.sqrt(2.0 * D)
    sq_eps = math.sqrt(eps)
    sq_dt = math.sqrt(dt)
    ratio = eps / delta
    n_tab = tq.size
    inv_delta = 1.0 / delta
    inv_h = 1.0 / tabh
    inv_period = 1.0 / tab_period if tab_period > 0.0 else 0.0
    x = x0
    logw = 0.0
    k = 0
    status = OK
    exited = False
    exited_plus = False
    limit = max_steps if exit_mode else n_fixed
    drift0 = 0.0
    incr = 0.0
    u = 0.0
    dwb = 0.0
    while k < limit:
        z = x
        for stage in range(2):
            y = z * inv_delta
            if tab_period > 0.0:
                s = (y - tab_period * math.floor(y * inv_period) - tab0) * inv_h
            else:
                s = (y - tab0) * inv_h
            if s >= 0.0 and s < n_tab - 1:
                i = int(s)
                v = s - i
                q = _hermite(tq[i], tq[i + 1], tabh * tdq[i], tabh * tdq[i + 1], v)
                dq = _hermite(tdq[i], tdq[i + 1], tabh * tddq[i], tabh * tddq[i + 1], v)
            else:
                q = 0.0
                dq = 0.0
                for j in range(w.size):
                    c = math.cos(w[j] * y)
                    sn = math.sin(w[j] * y)
                    q += a[j] * c + b[j] * sn
                    dq += w[j] * (b[j] * c - a[j] * sn)
                q = offset + scale * q
                dq = scale * dq
            vp = 0.0
            for m in range(vprime.size - 1, -1, -1):
                vp = vp * z + vprime[m]
            drift = -ratio * dq - vp
            if stage == 0:
                drift0 = drift
                u = 0.0
                if variant != NO_CONTROL:
                    ux = subsolution_gradient(sub_kind, sub_p, t0 + k * dt, x)
                    if variant == FULL_MULTISCALE:
                        u = -sig * ctrl_coef * math.exp(q / D) * ux
                    else:
                        u = -ctrl_coef * ux
                dwb = sq_dt * gen.standard_normal()
                incr = sig * (sq_eps * dwb + u * dt)
                z = x + drift0 * dt + incr
            else:
                x = x + 0.5 * (drift0 + drift) * dt + incr
        logw += -0.5 * u * u * dt / eps - u * dwb / sq_eps
        k += 1
        if not (math.isfinite(x) and math.isfinite(logw)):
            status = INVALID
            break
        if exit_mode:
            if x >= x_plus:
                exited = True
                exited_plus = True
                break
            if x <= x_minus:
                exited = True
                break
    if exit_mode and status == OK and not exited:
        status = CENSORED
    return x, exited_plus, logw, k, status
