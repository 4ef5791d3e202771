"""Time-stepping loop in two interchangeable implementations.

Both operate on the interleaved state y = (u_1, v_1, u_2, v_2, ...), a band LU
of (I - theta*dt*A) from LAPACK dgbtrf, the explicit band matrix
R = I + (1-theta)*dt*A, and the raw ring buffer of the delay line.  Each step
records E, V1, V2 (delay part of the Lyapunov functional without mu2),
the traces a, b, c, the squared L2 norm and the squared gradient norm.

The numba path uses transposed band storage so the inner loops of the band
solve run over contiguous memory.
"""
from __future__ import annotations

import numpy as np

from ._accel import active_backend, njit

# columns of the per-step measurement table
COLS = ("E", "V1", "V2", "a", "b", "c", "l2", "g2")
NCOL = len(COLS)


# ---------------------------------------------------------------- numba path

@njit
def _gbmv(rT, kl, ku, x, out):
    # rT[j, ku + i - j] = R[i, j]  (transposed LAPACK band storage)
    n = x.size
    for i in range(n):
        s = 0.0
        lo = i - kl if i - kl > 0 else 0
        hi = i + ku + 1 if i + ku + 1 < n else n
        for j in range(lo, hi):
            s += rT[j, ku + i - j] * x[j]
        out[i] = s


@njit
def _gbtrs(luT, kl, ku, piv, dinv, b):
    # same sweeps as LAPACK dgbtrs, on the transposed dgbtrf factors
    n = b.size
    kd = kl + ku
    for j in range(n - 1):
        lm = kl if kl < n - j - 1 else n - j - 1
        p = piv[j]
        if p != j:
            tmp = b[p]
            b[p] = b[j]
            b[j] = tmp
        bj = b[j]
        for i in range(1, lm + 1):
            b[j + i] -= luT[j, kd + i] * bj
    for j in range(n - 1, -1, -1):
        bj = b[j] * dinv[j]
        b[j] = bj
        lo = j - kd if j - kd > 0 else 0
        for i in range(lo, j):
            b[i] -= luT[j, kd + i - j] * bj


@njit
def _nonlinear(y, N, dx, f):
    inv = 0.5 / dx
    for i in range(N):
        ul = y[2 * i - 2] if i > 0 else 0.0
        ur = y[2 * i + 2] if i < N - 1 else 0.0
        vl = y[2 * i - 1] if i > 0 else 0.0
        vr = y[2 * i + 3] if i < N - 1 else 0.0
        u = y[2 * i]
        v = y[2 * i + 1]
        du = (ur - ul) * inv
        dv = (vr - vl) * inv
        dsq = (ur * ur - ul * ul) * inv
        f[2 * i] = u * du + dsq + 3.0 * v * dv
        f[2 * i + 1] = -3.0 * u * dv


@njit
def _measure(y, N, dx, L, beta, h, buf, head, row):
    Ml = buf.size - 1
    su = 0.0
    v1 = 0.0
    g = 0.0
    inv = 0.5 / dx
    for i in range(N):
        u = y[2 * i]
        v = y[2 * i + 1]
        xi = (i + 1) * dx
        su += u * u + v * v
        v1 += (L - xi) * u * u + xi * v * v
        ul = y[2 * i - 2] if i > 0 else 0.0
        ur = y[2 * i + 2] if i < N - 1 else 0.0
        vl = y[2 * i - 1] if i > 0 else 0.0
        vr = y[2 * i + 3] if i < N - 1 else 0.0
        du = (ur - ul) * inv
        dv = (vr - vl) * inv
        g += du * du + dv * dv
    a = (0.5 * y[2 * N - 4] - 2.0 * y[2 * N - 2]) / dx
    c = (4.0 * y[1] - y[3]) * inv
    ux0 = (4.0 * y[0] - y[2]) * inv
    vxL = (y[2 * N - 3] - 4.0 * y[2 * N - 1]) * inv
    g += 0.5 * (ux0 * ux0 + a * a + c * c + vxL * vxL)
    # two contiguous passes over the ring instead of modular indexing
    zz = 0.0
    zj = 0.0
    for i in range(head, Ml + 1):
        q = buf[i] * buf[i]
        zz += q
        zj += (i - head) * q
    off = Ml + 1 - head
    for i in range(head):
        q = buf[i] * buf[i]
        zz += q
        zj += (i + off) * q
    zw = zz - zj / Ml
    z0 = buf[head]
    zM = buf[(head + Ml) % (Ml + 1)]
    zz -= 0.5 * (z0 * z0 + zM * zM)
    zw -= 0.5 * z0 * z0
    row[6] = dx * su
    row[0] = 0.5 * row[6] + 0.5 * beta * h * zz / Ml
    row[1] = 0.5 * dx * v1
    row[2] = 0.5 * beta * h * zw / Ml
    row[3] = a
    row[4] = zM
    row[5] = c
    row[7] = dx * g


@njit
def _loop_numba(luT, piv, dinv, rT, kl, ku, N, dx, L, beta, h, theta, dt, cval,
                y, buf, head, nsteps, nonlinear, src, use_src, stride,
                out, snap_y, snap_z, fields, keep_fields):
    n = y.size
    Ml = buf.size - 1
    rhs = np.empty(n)
    f = np.empty(n)
    _measure(y, N, dx, L, beta, h, buf, head, out[0])
    if keep_fields:
        fields[0, :] = y
    isnap = 0
    if stride > 0:
        snap_y[0, :] = y
        for j in range(Ml + 1):
            snap_z[0, j] = buf[(head + j) % (Ml + 1)]
        isnap = 1
    for k in range(nsteps):
        _gbmv(rT, kl, ku, y, rhs)
        bn = buf[(head + Ml) % (Ml + 1)]
        bn1 = buf[(head + Ml - 1) % (Ml + 1)]
        rhs[n - 1] += dt * cval * (theta * bn1 + (1.0 - theta) * bn)
        if nonlinear:
            _nonlinear(y, N, dx, f)
            for i in range(n):
                rhs[i] += dt * f[i]
        if use_src:
            for i in range(n):
                rhs[i] += dt * src[k, i]
        _gbtrs(luT, kl, ku, piv, dinv, rhs)
        for i in range(n):
            y[i] = rhs[i]
        head = (head - 1) % (Ml + 1)
        buf[head] = (0.5 * y[2 * N - 4] - 2.0 * y[2 * N - 2]) / dx
        _measure(y, N, dx, L, beta, h, buf, head, out[k + 1])
        if not np.isfinite(out[k + 1, 0]) or not np.isfinite(out[k + 1, 7]):
            return head, k + 1
        if keep_fields:
            fields[k + 1, :] = y
        if stride > 0 and (k + 1) % stride == 0:
            snap_y[isnap, :] = y
            for j in range(Ml + 1):
                snap_z[isnap, j] = buf[(head + j) % (Ml + 1)]
            isnap += 1
    return head, -1


# ---------------------------------------------------------------- numpy path

def _measure_np(y, N, dx, L, beta, h, buf, head, rho_w, row):
    u = y[0::2]
    v = y[1::2]
    x = dx * np.arange(1, N + 1)
    up = np.concatenate(([0.0], u, [0.0]))
    vp = np.concatenate(([0.0], v, [0.0]))
    du = (up[2:] - up[:-2]) / (2 * dx)
    dv = (vp[2:] - vp[:-2]) / (2 * dx)
    a = (0.5 * u[-2] - 2.0 * u[-1]) / dx
    c = (4.0 * v[0] - v[1]) / (2 * dx)
    ux0 = (4.0 * u[0] - u[1]) / (2 * dx)
    vxL = (v[-2] - 4.0 * v[-1]) / (2 * dx)
    Ml = buf.size - 1
    z = np.roll(buf, -head)
    z2 = z * z
    l2 = dx * (u @ u + v @ v)
    row[6] = l2
    row[0] = 0.5 * l2 + 0.5 * beta * h * (z2.sum() - 0.5 * (z2[0] + z2[-1])) / Ml
    row[1] = 0.5 * dx * (((L - x) * u) @ u + (x * v) @ v)
    row[2] = 0.5 * beta * h * (rho_w @ z2) / Ml
    row[3] = a
    row[4] = z[-1]
    row[5] = c
    row[7] = dx * (du @ du + dv @ dv + 0.5 * (ux0 * ux0 + a * a + c * c + vxL * vxL))


def _nonlinear_np(y, N, dx):
    u = y[0::2]
    v = y[1::2]
    d = lambda w: (np.concatenate((w[1:], [0.0])) - np.concatenate(([0.0], w[:-1]))) / (2 * dx)
    f = np.empty_like(y)
    dv = d(v)
    f[0::2] = u * d(u) + d(u * u) + 3.0 * v * dv
    f[1::2] = -3.0 * u * dv
    return f


def _loop_numpy(lub, piv, R, kl, ku, N, dx, L, beta, h, theta, dt, cval,
                y, buf, head, nsteps, nonlinear, src, use_src, stride,
                out, snap_y, snap_z, fields, keep_fields):
    from scipy.linalg.lapack import dgbtrs

    n = y.size
    Ml = buf.size - 1
    rho_w = 1.0 - np.arange(Ml + 1) / Ml
    rho_w[0] = 0.5
    rho_w[-1] = 0.0
    _measure_np(y, N, dx, L, beta, h, buf, head, rho_w, out[0])
    if keep_fields:
        fields[0] = y
    isnap = 0
    if stride > 0:
        snap_y[0] = y
        snap_z[0] = np.roll(buf, -head)
        isnap = 1
    for k in range(nsteps):
        rhs = R @ y
        bn = buf[(head + Ml) % (Ml + 1)]
        bn1 = buf[(head + Ml - 1) % (Ml + 1)]
        rhs[n - 1] += dt * cval * (theta * bn1 + (1.0 - theta) * bn)
        if nonlinear:
            rhs += dt * _nonlinear_np(y, N, dx)
        if use_src:
            rhs += dt * src[k]
        y, info = dgbtrs(lub, kl, ku, rhs, piv)
        head = (head - 1) % (Ml + 1)
        buf[head] = (0.5 * y[2 * N - 4] - 2.0 * y[2 * N - 2]) / dx
        _measure_np(y, N, dx, L, beta, h, buf, head, rho_w, out[k + 1])
        if not (np.isfinite(out[k + 1, 0]) and np.isfinite(out[k + 1, 7])):
            return head, k + 1, y
        if keep_fields:
            fields[k + 1] = y
        if stride > 0 and (k + 1) % stride == 0:
            snap_y[isnap] = y
            snap_z[isnap] = np.roll(buf, -head)
            isnap += 1
    return head, -1, y


def run_loop(stepper, backend=None, **kw):
    """Run the stepping loop; returns (head, status) and updates y in place."""
    backend = backend or active_backend()
    if backend == "numba":
        head, status = _loop_numba(stepper.luT, stepper.piv, stepper.dinv, stepper.rT,
                                   stepper.kl, stepper.ku, **kw)
        return int(head), int(status)
    y = kw["y"]
    head, status, ynew = _loop_numpy(stepper.lub, stepper.piv, stepper.R, stepper.kl, stepper.ku, **kw)
    y[:] = ynew
    return int(head), int(status)


def band_solve(stepper, b, backend=None):
    backend = backend or active_backend()
    b = np.array(b, dtype=float)
    if backend == "numba":
        _gbtrs(stepper.luT, stepper.kl, stepper.ku, stepper.piv, stepper.dinv, b)
        return b
    from scipy.linalg.lapack import dgbtrs

    x, info = dgbtrs(stepper.lub, stepper.kl, stepper.ku, b, stepper.piv)
    return x


def band_matvec(stepper, x, backend=None):
    backend = backend or active_backend()
    x = np.asarray(x, float)
    if backend == "numba":
        out = np.empty_like(x)
        _gbmv(stepper.rT, stepper.kl, stepper.ku, x, out)
        return out
    return stepper.R @ x
