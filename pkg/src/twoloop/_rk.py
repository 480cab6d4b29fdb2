"""Adaptive Dormand-Prince 5(4) integrator for complex leaf equations.

One jitted kernel serves every integration in the package.  The state is
``(x, y, I)`` where ``I`` accumulates the integral of a one-form ``Wp dx +
Wq dy`` along the computed path.  The path is parameterised by a real
``sigma`` and one of three modes selects the equation:

mode 0
    time flow ``dX/dsigma = e * (Ay, -Ax)`` with a complex direction ``e``
mode 1
    lift over a base path in the x-plane, ``dy/dx = -Ax/Ay``
mode 2
    lift over a base path in the y-plane, ``dx/dy = -Ay/Ax``

``Ax`` and ``Ay`` are the coefficient arrays of ``f_x + eps P`` and
``f_y + eps Q``.
"""
import numpy as np
from numba import njit

OK = 0
EVENT = 1
FOLD = 2
TRANSVERSALITY = 3
BUDGET = 4
UNDERFLOW = 5

LINE = 0
ARC = 1

_C2, _C3, _C4, _C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = (9017 / 3168, -355 / 33, 46732 / 5247,
                                49 / 176, -5103 / 18656)
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
# error weights b - b*
_E1 = 35 / 384 - 5179 / 57600
_E3 = 500 / 1113 - 7571 / 16695
_E4 = 125 / 192 - 393 / 640
_E5 = -2187 / 6784 + 92097 / 339200
_E6 = 11 / 84 - 187 / 2100
_E7 = -1 / 40


@njit(cache=True)
def peval(C, x, y):
    n, m = C.shape
    acc = 0j
    for i in range(n - 1, -1, -1):
        row = 0j
        for j in range(m - 1, -1, -1):
            row = row * y + C[i, j]
        acc = acc * x + row
    return acc


@njit(cache=True)
def _base(kind, c0, c1, r, th0, th1, s):
    if kind == LINE:
        return c0 + (c1 - c0) * s, c1 - c0
    w = c0 + r * np.exp(1j * (th0 + (th1 - th0) * s))
    return w, 1j * (th1 - th0) * (w - c0)


@njit(cache=True)
def _deriv(mode, s, X, Ax, Ay, Wp, Wq, e, kind, c0, c1, r, th0, th1, out):
    x = X[0]
    y = X[1]
    ax = peval(Ax, x, y)
    ay = peval(Ay, x, y)
    if mode == 0:
        dx = e * ay
        dy = -e * ax
    elif mode == 1:
        _, dx = _base(kind, c0, c1, r, th0, th1, s)
        dy = -ax / ay * dx
    else:
        _, dy = _base(kind, c0, c1, r, th0, th1, s)
        dx = -ay / ax * dy
    out[0] = dx
    out[1] = dy
    out[2] = peval(Wp, x, y) * dx + peval(Wq, x, y) * dy


@njit(cache=True)
def integrate(X0, s0, s1, mode, e, Ax, Ay, Wp, Wq,
              kind, c0, c1, r, th0, th1,
              rtol, atol, max_steps, h0,
              ev_on, l0, l1, l2, ev_dir, ev_arm,
              kappa, floor, record, rec_s, rec_X):
    """Integrate from ``s0`` to ``s1`` (``s1 > s0``).

    Returns ``(status, s, X, s_prev, X_prev, nsteps, nrec)``.
    """
    X = X0.copy()
    s = s0
    s_prev = s0
    X_prev = X0.copy()
    k1 = np.empty(3, np.complex128)
    k2 = np.empty(3, np.complex128)
    k3 = np.empty(3, np.complex128)
    k4 = np.empty(3, np.complex128)
    k5 = np.empty(3, np.complex128)
    k6 = np.empty(3, np.complex128)
    k7 = np.empty(3, np.complex128)
    Y = np.empty(3, np.complex128)
    Xn = np.empty(3, np.complex128)
    nrec = 0
    if record:
        rec_s[0] = s
        rec_X[0, :] = X
        nrec = 1
    span = s1 - s0
    h = h0 if h0 > 0 else 1e-3 * span
    if h > span:
        h = span
    err_prev = 1e-4
    ev_prev = (l0 + l1 * X[0] + l2 * X[1]).real
    _deriv(mode, s, X, Ax, Ay, Wp, Wq, e, kind, c0, c1, r, th0, th1, k1)
    nsteps = 0
    while s < s1:
        if nsteps >= max_steps:
            return BUDGET, s, X, s_prev, X_prev, nsteps, nrec
        if mode != 0:
            ax = peval(Ax, X[0], X[1])
            ay = peval(Ay, X[0], X[1])
            den = ay if mode == 1 else ax
            oth = ax if mode == 1 else ay
            if abs(den) < floor:
                return TRANSVERSALITY, s, X, s_prev, X_prev, nsteps, nrec
            if kappa > 0 and abs(den) < kappa * abs(oth):
                return FOLD, s, X, s_prev, X_prev, nsteps, nrec
        if s1 - s <= 4e-16 * max(abs(s1), span):
            break
        if h < 1e-13 * max(abs(s), span):
            return UNDERFLOW, s, X, s_prev, X_prev, nsteps, nrec
        if s + h > s1:
            h = s1 - s
        for i in range(3):
            Y[i] = X[i] + h * _A21 * k1[i]
        _deriv(mode, s + _C2 * h, Y, Ax, Ay, Wp, Wq, e, kind, c0, c1, r, th0, th1, k2)
        for i in range(3):
            Y[i] = X[i] + h * (_A31 * k1[i] + _A32 * k2[i])
        _deriv(mode, s + _C3 * h, Y, Ax, Ay, Wp, Wq, e, kind, c0, c1, r, th0, th1, k3)
        for i in range(3):
            Y[i] = X[i] + h * (_A41 * k1[i] + _A42 * k2[i] + _A43 * k3[i])
        _deriv(mode, s + _C4 * h, Y, Ax, Ay, Wp, Wq, e, kind, c0, c1, r, th0, th1, k4)
        for i in range(3):
            Y[i] = X[i] + h * (_A51 * k1[i] + _A52 * k2[i] + _A53 * k3[i]
                               + _A54 * k4[i])
        _deriv(mode, s + _C5 * h, Y, Ax, Ay, Wp, Wq, e, kind, c0, c1, r, th0, th1, k5)
        for i in range(3):
            Y[i] = X[i] + h * (_A61 * k1[i] + _A62 * k2[i] + _A63 * k3[i]
                               + _A64 * k4[i] + _A65 * k5[i])
        _deriv(mode, s + h, Y, Ax, Ay, Wp, Wq, e, kind, c0, c1, r, th0, th1, k6)
        for i in range(3):
            Xn[i] = X[i] + h * (_B1 * k1[i] + _B3 * k3[i] + _B4 * k4[i]
                                + _B5 * k5[i] + _B6 * k6[i])
        _deriv(mode, s + h, Xn, Ax, Ay, Wp, Wq, e, kind, c0, c1, r, th0, th1, k7)
        err = 0.0
        finite = True
        for i in range(3):
            ei = h * (_E1 * k1[i] + _E3 * k3[i] + _E4 * k4[i] + _E5 * k5[i]
                      + _E6 * k6[i] + _E7 * k7[i])
            sc = atol + rtol * max(abs(X[i]), abs(Xn[i]))
            q = abs(ei) / sc
            if not np.isfinite(q):
                finite = False
            err += q * q
        err = np.sqrt(err / 3.0)
        nsteps += 1
        if not finite:
            h *= 0.2
            continue
        if err <= 1.0:
            s_prev = s
            X_prev[:] = X
            s = s + h
            if mode == 1 or mode == 2:
                w, _ = _base(kind, c0, c1, r, th0, th1, s)
                Xn[mode - 1] = w
            X[:] = Xn
            k1[:] = k7
            if mode != 0:
                _deriv(mode, s, X, Ax, Ay, Wp, Wq, e, kind, c0, c1, r, th0, th1, k1)
            if record and nrec < rec_s.shape[0]:
                rec_s[nrec] = s
                rec_X[nrec, :] = X
                nrec += 1
            if ev_on and s - s0 >= ev_arm:
                ev = (l0 + l1 * X[0] + l2 * X[1]).real
                if (ev_dir >= 0 and ev_prev < 0.0 and ev >= 0.0) or \
                   (ev_dir <= 0 and ev_prev > 0.0 and ev <= 0.0):
                    return EVENT, s, X, s_prev, X_prev, nsteps, nrec
                ev_prev = ev
            elif ev_on:
                ev_prev = (l0 + l1 * X[0] + l2 * X[1]).real
            fac = 0.9 * err ** (-0.7 / 5) * err_prev ** (0.4 / 5) if err > 0 else 5.0
            fac = min(5.0, max(0.2, fac))
            err_prev = max(err, 1e-4)
            h *= fac
        else:
            h *= max(0.2, 0.9 * err ** (-0.2))
    return OK, s, X, s_prev, X_prev, nsteps, nrec
