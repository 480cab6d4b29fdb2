"""Cycles on fibers, Abelian integrals and the asymptotics of Melnikov functions.

Conventions: ``M1(s)`` is the integral of the leading one-form over the
periodic orbit oriented by the Hamiltonian flow.  Vanishing cycles carry
the orientation for which the corner integral of their saddle, continued
to ``s e^{i pi}`` and ``s e^{-i pi}``, jumps by exactly their integral.  In
the log decomposition the second vanishing cycle is reversed, so that
``M1 = (f1 + f2) log s + f3`` with ``f_i = (integral over delta_i) / (2 pi i)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import polynomial as P1

from .complex_flow import (PRECISE, Arc, BasePath, flow, flow_to_section, holonomy_transport)
from .errors import (BranchCollision, NoConvergence, NoisyTail, NoReturn, NotHyperelliptic,
                     OrderAmbiguous, OutOfAnnulus, PreconditionError, TwoLoopError)
from .system_model import HamiltonianSystem, OneForm, Polynomial2

_TWO_PI_I = 2j * math.pi


@dataclass(frozen=True, eq=False)
class FiberCycle:
    """Closed curve on the fiber ``f = t``.

    ``sampler(n)`` returns ``(x, y, dx, dy)`` at ``n`` equally spaced values
    of a periodic parameter on ``[0, 1)``; ``dx``/``dy`` are derivatives with
    respect to that parameter.
    """

    t: complex
    kind: str
    sampler: Callable | None = field(repr=False, default=None)
    orientation: int = 1
    components: tuple = ()
    period: float = 0.0
    section_w: complex = 1.0
    base_path: BasePath | None = field(repr=False, default=None)
    start: tuple = (0j, 0j)
    saddle_index: int = 0

    def samples(self, n: int = 256) -> np.ndarray:
        if self.kind == "composite":
            return np.vstack([c.samples(n) for c in self.components])
        x, y, _, _ = self.sampler(n)
        pts = np.column_stack([x, y])
        return pts if self.orientation > 0 else pts[::-1]

    def is_closed(self, tol: float = 1e-8) -> bool:
        if self.kind == "composite":
            return all(c.is_closed(tol) for c in self.components)
        x, y, _, _ = self.sampler(64)
        # the sampler's periodic grid omits the endpoint; closure is checked on the next sample
        x1, y1, _, _ = self._endpoint()
        return bool(np.all(np.abs(x1 - x[0]) < tol) and np.all(np.abs(y1 - y[0]) < tol))

    def _endpoint(self):
        return self.sampler(1, closing=True)

    def reversed(self) -> "FiberCycle":
        if self.kind == "composite":
            return FiberCycle(self.t, "composite", components=tuple(c.reversed() for c in self.components))
        return FiberCycle(self.t, self.kind, self.sampler, -self.orientation, (), self.period,
                          self.section_w, self.base_path, self.start, self.saddle_index)

    def diameter(self, n: int = 256) -> float:
        p = self.samples(n)
        d = np.sqrt(np.abs(p[:, None, 0] - p[None, :, 0]) ** 2 + np.abs(p[:, None, 1] - p[None, :, 1]) ** 2)
        return float(d.max())


def composite(*cycles: FiberCycle) -> FiberCycle:
    return FiberCycle(cycles[0].t, "composite", components=tuple(cycles))


@dataclass(frozen=True)
class AbelianIntegralSamples:
    kind: str
    grid: np.ndarray
    values: np.ndarray


@dataclass(frozen=True)
class LogDecomposition:
    grid: np.ndarray
    fsum: np.ndarray
    f3: np.ndarray
    residual: float
    curvature: np.ndarray = field(repr=False, default=None)


@dataclass(frozen=True)
class AsymptoticModel:
    p: Fraction
    q: int
    c: float
    fit_rms: float
    snapped: bool = True

    def __call__(self, s):
        s = np.asarray(s, float)
        return self.c * s ** float(self.p) * np.log(s) ** self.q

    def to_json(self):
        return {"p": str(self.p), "q": self.q, "c": self.c, "fit_rms": self.fit_rms,
                "snapped": self.snapped}


# ---------------------------------------------------------------------------
# periodic orbits

def periodic_orbit(system: HamiltonianSystem, t: float) -> FiberCycle:
    """Periodic orbit of the unperturbed flow on ``f = t``, oriented by the flow.

    When the orbit is star-shaped about the center it is sampled at equal
    polar angles, each point solved on its ray by Newton; otherwise it is
    sampled at equal times.  Time sampling is badly conditioned near the
    loop (the transit time past a saddle is sensitive to rounding), the ray
    construction is not.
    """
    loop = system.loop
    lo, hi = loop.annulus_range
    if not lo < t < hi:
        raise OutOfAnnulus(f"level {t} outside the annulus {loop.annulus_range}", "periodic_orbit")
    sec = loop.sigma
    w = sec.locate(system.f, t, w0=1.0 - 0.5 * (t / loop.center.level))
    X0 = np.array(sec.point(w) + (0j,), np.complex128)
    arm = 0.2 * math.pi / math.sqrt(abs(loop.center.hessian_det))
    try:
        X1, T = flow_to_section(system, 0.0, X0, sec, 1, PRECISE, form="none", arm=arm,
                                t_max=1e3, return_time=True)
    except TwoLoopError as exc:
        raise NoReturn(f"no return to the section at level {t}", "periodic_orbit") from exc
    T = float(T.real)
    if abs(X1[0] - X0[0]) + abs(X1[1] - X0[1]) > 1e-8:
        raise NoReturn("orbit does not close", "periodic_orbit")
    _, (_, rec) = flow(system, 0.0, X0, T, PRECISE, form="none", record=True)
    sampler = _polar_sampler(system, t, rec) or _time_sampler(system, X0, T)
    return FiberCycle(complex(t), "periodic", sampler, 1, (), T, w, None,
                      (complex(X0[0]), complex(X0[1])))


def _time_sampler(system, X0, T):
    fx, fy = system.f.dx(), system.f.dy()

    def sampler(n, closing=False):
        if closing:
            X = flow(system, 0.0, X0, T, PRECISE, form="none")
            x, y = np.array([X[0]]), np.array([X[1]])
        else:
            pts = np.empty((n, 2), np.complex128)
            X = X0
            for k in range(n):
                pts[k] = X[:2]
                if k + 1 < n:
                    X = flow(system, 0.0, X, T / n, PRECISE, form="none")
            x, y = pts[:, 0], pts[:, 1]
        return x, y, T * fy(x, y), -T * fx(x, y)

    return sampler


def _polar_sampler(system, t, rec):
    """Equal-angle sampler about the center, or None if the orbit is not star-shaped."""
    cx, cy = system.loop.center.location
    dx, dy = rec[:, 0].real - cx, rec[:, 1].real - cy
    ang = np.unwrap(np.arctan2(dy, dx))
    steps = np.diff(ang)
    turn = np.sign(ang[-1] - ang[0])
    if not (abs(abs(ang[-1] - ang[0]) - 2 * math.pi) < 1e-6 and np.all(steps * turn > 0)):
        return None
    rad = np.hypot(dx, dy)
    th0 = ang[0]
    key = (ang - th0) * turn
    f, fx, fy = system.f, system.f.dx(), system.f.dy()

    def solve(th):
        ux, uy = np.cos(th), np.sin(th)
        r = np.interp((th - th0) * turn, key, rad)
        for _ in range(60):
            x, y = cx + r * ux, cy + r * uy
            g = f(x, y) - t
            dg = fx(x, y) * ux + fy(x, y) * uy
            step = g / dg
            r = r - step
            if np.max(np.abs(step)) <= 1e-15 * np.max(r):
                break
        x, y = cx + r * ux, cy + r * uy
        gx, gy = fx(x, y), fy(x, y)
        rp = -r * (gx * -uy + gy * ux) / (gx * ux + gy * uy)
        return x, y, rp * ux - r * uy, rp * uy + r * ux

    def sampler(n, closing=False):
        p = np.array([1.0]) if closing else np.arange(n) / n
        th = th0 + turn * 2 * math.pi * p
        x, y, dxt, dyt = solve(th)
        scale = turn * 2 * math.pi
        return (x.astype(complex), y.astype(complex), scale * dxt.astype(complex),
                scale * dyt.astype(complex))

    return sampler


# ---------------------------------------------------------------------------
# vanishing cycles

def _hyperelliptic(f: Polynomial2):
    """``f = c y^2 + B(x) y + V(x)`` -> ``(c, B, V)`` as 1-D coefficient arrays."""
    C = f.coef
    if C.shape[1] != 3 or np.any(C[1:, 2] != 0) or C[0, 2] == 0:
        raise NotHyperelliptic("f is not quadratic in y with constant leading coefficient",
                               "vanishing_cycle")
    return float(C[0, 2]), C[:, 1].astype(float), C[:, 0].astype(float)


_ORIENT: dict = {}


def _raw_vanishing(system, saddle, t, r_scale=None):
    c, B, V = _hyperelliptic(system.f)
    Vt = P1.polysub(V, P1.polymul(B, B) / (4 * c))
    g = P1.polysub(np.array([t], complex), Vt)  # t - V~(x)
    g = np.trim_zeros(np.asarray(g, complex), "b")
    roots = np.roots(g[::-1])
    lead = g[-1]
    xs = saddle.location[0]
    order = np.argsort(np.abs(roots - xs))
    if len(roots) < 2:
        raise BranchCollision("fewer than two branch points", "vanishing_cycle")
    r1, r2 = roots[order[0]], roots[order[1]]
    others = roots[order[2:]]
    m = 0.5 * (r1 + r2)
    h = 0.5 * (r1 - r2)
    d_next = np.min(np.abs(others - m)) if len(others) else np.inf
    if not abs(h) * 1.2 < d_next:
        raise BranchCollision("branch points cannot be separated at this level", "vanishing_cycle")
    radius = min(2 * abs(h), math.sqrt(abs(h) * d_next)) if np.isfinite(d_next) else 2 * abs(h)
    if r_scale is not None:
        radius = r_scale
    fx, fy = system.f.dx(), system.f.dy()

    def branch(x):
        u = x - m
        root1 = u * np.sqrt(1 - (h / u) ** 2)
        q = (lead / c) * np.prod([x - rk for rk in others], axis=0) if len(others) \
            else np.full_like(x, lead / c)
        mag = np.sqrt(np.abs(q))
        ph = np.unwrap(np.angle(q)) / 2
        return root1 * mag * np.exp(1j * ph)

    def sampler(n, closing=False):
        th = np.array([2 * math.pi]) if closing else np.arange(n) * (2 * math.pi / n)
        x = m + radius * np.exp(1j * th)
        if closing:
            # continue the branch around the full circle before reading the end value
            full = m + radius * np.exp(1j * np.linspace(0, 2 * math.pi, 513))
            wv = branch(full)[-1:]
        else:
            wv = branch(x)
        y = wv - P1.polyval(x, B) / (2 * c)
        dx = 2j * math.pi * (x - m)
        dy = -fx(x, y) / fy(x, y) * dx
        return x, y, dx, dy

    return m, radius, sampler


def vanishing_cycle(system: HamiltonianSystem, saddle_index: int, t) -> FiberCycle:
    """Cycle on ``f = t`` over a small x-circle around the two branch points that merge at the saddle."""
    if saddle_index not in (1, 2):
        raise ValueError("saddle index must be 1 or 2")
    saddle = system.loop.saddle1 if saddle_index == 1 else system.loop.saddle2
    m, radius, sampler = _raw_vanishing(system, saddle, t)
    s = system.loop.annulus_sign * t
    x, y, dx, _ = sampler(64)
    c, B, _ = _hyperelliptic(system.f)
    wv = y + P1.polyval(x, B) / (2 * c)
    lead = np.mean(wv * dx) / _TWO_PI_I / s
    base = 1 if lead.real > 0 else -1
    orient = base * _orientation_factor(system, saddle_index)
    path = BasePath((Arc(complex(m), radius, 0.0, 2 * math.pi),))
    return FiberCycle(complex(t), f"vanishing{saddle_index}", sampler, orient, (), 0.0, 1.0,
                      path if orient > 0 else path.reversed(), (complex(x[0]), complex(y[0])),
                      saddle_index)


def _orientation_factor(system, saddle_index):
    """Sign fixing the corner-integral jump identity, calibrated once per saddle with ``y dx``."""
    key = (system.f.key, system.loop.saddle1.location, saddle_index)
    if key not in _ORIENT:
        from .dulac import corner_map
        cal = system.with_omega(OneForm.from_terms([(0, 0, 1, 1.0)], []))
        s = -system.loop.depth / 50
        t = system.loop.annulus_sign * s
        saddle = system.loop.saddle1 if saddle_index == 1 else system.loop.saddle2
        _, _, sampler = _raw_vanishing(system, saddle, t)
        x, y, dx, _ = sampler(64)
        c, B, _ = _hyperelliptic(system.f)
        wv = y + P1.polyval(x, B) / (2 * c)
        base = 1 if (np.mean(wv * dx) / _TWO_PI_I / s).real > 0 else -1
        I = base * _integrate(sampler, *cal.omega.leading)
        cm = corner_map(cal, 0.0, saddle_index)
        jump = cm.evaluate(s, math.pi)[1] - cm.evaluate(s, -math.pi)[1]
        _ORIENT[key] = 1 if (jump / I).real > 0 else -1
    return _ORIENT[key]


# ---------------------------------------------------------------------------
# integrals

def _integrate(sampler, Pw: Polynomial2, Qw: Polynomial2, n0=32, tol=1e-11, max_doublings=16):
    prev = None
    n = n0
    for _ in range(max_doublings + 1):
        x, y, dx, dy = sampler(n)
        val = complex(np.mean(Pw(x, y) * dx + Qw(x, y) * dy))
        if prev is not None and abs(val - prev) < tol * (1 + abs(val)):
            return val
        prev = val
        n *= 2
    raise NoConvergence("Abelian integral did not converge", "abelian_integral")


def abelian_integral(cycle: FiberCycle, omega0) -> complex:
    """Integral of ``omega0 = (P, Q)`` (or a OneForm's leading part) over ``cycle``.

    Periodic trapezoid rule in the cycle's parameter, doubled until the value
    settles to ``1e-11 (1 + |value|)``.
    """
    if isinstance(omega0, OneForm):
        omega0 = omega0.leading
    if cycle.kind == "composite":
        return sum(abelian_integral(c, omega0) for c in cycle.components)
    return cycle.orientation * _integrate(cycle.sampler, *omega0)


def default_grid(system: HamiltonianSystem, n: int = 16) -> np.ndarray:
    s0 = system.loop.depth / 4
    return s0 * 2.0 ** -np.arange(n)


def melnikov_M1(system: HamiltonianSystem, grid: Sequence[float] | None = None
                ) -> AbelianIntegralSamples:
    """``M1(s)``: integral of the leading one-form over the periodic orbit at each ``s``."""
    grid = default_grid(system) if grid is None else np.asarray(grid, float)
    om = system.omega.leading
    vals = np.array([abelian_integral(periodic_orbit(system, system.loop.annulus_sign * s), om)
                     for s in grid])
    if np.all(np.abs(vals.imag) <= 1e-10 * (1 + np.abs(vals))):
        vals = vals.real
    return AbelianIntegralSamples("periodic", grid, vals)


def vanishing_parts(system: HamiltonianSystem, grid=None):
    """``f1``, ``f2`` on the grid: vanishing-cycle integrals over ``2 pi i``, second cycle reversed."""
    grid = default_grid(system) if grid is None else np.asarray(grid, float)
    om = system.omega.leading
    out = []
    for idx, sgn in ((1, 1), (2, -1)):
        vals = np.array([sgn * abelian_integral(
            vanishing_cycle(system, idx, system.loop.annulus_sign * s), om) / _TWO_PI_I
            for s in grid])
        out.append(AbelianIntegralSamples(f"vanishing{idx}", grid, vals.real))
    return tuple(out)


def decompose_log(M1: AbelianIntegralSamples, f1: AbelianIntegralSamples,
                  f2: AbelianIntegralSamples) -> LogDecomposition:
    """Split ``M1 = (f1 + f2) log s + f3``; report the curvature of ``f3`` as a smoothness diagnostic."""
    s = np.asarray(M1.grid, float)
    if not (np.array_equal(s, f1.grid) and np.array_equal(s, f2.grid)):
        raise PreconditionError("samples on different grids", "decompose_log")
    fsum = np.real(f1.values) + np.real(f2.values)
    f3 = np.real(M1.values) - fsum * np.log(s)
    order = np.argsort(s)
    xs, ys = s[order], f3[order]
    curv = np.zeros(len(xs))
    if len(xs) >= 3:
        h0 = xs[1:-1] - xs[:-2]
        h1 = xs[2:] - xs[1:-1]
        curv[1:-1] = 2 * (h0 * ys[2:] - (h0 + h1) * ys[1:-1] + h1 * ys[:-2]) / (h0 * h1 * (h0 + h1))
    # a leftover log term would make the curvature grow like 1/s toward 0
    tail = np.abs(curv[1:4]).max() if len(xs) > 4 else 0.0
    bulk = np.abs(curv[1:-1]).max() if len(xs) > 2 else 0.0
    resid = float(tail / max(bulk, 1e-300)) if bulk else 0.0
    return LogDecomposition(s, fsum, f3, resid, curv[np.argsort(order)])


# ---------------------------------------------------------------------------
# asymptotic fits

def _fit(ls, llog, lv, q):
    A = np.column_stack([np.ones_like(ls), ls])
    coef, *_ = np.linalg.lstsq(A, lv - q * llog, rcond=None)
    return coef


def characteristic_number(samples, values=None, max_q: int = 3, holdout: int = 3
                          ) -> AsymptoticModel:
    """Fit ``c s^p (log s)^q`` to samples decaying toward ``s = 0``.

    Each ``q`` gets a least-squares fit of ``log|v| - q log|log s|`` against
    ``log s`` over the two decades just above the ``holdout`` smallest
    points; the ``q`` whose exponent snaps to a fraction with denominator at
    most 4 (within 0.02) and best predicts the held-out points wins.
    """
    if values is None:
        grid, values = samples.grid, samples.values
    else:
        grid = samples
    s = np.asarray(grid, float)
    v = np.real(np.asarray(values))
    order = np.argsort(s)[::-1]
    s, v = s[order], v[order]
    if len(s) < 12 or math.log10(s.max() / s.min()) < 3 - 1e-9:
        raise PreconditionError("need >= 12 points spanning >= 3 decades", "characteristic_number")
    if np.any(v == 0):
        raise PreconditionError("samples vanish; no leading term", "characteristic_number")
    if np.any(s >= 1):
        raise PreconditionError("grid must lie in (0, 1)", "characteristic_number")
    ls, llog, lv = np.log(s), np.log(np.abs(np.log(s))), np.log(np.abs(v))
    s_h = s[len(s) - holdout]
    fit_sl = (s > s_h) & (s <= s_h * 100 * (1 + 1e-9))
    best = None
    for q in range(max_q + 1):
        a, p = _fit(ls[fit_sl], llog[fit_sl], lv[fit_sl], q)
        pred = a + p * ls + q * llog
        held = float(np.sqrt(np.mean((pred[-holdout:] - lv[-holdout:]) ** 2)))
        rms = float(np.sqrt(np.mean((pred[fit_sl] - lv[fit_sl]) ** 2)))
        snap = Fraction(float(p)).limit_denominator(4)
        near = abs(float(snap) - p) <= 0.02
        score = held + rms + (0.0 if near else 1.0)
        if best is None or score < best[0]:
            best = (score, q, p, a, rms, snap, near)
    _, q, p, a, rms, snap, near = best
    _check_tail(ls, llog, lv, q)
    if not near:
        warnings.warn(f"exponent {p:.4f} is not close to a fraction with denominator <= 4")
        pfrac = Fraction(float(p)).limit_denominator(1000)
    else:
        pfrac = snap
    # refit c with the snapped exponent on the fitting window
    a = float(np.mean(lv[fit_sl] - float(pfrac) * ls[fit_sl] - q * llog[fit_sl])) if near else a
    sgn = np.sign(np.median(v * np.sign(np.log(s)) ** q))
    return AsymptoticModel(pfrac, int(q), float(sgn * math.exp(a)), rms, bool(near))


def _check_tail(ls, llog, lv, q):
    """Exponents fitted on the two smallest decades must agree to 0.1."""
    lo = ls.min()
    dec = math.log(10)
    w1 = ls <= lo + dec + 1e-9
    w2 = (ls > lo + dec + 1e-9) & (ls <= lo + 2 * dec + 1e-9)
    if w1.sum() < 2 or w2.sum() < 2:
        return
    p1 = _fit(ls[w1], llog[w1], lv[w1], q)[1]
    p2 = _fit(ls[w2], llog[w2], lv[w2], q)[1]
    if abs(p1 - p2) > 0.1:
        raise NoisyTail(f"tail exponents disagree ({p1:.3f} vs {p2:.3f})", "characteristic_number")


@dataclass(frozen=True)
class MdEstimate:
    d: int | None
    Md: complex
    slope: float
    increments: np.ndarray
    eps_grid: np.ndarray
    check: float | None = None  # relative gap to the Abelian integral when d = 1

    def __iter__(self):
        return iter((self.d, self.Md))


def estimate_Md(system: HamiltonianSystem, family: FiberCycle, t, eps_grid, d_max: int = 4
                ) -> MdEstimate:
    """Leading order ``d`` and coefficient ``M_d(t)`` of ``h_eps(t) - t`` along ``family``.

    ``h`` is the holonomy of the perturbed foliation (f-units).  The order is
    the snapped log-log slope; ``M_d`` is Richardson-extrapolated from
    ``(h - t)/eps^d``.
    """
    eps = np.sort(np.asarray(eps_grid, float))[::-1]
    if len(eps) < 2:
        raise PreconditionError("need at least two eps values", "estimate_Md")
    if len(eps) >= 3 and eps[0] / eps[-1] < 100 - 1e-9:
        raise PreconditionError("eps grid must span two decades", "estimate_Md")
    if system.omega.is_zero():
        return MdEstimate(None, 0j, float("nan"), np.zeros(len(eps)), eps)
    inc = np.array([holonomy_transport(system, e, t, family, t) - t for e in eps])
    scale = max(1.0, abs(t))
    if np.all(np.abs(inc) < 1e-13 * scale):
        return MdEstimate(None, 0j, float("nan"), inc, eps)
    slope = float(np.polyfit(np.log(eps), np.log(np.abs(inc)), 1)[0])
    d = int(round(slope))
    if abs(slope - d) > 0.1 or not 1 <= d <= d_max:
        raise OrderAmbiguous(f"fitted order {slope:.3f}", "estimate_Md")
    ratios = inc / eps ** d
    deg = min(2, len(eps) - 1)
    Md = complex(np.polyval(np.polyfit(eps, ratios.real, deg), 0.0))
    if np.iscomplexobj(ratios) and np.any(np.abs(ratios.imag) > 0):
        Md += 1j * float(np.polyval(np.polyfit(eps, ratios.imag, deg), 0.0))
    check = None
    if d == 1:
        ref = -abelian_integral(family, system.omega.leading)
        check = abs(Md - ref) / max(abs(ref), 1e-300)
    return MdEstimate(d, Md, slope, inc, eps, check)
