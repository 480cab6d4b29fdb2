"""Dulac (corner) maps of the perturbed foliation and the zero locus of their imaginary part.

The corner map of a saddle runs from the section ``sigma`` to the section
``tau`` along the leaves, past the saddle.  Both sections are parameterised
by the normalised level ``s = annulus_sign * f`` (the same parametrization
for every ``eps``), so the map is the identity at ``eps = 0`` and, for
``eps != 0``, it branches at the point ``s_i(eps)`` where the perturbed
separatrix of the saddle meets ``sigma``.

Values off the real transit range are obtained by analytic continuation in
complex time: near a hyperbolic saddle the transit time behaves like
``-log(z - s_i) / lambda``, so turning ``z`` around ``s_i`` by an angle
``theta`` adds ``-i theta / lambda`` to the time.  The imaginary part of the
time is spent next to the saddle, where the complex flow is a rotation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .complex_flow import (PRECISE, IntegratorConfig, LiftedLeafPath, _section_newton, flow,
                           flow_to_section, perturbed_saddle, separatrix_crossing)
from .errors import (NumericError, PreconditionError, SectionMiss, SeedDivergence,
                     TwoLoopError)
from .system_model import HamiltonianSystem

_ARG_STEP = math.pi / 8


@dataclass(frozen=True)
class CoveringPoint:
    """``z = rho * exp(i phi)`` on the universal cover of the punctured section."""

    rho: float
    phi: float

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")

    @property
    def z(self) -> complex:
        return self.rho * complex(math.cos(self.phi), math.sin(self.phi))

    def conjugate(self) -> "CoveringPoint":
        return CoveringPoint(self.rho, -self.phi)


@dataclass(frozen=True)
class DulacSample:
    input: CoveringPoint
    value: complex
    eps: float
    saddle_index: int
    lift: LiftedLeafPath | None = field(default=None, repr=False)
    integral: complex = 0j  # integral of the leading one-form along the corner path
    time: complex = 0j


@dataclass(frozen=True)
class ZeroLocusCurve:
    eps: float
    saddle_index: int
    samples: np.ndarray  # rows (u, v)
    predicted: np.ndarray
    residuals: np.ndarray
    order: int = 1
    gaps: tuple = ()

    def to_rows(self):
        return [(float(u), float(v), float(p), float(r))
                for (u, v), p, r in zip(self.samples, self.predicted, self.residuals)]


def _toward_point(loop, index):
    """A point on the σ-side separatrix of the saddle, about 0.1 away from it."""
    conn = loop.upper_connection
    pts = conn if index == 2 else conn[::-1]
    p0 = pts[0]
    d = np.hypot(pts[:, 0] - p0[0], pts[:, 1] - p0[1])
    k = int(np.searchsorted(d, 0.1))
    return pts[min(k, len(pts) - 1)]


class CornerMap:
    """Dulac map of saddle ``index`` (1 or 2) of ``system`` at fixed ``eps``.

    Saddle 1 is passed by the forward flow from ``sigma``, saddle 2 by the
    backward flow.  ``evaluate`` takes ``z`` together with a continuous
    argument of ``z - branch`` and returns the continued value.
    """

    def __init__(self, system: HamiltonianSystem, eps: float, index: int,
                 config: IntegratorConfig = PRECISE):
        if index not in (1, 2):
            raise ValueError("saddle index must be 1 or 2")
        loop = system.loop
        self.system, self.eps, self.index, self.config = system, float(eps), index, config
        self.sign = loop.annulus_sign
        self.direction = 1.0 if index == 1 else -1.0
        self.saddle = loop.saddle1 if index == 1 else loop.saddle2
        self.sigma, self.tau = loop.sigma, loop.tau
        p, lam, _ = perturbed_saddle(system, eps, self.saddle)
        self.point = p
        # unstable eigenvalue of the field followed by the lift, direction * X_eps
        self.lam = float(lam[0] if index == 1 else -lam[1])
        self.depth = loop.depth

    @cached_property
    def branch(self) -> float:
        """``s_i(eps)``: where the perturbed separatrix through the saddle meets ``sigma``."""
        if self.eps == 0.0:
            return 0.0
        kind = "stable" if self.index == 1 else "unstable"
        x, y = separatrix_crossing(self.system, self.eps, self.saddle, kind, self.sigma,
                                   _toward_point(self.system.loop, self.index), self.config)
        return float(self.sign * self.system.f(x.real, y.real).real)

    # -- real transit ------------------------------------------------------
    def _start(self, z, w0):
        w = self.sigma.locate(self.system.f, self.sign * z, w0=w0)
        x, y = self.sigma.point(w)
        return w, np.array([x, y, 0j], np.complex128)

    @cached_property
    def _w_anchor(self):
        return 1.0

    def real_transit(self, s: float):
        """Real time, split time and endpoint of the transit from the σ-point at level ``s``."""
        w, X = self._start(complex(s), self._w_anchor)
        Xe, T = flow_to_section(self.system, self.eps, X, self.tau, self.direction, self.config,
                                return_time=True, t_max=200.0)
        T = T.real
        _, (ts, tX) = flow(self.system, self.eps, X, self.direction * T, self.config,
                           form="none", record=True)
        dist = np.hypot(np.abs(tX[:, 0] - self.point[0]), np.abs(tX[:, 1] - self.point[1]))
        t_split = float(ts[int(np.argmin(dist))])
        return w, T, t_split, Xe

    # -- complex transit ---------------------------------------------------
    def _transit(self, X, T, t_split):
        d = self.direction
        cfg = self.config
        X = flow(self.system, self.eps, X, d * t_split, cfg)
        X = flow(self.system, self.eps, X, d * 1j * T.imag, cfg)
        X = flow(self.system, self.eps, X, d * (T.real - t_split), cfg)
        X, dT = _section_newton(self.system, self.eps, X, self.tau, d, cfg, None)
        return X, T + dT

    def evaluate(self, z: complex, arg: float, warm=None):
        """Continue the corner map to ``z``, where ``arg`` is a continuous argument of ``z - branch``.

        Returns ``(value, integral, time, state)``; ``state`` warm-starts a
        nearby evaluation.
        """
        b = self.branch
        rho = abs(z - b)
        if rho == 0.0:
            raise PreconditionError("z sits on the branch point", "dulac_map")
        if warm is not None:
            try:
                return self._from_warm(z, rho, arg, warm)
            except TwoLoopError:
                pass
        w, T0, t_split, Xe = self.real_transit(b + rho)
        if arg == 0.0:
            X, T = Xe, complex(T0)
        else:
            n = max(1, math.ceil(abs(arg) / _ARG_STEP))
            T = complex(T0)
            th_prev = 0.0
            for k in range(1, n + 1):
                th = arg * k / n
                zk = b + rho * complex(math.cos(th), math.sin(th))
                w, X0 = self._start(zk, w)
                X, T = self._transit(X0, T - 1j * (th - th_prev) / self.lam, t_split)
                th_prev = th
        state = (rho, arg, w, T, t_split)
        return self._value(X), complex(X[2]), T, state

    def _from_warm(self, z, rho, arg, warm):
        rho_w, arg_w, w, T, t_split = warm
        if abs(arg - arg_w) > _ARG_STEP or abs(math.log(rho / rho_w)) > 0.7:
            raise SectionMiss("warm start too far away")
        w, X0 = self._start(z, w)
        T = T - (math.log(rho / rho_w) + 1j * (arg - arg_w)) / self.lam
        X, T = self._transit(X0, T, t_split)
        return self._value(X), complex(X[2]), T, (rho, arg, w, T, t_split)

    def _value(self, X):
        return complex(self.sign * self.system.f(X[0], X[1]))

    def record_path(self, z, state) -> LiftedLeafPath:
        """Sampled leaf path of an evaluation (for provenance and export)."""
        rho, arg, w, T, t_split = state
        _, X = self._start(z, w)
        d = self.direction
        pts, params = [], []
        offset = 0.0
        for dT in (d * t_split, d * 1j * T.imag, d * (T.real - t_split)):
            X, (rs, rX) = flow(self.system, self.eps, X, dT, self.config, record=True)
            params.extend(offset + rs)
            pts.extend(rX[:, :2])
            offset += abs(dT)
        arr = np.empty((len(pts), 3), np.complex128)
        arr[:, 0] = np.asarray(params) / max(offset, 1e-300)
        arr[:, 1:] = np.asarray(pts)
        drift = 0.0
        if self.eps == 0.0:
            fv = self.system.f(arr[:, 1], arr[:, 2])
            drift = float(np.max(np.abs(fv - fv[0])))
        return LiftedLeafPath(arr, self.eps, drift, complex(X[2]), 0)


_CORNERS: dict = {}


def corner_map(system, eps, index, config=PRECISE) -> CornerMap:
    key = (system.key, float(eps), index, config)
    cm = _CORNERS.get(key)
    if cm is None:
        if len(_CORNERS) > 256:
            _CORNERS.clear()
        cm = _CORNERS[key] = CornerMap(system, eps, index, config)
    return cm


def covering_arg(z: CoveringPoint, branch: float) -> float:
    """Continuous argument of ``z - branch`` along the arc ``rho e^{i psi}``, ``psi: 0 -> phi``.

    At ``psi = 0`` the argument is 0 if ``rho > branch`` and ``pi`` otherwise
    (the real point then lies left of the branch point and is reached
    through the upper half plane).
    """
    a0 = 0.0 if z.rho > branch else math.pi
    if z.phi == 0.0:
        return a0
    n = max(16, int(64 * abs(z.phi)))
    psi = np.linspace(0.0, z.phi, n + 1)
    pts = z.rho * np.exp(1j * psi) - branch
    ang = np.unwrap(np.angle(pts))
    return float(a0 + ang[-1] - ang[0])


def dulac_map(system: HamiltonianSystem, eps: float, saddle_index: int, z: CoveringPoint,
              config: IntegratorConfig = PRECISE, keep_path: bool = False) -> DulacSample:
    """Value of the corner map of ``saddle_index`` at the covering point ``z``."""
    cm = corner_map(system, eps, saddle_index, config)
    arg = covering_arg(z, cm.branch)
    value, integral, T, state = cm.evaluate(z.z, arg)
    lift = cm.record_path(z.z, state) if keep_path else None
    return DulacSample(z, value, float(eps), saddle_index, lift, integral, T)


def corner_integral(system, saddle_index, z: complex, arg: float, config=PRECISE) -> complex:
    """Integral of the leading one-form along the unperturbed corner path at ``z``."""
    cm = corner_map(system, 0.0, saddle_index, config)
    return cm.evaluate(z, arg)[1]


def corner_first_order(system, saddle_index, z: complex, arg: float = 0.0, config=PRECISE):
    """First-order coefficient ``J`` in ``d_eps(z) = z + eps J(z) + O(eps^2)``."""
    return -system.loop.annulus_sign * corner_integral(system, saddle_index, z, arg, config)


def probe_sector(system, eps, saddle_index, phis, config=PRECISE, levels: int = 12):
    """Largest admissible ``rho`` per argument, on the ladder ``0.999 * depth * 2^-k``."""
    depth = system.loop.depth
    table = {}
    for phi in phis:
        radius = 0.0
        for k in range(levels):
            rho = 0.999 * depth * 2.0 ** -k
            try:
                s = dulac_map(system, eps, saddle_index, CoveringPoint(rho, float(phi)), config)
            except (TwoLoopError, ValueError, FloatingPointError):
                continue
            if np.isfinite(s.value):
                radius = rho
                break
        table[float(phi)] = radius
    return table


def _im_d(cm, u, v, warm):
    b = cm.branch
    arg = math.atan2(v, u - b) % (2 * math.pi)
    val, _, _, state = cm.evaluate(complex(u, v), arg, warm)
    return val.imag, state


def _secant(cm, u, v0, warm, tol=1e-10, maxit=40):
    scale = max(abs(v0), 1e-9)
    g0, warm = _im_d(cm, u, v0, warm)
    v1 = v0 + 1e-3 * scale if v0 != 0 else 1e-9
    g1, warm = _im_d(cm, u, v1, warm)
    for _ in range(maxit):
        if abs(g1) < tol and abs(v1 - v0) < 1e-6 * scale + 1e-15:
            return v1, g1, warm
        if g1 == g0:
            break
        v2 = v1 - g1 * (v1 - v0) / (g1 - g0)
        v0, g0 = v1, g1
        v1 = v2
        g1, warm = _im_d(cm, u, v1, warm)
    if abs(g1) < tol:
        return v1, g1, warm
    raise SeedDivergence(f"Im d did not vanish near u = {u}")


def first_order_jump(system, u: float, saddle_index: int) -> complex:
    """Integral of the leading one-form over the vanishing cycle at normalised level ``u < 0``."""
    from .melnikov import abelian_integral, vanishing_cycle
    t = system.loop.annulus_sign * u
    return abelian_integral(vanishing_cycle(system, saddle_index, t), system.omega.leading)


def locus_prediction(system, eps, saddle_index, us, order=None):
    """Leading-order imaginary part ``v`` of the zero locus above the points ``us``.

    With first-order term present this is ``sign * eps * I(u) / (2i)`` where
    ``I(u)`` is the vanishing-cycle integral; otherwise the leading holonomy
    coefficient of the vanishing cycle is estimated numerically.
    """
    from .melnikov import estimate_Md, vanishing_cycle
    sign = system.loop.annulus_sign
    jumps = np.array([first_order_jump(system, u, saddle_index) for u in us])
    scale = max(1.0, float(np.max(np.abs(us))))
    if order == 1 or (order is None and np.max(np.abs(jumps)) > 1e-12 * scale):
        return 1, (sign * eps * jumps / 2j).real
    preds = []
    d_found = None
    for u in us:
        t = sign * u
        cyc = vanishing_cycle(system, saddle_index, t)
        d, Md = estimate_Md(system, cyc, t, eps_grid=[eps * 4, eps * 2, eps], d_max=4)
        d_found = d
        preds.append((-sign * eps ** d * Md / 2j).real)
    return d_found, np.array(preds)


def trace_zero_locus(system: HamiltonianSystem, eps: float, saddle_index: int, u_range,
                     n_samples: int = 10, config: IntegratorConfig = PRECISE) -> ZeroLocusCurve:
    """Solve ``Im d_eps(u + i v) = 0`` for ``v`` over a geometric grid of ``u < 0``.

    The locus is traced on the sheet reached through the upper half plane
    (argument of ``z - branch`` in ``(0, 2 pi)``); its mirror image is the
    conjugate.
    """
    if eps == 0.0 or system.omega.is_zero():
        raise PreconditionError("zero locus needs a nonzero perturbation", "trace_zero_locus")
    u_min, u_max = map(float, u_range)
    if not u_min < u_max < 0:
        raise PreconditionError("need u_min < u_max < 0", "trace_zero_locus")
    us = -np.geomspace(-u_max, -u_min, n_samples)
    order, pred = locus_prediction(system, eps, saddle_index, us)
    cm = corner_map(system, eps, saddle_index, config)
    vs = np.full(n_samples, np.nan)
    res = np.full(n_samples, np.nan)
    warm = None
    gaps = []
    for k, (u, vp) in enumerate(zip(us, pred)):
        seed = vs[k - 1] + (pred[k] - pred[k - 1]) if k and np.isfinite(vs[k - 1]) else vp
        try:
            v, g, warm = _secant(cm, u, seed, warm)
        except (SeedDivergence, NumericError, ValueError):
            try:
                v, g, warm = _secant(cm, u, vp, None)
            except (SeedDivergence, NumericError, ValueError):
                gaps.append(float(u))
                warm = None
                continue
        vs[k], res[k] = v, abs(g)
    if len(gaps) == n_samples:
        raise SeedDivergence("zero locus could not be traced at any u")
    order_idx = np.argsort(us)
    samples = np.column_stack([us, vs])[order_idx]
    curve = ZeroLocusCurve(float(eps), saddle_index, samples, pred[order_idx], res[order_idx],
                           order, tuple(sorted(gaps)))
    return curve


def locus_continuity(curve: ZeroLocusCurve) -> bool:
    """No branch jumps: ``|dv| <= 3 * |(du, dv_pred)|`` between neighbours."""
    u, v = curve.samples[:, 0], curve.samples[:, 1]
    p = curve.predicted
    ok = np.isfinite(v)
    u, v, p = u[ok], v[ok], p[ok]
    dv = np.abs(np.diff(v))
    inc = np.hypot(np.diff(u), np.diff(p))
    return bool(np.all(dv <= 3 * inc))
