"""Leaves of the complexified foliation ``df + eps*omega = 0``.

Leaves are followed either in complex time (the vector field
``(f_y + eps Q, -(f_x + eps P))``) or by lifting a base path drawn in the x- or
y-plane.  All heavy lifting happens in :mod:`twoloop._rk`.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import _rk
from .errors import (BudgetExceeded, NotClosed, PreconditionError, SaddleLost,
                     SectionMiss, StepBudgetExceeded, TransversalityLost)
from .system_model import CriticalPoint, Foliation, Section

_NOFORM = np.zeros((1, 1), np.complex128)
_EMPTY_S = np.zeros(1)
_EMPTY_X = np.zeros((1, 3), np.complex128)


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-10
    max_steps: int = 200_000
    transversality_floor: float = 1e-8
    # axis switch when |den| < switch_ratio * |other|; see ledger
    switch_ratio: float = 0.2

    def __post_init__(self):
        for v in (self.rel_tol, self.abs_tol):
            if not 0 < v <= 1e-2:
                raise ValueError("tolerances must lie in (0, 1e-2]")

    def tightened(self, factor: float) -> "IntegratorConfig":
        return replace(self, rel_tol=self.rel_tol / factor, abs_tol=self.abs_tol / factor)


DEFAULT = IntegratorConfig()
PRECISE = IntegratorConfig(rel_tol=1e-12, abs_tol=1e-13)


@dataclass(frozen=True)
class Arc:
    center: complex
    radius: float
    arg_from: float
    arg_to: float

    def at(self, s):
        return self.center + self.radius * np.exp(1j * (self.arg_from + (self.arg_to - self.arg_from) * s))

    @property
    def length(self):
        return abs(self.radius * (self.arg_to - self.arg_from))

    def reversed(self):
        return Arc(self.center, self.radius, self.arg_to, self.arg_from)

    def conjugate(self):
        return Arc(np.conj(self.center), self.radius, -self.arg_from, -self.arg_to)

    def _params(self):
        return _rk.ARC, complex(self.center), 0j, float(self.radius), float(self.arg_from), float(self.arg_to)


@dataclass(frozen=True)
class Line:
    start: complex
    end: complex

    def at(self, s):
        return self.start + (self.end - self.start) * s

    @property
    def length(self):
        return abs(self.end - self.start)

    def reversed(self):
        return Line(self.end, self.start)

    def conjugate(self):
        return Line(np.conj(self.start), np.conj(self.end))

    def _params(self):
        return _rk.LINE, complex(self.start), complex(self.end), 0.0, 0.0, 0.0


@dataclass(frozen=True)
class BasePath:
    segments: tuple
    projection_axis: str = "x"

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if self.projection_axis not in ("x", "y"):
            raise ValueError("projection_axis must be 'x' or 'y'")
        for a, b in zip(self.segments, self.segments[1:]):
            if abs(a.at(1.0) - b.at(0.0)) > 1e-12 * max(1.0, abs(b.at(0.0))):
                raise ValueError("base path pieces do not join")

    @property
    def start(self):
        return complex(self.segments[0].at(0.0))

    @property
    def end(self):
        return complex(self.segments[-1].at(1.0))

    @property
    def length(self):
        return sum(p.length for p in self.segments)

    def reversed(self) -> "BasePath":
        return BasePath(tuple(p.reversed() for p in reversed(self.segments)), self.projection_axis)

    def conjugate(self) -> "BasePath":
        return BasePath(tuple(p.conjugate() for p in self.segments), self.projection_axis)

    def __add__(self, other: "BasePath") -> "BasePath":
        return BasePath(self.segments + other.segments, self.projection_axis)


@dataclass(frozen=True)
class LiftedLeafPath:
    samples: np.ndarray = field(repr=False)  # columns: param, x, y
    eps: float = 0.0
    f_drift: float = 0.0
    integral: complex = 0j
    switches: int = 0

    @property
    def endpoint(self):
        return complex(self.samples[-1, 1]), complex(self.samples[-1, 2])

    @property
    def start(self):
        return complex(self.samples[0, 1]), complex(self.samples[0, 2])


# ---------------------------------------------------------------------------
# low-level wrappers

def _form(fol, form):
    if form is None:
        return fol.form_arrays()
    if form == "none":
        return _NOFORM, _NOFORM
    return form[0].carr, form[1].carr


def _call(X, s0, s1, mode, e, arrays, form_arrays, piece, config, event=None,
          kappa=0.0, record=False, rec_max=0):
    Ax, Ay = arrays
    Wp, Wq = form_arrays
    kind, c0, c1, r, th0, th1 = piece if piece is not None else (0, 0j, 0j, 0.0, 0.0, 0.0)
    if event is None:
        ev = (False, 0j, 0j, 0j, 0, 0.0)
    else:
        ev = (True,) + tuple(event)
    if record:
        rec_s = np.empty(rec_max)
        rec_X = np.empty((rec_max, 3), np.complex128)
    else:
        rec_s, rec_X = _EMPTY_S, _EMPTY_X
    out = _rk.integrate(np.asarray(X, np.complex128), float(s0), float(s1), mode, complex(e),
                        Ax, Ay, Wp, Wq, kind, c0, c1, r, th0, th1,
                        config.rel_tol, config.abs_tol, config.max_steps, 0.0,
                        ev[0], ev[1], ev[2], ev[3], ev[4], ev[5],
                        float(kappa), config.transversality_floor,
                        record, rec_s, rec_X)
    status, s, Xf, s_prev, X_prev, nsteps, nrec = out
    rec = (rec_s[:nrec], rec_X[:nrec]) if record else None
    return status, s, Xf, s_prev, X_prev, rec


def flow(fol: Foliation, eps: float, X, T: complex, config: IntegratorConfig = PRECISE,
         form=None, record=False, rec_max=200_000):
    """Follow the leaf through ``X = (x, y, I)`` along the straight complex-time segment ``[0, T]``."""
    X = np.asarray(X, np.complex128)
    if len(X) == 2:
        X = np.array([X[0], X[1], 0j])
    T = complex(T)
    L = abs(T)
    if L == 0.0:
        return (X.copy(), (np.zeros(1), X[None, :].copy())) if record else X.copy()
    status, s, Xf, _, _, rec = _call(X, 0.0, L, 0, T / L, fol.field_arrays(eps), _form(fol, form),
                                     None, config, record=record, rec_max=rec_max)
    if status == _rk.BUDGET:
        raise StepBudgetExceeded("step budget exceeded in complex-time flow", "flow")
    if status != _rk.OK:
        raise TransversalityLost(f"complex-time flow failed (status {status})", "flow")
    return (Xf, rec) if record else Xf


def flow_polyline(fol, eps, X, increments, config=PRECISE, form=None):
    """Flow along consecutive complex-time increments."""
    for dT in increments:
        X = flow(fol, eps, X, dT, config, form)
    return X


def _section_newton(fol, eps, X, section: Section, direction, config, form, maxit=30, tol=1e-14):
    """Move along the leaf by a complex time so that ``X`` lands on ``section``."""
    l0, l1, l2 = section.functional
    scale = abs(l1) + abs(l2)
    total = 0j
    for _ in range(maxit):
        Ax, Ay = fol.field_arrays(eps)
        ax = _rk.peval(Ax, X[0], X[1])
        ay = _rk.peval(Ay, X[0], X[1])
        g = l0 + l1 * X[0] + l2 * X[1]
        dg = direction * (l1 * ay - l2 * ax)
        if dg == 0:
            raise SectionMiss("leaf tangent to section")
        dT = -g / dg
        X = flow(fol, eps, X, direction * dT, config, form)
        total += dT
        if abs(g) <= tol * scale * max(1.0, abs(X[0]) + abs(X[1])):
            break
    else:
        raise SectionMiss("Newton on the section did not converge")
    return X, total


def flow_to_section(fol, eps, X, section: Section, direction=1, config=PRECISE, form=None,
                    arm=1e-6, t_max=1e3, crossing=0, half=True, return_time=False):
    """Real-time flow (forwards if ``direction = +1``) until the next crossing of ``section``.

    Crossings are detected on the real part of the section's linear form.
    With ``half`` only crossings with a positive section parameter count.
    The final point is polished by Newton in complex time; with
    ``return_time`` the (complex) elapsed time is returned as well.
    """
    X = np.asarray(X, np.complex128)
    if len(X) == 2:
        X = np.array([X[0], X[1], 0j])
    l0, l1, l2 = section.functional
    (bx, by), (dx, dy) = section.base, section.direction
    arrays, warrays = fol.field_arrays(eps), _form(fol, form)
    elapsed = 0.0
    while elapsed < t_max:
        status, s, Xf, s_prev, X_prev, _ = _call(
            X, 0.0, t_max - elapsed, 0, complex(direction), arrays, warrays, None,
            config, event=(l0, l1, l2, crossing, arm))
        if status != _rk.EVENT:
            break
        w = ((Xf[0] - bx) * np.conj(dx) + (Xf[1] - by) * np.conj(dy)).real
        if not half or w > 0:
            Xs, dT = _section_newton(fol, eps, X_prev, section, direction, config, form)
            return (Xs, elapsed + s_prev + dT) if return_time else Xs
        elapsed += s
        X, arm = Xf, 0.0
    raise SectionMiss(f"no section crossing within time {t_max}")


# ---------------------------------------------------------------------------
# base-path lifting

def _lift_piece(fol, eps, X, piece, axis, s0, config, form, kappa):
    mode = 1 if axis == "x" else 2
    return _call(X, s0, 1.0, mode, 1.0, fol.field_arrays(eps), _form(fol, form), piece._params(),
                 config, kappa=kappa, record=True, rec_max=config.max_steps + 1)


def _rejoin(pieces, k, s_stop, target, n=4000):
    """First local minimum of ``|base - target|`` after the base path turns back."""
    grid = []
    for j in range(k, len(pieces)):
        lo = s_stop if j == k else 0.0
        ss = np.linspace(lo, 1.0, n)
        grid.extend((j, s, pieces[j].at(s)) for s in ss)
    d = np.array([abs(g[2] - target) for g in grid])
    seen_max = False
    for i in range(1, len(d) - 1):
        if not seen_max and d[i] >= d[i - 1] and d[i] > d[i + 1]:
            seen_max = True
        elif seen_max and d[i] <= d[i - 1] and d[i] <= d[i + 1]:
            return grid[i][0], grid[i][1]
    if seen_max and d[-1] <= d[-2]:
        return grid[-1][0], grid[-1][1]
    return None


def lift_path(system: Foliation, eps: float, start, path: BasePath,
              config: IntegratorConfig = DEFAULT, form=None) -> LiftedLeafPath:
    """Lift ``path`` to the leaf through ``start``.

    Near a fold of the projection the lift re-projects on the other axis,
    crosses the fold, and rejoins the base path where it turns back.
    """
    axis = path.projection_axis
    other = "y" if axis == "x" else "x"
    ia = 0 if axis == "x" else 1
    x0, y0 = complex(start[0]), complex(start[1])
    if abs((x0, y0)[ia] - path.start) > 1e-10 * max(1.0, abs(path.start)):
        raise PreconditionError("start does not project onto the path start", "lift_path")
    Ax, Ay = system.field_arrays(eps)
    den0 = _rk.peval(Ay if axis == "x" else Ax, x0, y0)
    if abs(den0) < config.transversality_floor:
        raise TransversalityLost("foliation not transversal to the projection at start")
    X = np.array([x0, y0, 0j])
    pieces = path.segments
    npc = len(pieces)
    params = [0.0]
    pts = [X.copy()]
    switches = 0
    k, s0 = 0, 0.0
    while k < npc:
        status, s, Xf, _, _, rec = _lift_piece(system, eps, X, pieces[k], axis, s0, config,
                                               form, config.switch_ratio)
        params.extend(((k + rec[0][1:]) / npc).tolist())
        pts.extend(rec[1][1:])
        X = Xf
        if status == _rk.OK:
            k, s0 = k + 1, 0.0
            continue
        if status == _rk.BUDGET:
            raise StepBudgetExceeded("step budget exceeded while lifting")
        if status != _rk.FOLD:
            raise TransversalityLost(f"lift lost transversality (status {status})")
        # cross the fold on the other axis
        sw = _cross_fold(system, eps, X, pieces, k, s, axis, other, config, form)
        switches += 1
        Xc, k2, s2, cross_pts = sw
        pts.extend(cross_pts)
        params.extend([(k + s) / npc] * len(cross_pts))
        X = Xc
        k, s0 = k2, s2
    arr = np.empty((len(pts), 3), np.complex128)
    arr[:, 0] = params
    P = np.array(pts)
    arr[:, 1:] = P[:, :2]
    drift = 0.0
    if eps == 0.0:
        fv = system.f(P[:, 0], P[:, 1])
        drift = float(np.max(np.abs(fv - fv[0])))
    return LiftedLeafPath(arr, float(eps), drift, complex(X[2]), switches)


def _cross_fold(fol, eps, X, pieces, k, s, axis, other, config, form):
    Ax, Ay = fol.field_arrays(eps)
    ax = _rk.peval(Ax, X[0], X[1])
    ay = _rk.peval(Ay, X[0], X[1])
    da = _piece_speed(pieces[k], s)
    db = (-ax / ay if axis == "x" else -ay / ax) * da
    ib = 1 if axis == "x" else 0
    b0 = X[ib]
    direction = db / abs(db) if db != 0 else 1.0
    span = 4.0 * max(1.0, abs(b0))
    line = Line(b0, b0 + direction * span)
    status, s_b, Xb, _, _, rec = _lift_piece(fol, eps, X, line, other, 0.0, config, form, 1.0)
    if status not in (_rk.FOLD, _rk.OK):
        raise TransversalityLost(f"fold crossing failed (status {status})")
    ia = 0 if axis == "x" else 1
    where = _rejoin(pieces, k, s, Xb[ia])
    if where is None:
        raise TransversalityLost("base path does not return after the fold")
    k2, s2 = where
    target = pieces[k2].at(s2)
    pts = list(rec[1][1:])
    if abs(target - Xb[ia]) > 0:
        bridge = Line(complex(Xb[ia]), complex(target))
        st, _, Xb, _, _, rec2 = _lift_piece(fol, eps, Xb, bridge, axis, 0.0, config, form, 0.0)
        if st != _rk.OK:
            raise TransversalityLost("could not rejoin the base path after a fold")
        pts.extend(rec2[1][1:])
    if s2 >= 1.0:
        k2, s2 = k2 + 1, 0.0
    return Xb, k2, s2, pts


def _piece_speed(piece, s):
    if isinstance(piece, Line):
        return piece.end - piece.start
    w = piece.at(s)
    return 1j * (piece.arg_to - piece.arg_from) * (w - piece.center)


# ---------------------------------------------------------------------------
# saddles and separatrices

def perturbed_saddle(fol: Foliation, eps: float, saddle: CriticalPoint):
    """Newton refinement of the saddle of the perturbed field from the unperturbed one.

    Returns ``(location, eigenvalues, eigenvectors)`` of the real vector field
    ``(f_y + eps Q, -(f_x + eps P))``.
    """
    if eps == 0.0:
        Fx, Fy = fol.f.dx(), fol.f.dy()
    else:
        P, Q = fol.omega.at(eps)
        Fx, Fy = fol.f.dx() + P * eps, fol.f.dy() + Q * eps
    p = np.array(saddle.location, float)
    for _ in range(60):
        g = np.array([Fx(*p), Fy(*p)])
        J = np.array([[Fx.dx()(*p), Fx.dy()(*p)], [Fy.dx()(*p), Fy.dy()(*p)]])
        try:
            step = np.linalg.solve(J, g)
        except np.linalg.LinAlgError as exc:
            raise SaddleLost("singular Jacobian at the saddle") from exc
        p = p - step
        if np.hypot(*step) < 1e-15:
            break
    if np.hypot(Fx(*p), Fy(*p)) > 1e-11 or np.hypot(*(p - saddle.location)) > 0.25:
        raise SaddleLost(f"saddle not found near {saddle.location} at eps={eps}")
    # Jacobian of (Fy, -Fx)
    M = np.array([[Fy.dx()(*p), Fy.dy()(*p)], [-Fx.dx()(*p), -Fx.dy()(*p)]])
    lam, vec = np.linalg.eig(M)
    if np.iscomplexobj(lam) and np.any(np.abs(lam.imag) > 1e-12) or lam.real.prod() >= 0:
        raise SaddleLost("perturbed critical point is not a hyperbolic saddle")
    lam = lam.real
    order = np.argsort(lam)[::-1]
    return p, lam[order], vec.real[:, order]


def _oriented(v, sign):
    v = v / np.hypot(*v)
    ref = v[1] if abs(v[1]) > 1e-12 else v[0]
    return v * (1 if ref > 0 else -1) * sign


def separatrix_shoot(system: Foliation, eps: float, saddle: CriticalPoint, branch: str,
                     until: Callable | None = None, budget: float = 50.0,
                     config: IntegratorConfig = DEFAULT, offset: float = 1e-6,
                     strict: bool = True) -> np.ndarray:
    """Trajectory along one separatrix branch of the (perturbed) saddle.

    ``branch`` is ``stable+``, ``stable-``, ``unstable+`` or ``unstable-``;
    ``+`` selects the eigenvector with positive y-component.  Stable branches
    are integrated backwards in time.  Integration stops when ``until(point)``
    fires or the arclength ``budget`` is used up.
    """
    kind, _, sgn = branch.partition("-") if branch.endswith("-") else branch.partition("+")
    if kind not in ("stable", "unstable") or branch[-1] not in "+-":
        raise ValueError(f"unknown branch {branch!r}")
    p, lam, vec = perturbed_saddle(system, eps, saddle)
    v = vec[:, 0] if kind == "unstable" else vec[:, 1]
    v = _oriented(v, 1 if branch.endswith("+") else -1)
    direction = 1.0 if kind == "unstable" else -1.0
    X = np.array([p[0] + offset * v[0], p[1] + offset * v[1], 0j], np.complex128)
    out = [X[:2].copy()]
    length = 0.0
    chunk = 0.5
    while length < budget:
        Xn, (rs, rX) = flow(system, eps, X, direction * chunk, config, form="none", record=True)
        for q in rX[1:, :2]:
            length += np.hypot(abs(q[0] - out[-1][0]), abs(q[1] - out[-1][1]))
            out.append(q)
            if until is not None and until(q.real):
                return np.array(out)
            if length >= budget or abs(q[0]) + abs(q[1]) > 1e4:
                break
        X = Xn
        if abs(X[0]) + abs(X[1]) > 1e4:
            break
    if strict:
        raise BudgetExceeded("separatrix did not satisfy the stopping predicate")
    return np.array(out)


def separatrix_crossing(system: Foliation, eps: float, saddle: CriticalPoint, kind: str,
                        section: Section, toward, config: IntegratorConfig = PRECISE,
                        offset: float = 1e-7):
    """Point where the perturbed separatrix of ``kind`` ('stable'/'unstable') pointing toward ``toward`` meets ``section``."""
    p, lam, vec = perturbed_saddle(system, eps, saddle)
    v = vec[:, 0] if kind == "unstable" else vec[:, 1]
    v = v / np.hypot(*v)
    if np.dot(v, np.asarray(toward) - p) < 0:
        v = -v
    direction = 1.0 if kind == "unstable" else -1.0
    X = np.array([p[0] + offset * v[0], p[1] + offset * v[1], 0j], np.complex128)
    Xs = flow_to_section(system, eps, X, section, direction, config, form="none", arm=0.0,
                         t_max=200.0)
    return Xs[0], Xs[1]


# ---------------------------------------------------------------------------
# holonomy

def holonomy_transport(system, eps: float, t, loop, z, config: IntegratorConfig = PRECISE):
    """Holonomy of the perturbed foliation along ``loop`` (a fiber cycle at level ``t``).

    ``z`` is the f-value of the starting point on the loop's transversal.
    Periodic orbits use the real section ``sigma`` of the system and the real
    time flow (in the loop's orientation); loops given by a closed base path
    in the x-plane use the vertical section ``{x = x0}`` through their start.
    """
    if not loop.is_closed():
        raise NotClosed("fiber cycle is not closed")
    if loop.kind == "periodic":
        sec = system.loop.sigma
        w = sec.locate(system.f, z, w0=loop.section_w)
        X = np.array(sec.point(w) + (0j,), np.complex128)
        Xs = flow_to_section(system, eps, X, sec, loop.orientation, config, form="none",
                             arm=0.25 * loop.period, t_max=4.0 * loop.period + 10.0)
        return _maybe_real(system.f(Xs[0], Xs[1]), z)
    path = loop.base_path
    if path is None:
        raise PreconditionError("loop carries no base path", "holonomy_transport")
    x0 = path.start
    y0 = _solve_y(system.f, x0, z, loop.start[1])
    lifted = lift_path(system, eps, (x0, y0), path, config, form="none")
    x1, y1 = lifted.endpoint
    return complex(system.f(x1, y1))


def _maybe_real(v, z):
    v = complex(v)
    return v.real if isinstance(z, (float, int, np.floating)) else v


def _solve_y(f, x0, level, y_guess, maxit=60):
    fy = f.dy()
    y = complex(y_guess)
    for _ in range(maxit):
        r = f(x0, y) - level
        d = fy(x0, y)
        step = r / d
        y -= step
        if abs(step) < 1e-15 * max(1.0, abs(y)):
            break
    return y
