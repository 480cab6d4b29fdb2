"""Counting zeros of the displacement ``d1 - d2`` by the argument principle.

The displacement is analytic on the disk ``|z| < R`` cut along the real
axis to the left of ``s_hi = max(s1, s2)`` (one sheet, reached through the
upper half plane).  Its zeros there are bounded by the circle, the zero
locus of ``Im d_lo`` running from ``s_lo`` out to the circle, and the upper
side of ``[s_lo, s_hi]``; the lower half of the contour is the mirror
image, so only the upper half is ever evaluated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .complex_flow import PRECISE, IntegratorConfig, holonomy_transport
from .dulac import CoveringPoint, _secant, corner_map, covering_arg
from .errors import NumericError, PreconditionError, RefinementBudget, SmallModulus
from .system_model import HamiltonianSystem

FLOOR = 1e-12
SLIT_OFFSET = 1e-12


@dataclass(frozen=True)
class SaddleCriticalValues:
    eps: float
    s1: float
    s2: float
    swapped: bool = False  # True when saddle 2's value is the smaller one

    @property
    def lo_index(self):
        return 2 if self.swapped else 1

    @property
    def hi_index(self):
        return 1 if self.swapped else 2


@dataclass(frozen=True)
class ContourTrace:
    z: np.ndarray
    values: np.ndarray
    arg: np.ndarray  # unwrapped along the closed contour
    piece: np.ndarray  # piece label per sample, see PIECES
    winding: float
    eps: float = 0.0
    R: float = 0.0

    def rows(self):
        return [(float(z.real), float(z.imag), float(v.real), float(v.imag), float(a))
                for z, v, a in zip(self.z, self.values, self.arg)]


PIECES = ("circle", "locus", "slit", "locus_conj", "circle_conj")


@dataclass(frozen=True)
class CountReport:
    winding_count: int
    real_cycle_count: int
    bound: int | None
    eps: float
    R: float
    winding: float = 0.0
    real_roots: tuple = ()
    s_values: tuple = (0.0, 0.0)
    bound_exceeded: bool = False
    contour: ContourTrace | None = field(default=None, repr=False)

    def to_json(self):
        return {"winding_count": self.winding_count, "real_cycle_count": self.real_cycle_count,
                "bound": self.bound, "eps": self.eps, "R": self.R,
                "winding": round(self.winding, 9),
                "real_roots": [round(r, 12) for r in self.real_roots],
                "s1": self.s_values[0], "s2": self.s_values[1],
                "bound_exceeded": self.bound_exceeded}


def saddle_values(system: HamiltonianSystem, eps: float, config=PRECISE) -> SaddleCriticalValues:
    """Levels on ``sigma`` where the perturbed separatrices through the two saddles cross it."""
    b1 = corner_map(system, eps, 1, config).branch
    b2 = corner_map(system, eps, 2, config).branch
    if b1 <= b2:
        return SaddleCriticalValues(float(eps), b1, b2, False)
    return SaddleCriticalValues(float(eps), b2, b1, True)


def displacement(system, eps, z: CoveringPoint, config=PRECISE) -> complex:
    """``d1(z) - d2(z)`` with both corner maps on the common parametrization of ``sigma``."""
    out = []
    for idx in (1, 2):
        cm = corner_map(system, eps, idx, config)
        out.append(cm.evaluate(z.z, covering_arg(z, cm.branch))[0])
    return out[0] - out[1]


def return_map(system, eps, s: float, config=PRECISE) -> float:
    """Full return ``P_eps(s)`` on ``sigma`` in the normalised parameter."""
    from .melnikov import periodic_orbit
    sign = system.loop.annulus_sign
    t = sign * s
    cyc = _orbit_cache(system, t, periodic_orbit)
    return sign * holonomy_transport(system, eps, t, cyc, t, config)


_ORBITS: dict = {}


def _orbit_cache(system, t, make):
    key = (system.f.key, system.loop.saddle1.location, round(t, 14))
    if key not in _ORBITS:
        if len(_ORBITS) > 4096:
            _ORBITS.clear()
        _ORBITS[key] = make(system, t)
    return _ORBITS[key]


def displacement_via_return(system, eps, s: float, config=PRECISE) -> float:
    """``d2(P(s)) - d2(s)``: the displacement computed through the full return map."""
    cm = corner_map(system, eps, 2, config)
    p = return_map(system, eps, s, config)
    a = cm.evaluate(p, 0.0)[0]
    b = cm.evaluate(s, 0.0)[0]
    return (a - b).real


# ---------------------------------------------------------------------------
# adaptive argument tracking

def _wrap(a):
    return (a + math.pi) % (2 * math.pi) - math.pi


def refine_polyline(zs, evaluate, max_points=20000, aux=None, midpoint=None, values=None):
    """Subdivide a polyline until ``|delta arg value| < pi/2`` between neighbours.

    ``evaluate(z, seed)`` returns ``(value, aux)``; ``midpoint(za, zb, aux_a,
    aux_b)`` returns the inserted vertex and its seed (default: the midpoint
    in ``z`` seeded by the left neighbour).  ``values``/``aux`` may be
    supplied for the initial vertices.
    """
    zs = list(zs)
    aux = [None] * len(zs) if aux is None else list(aux)
    if values is None:
        vals = []
        for k, z in enumerate(zs):
            v, aux[k] = evaluate(z, aux[k])
            vals.append(v)
    else:
        vals = list(values)
    mid = midpoint or (lambda za, zb, aa, ab: (0.5 * (za + zb), aa))
    i = 0
    while i < len(zs) - 1:
        va, vb = vals[i], vals[i + 1]
        if va == 0 or vb == 0:
            raise SmallModulus("function vanishes on the contour", "build_contour")
        if abs(_wrap(np.angle(vb) - np.angle(va))) < math.pi / 2:
            i += 1
            continue
        if len(zs) >= max_points:
            raise RefinementBudget("argument refinement exceeded its budget", "build_contour")
        zm, seed = mid(zs[i], zs[i + 1], aux[i], aux[i + 1])
        if abs(zm - zs[i]) < 1e-15 * max(1.0, abs(zm)):
            raise RefinementBudget("refinement reached machine resolution", "build_contour")
        vm, am = evaluate(zm, seed)
        zs.insert(i + 1, zm)
        vals.insert(i + 1, vm)
        aux.insert(i + 1, am)
    return np.array(zs), np.array(vals), aux


def unwrapped_arg(values):
    return np.unwrap(np.angle(np.asarray(values)))


def polygon_winding(poly, point) -> int:
    """Winding number of the closed polygon ``poly`` (complex vertices) around ``point``."""
    d = np.asarray(poly) - point
    ang = np.angle(np.roll(d, -1) / d)
    return int(round(ang.sum() / (2 * math.pi)))


def winding_of(func, poly, max_points=200000) -> float:
    """Winding of ``func`` along the closed polygon ``poly`` (first vertex not repeated)."""
    closed = list(poly) + [poly[0]]
    _, vals, _ = refine_polyline(closed, lambda z, a: (complex(func(z)), None), max_points)
    return float((unwrapped_arg(vals)[-1] - unwrapped_arg(vals)[0]) / (2 * math.pi))


# ---------------------------------------------------------------------------
# the contour

class _Pair:
    """Both corner maps with continuous arguments of ``z - s_i`` carried along a path."""

    def __init__(self, system, eps, config):
        self.maps = (corner_map(system, eps, 1, config), corner_map(system, eps, 2, config))

    def evaluate(self, z, aux):
        args, warms = aux
        vals, states = [], []
        for cm, a, w in zip(self.maps, args, warms):
            v, _, _, st = cm.evaluate(z, a, w)
            vals.append(v)
            states.append(st)
        return vals[0] - vals[1], (args, tuple(states))

    def carry(self, z_from, z_to, args):
        """Continue the arguments from ``z_from`` to ``z_to`` along the segment."""
        return tuple(a + float(np.angle((z_to - cm.branch) / (z_from - cm.branch)))
                     for cm, a in zip(self.maps, args))

    def midpoint(self, za, zb, aa, ab):
        zm = 0.5 * (za + zb)
        return zm, (self.carry(za, zm, aa[0]), aa[1])


def _locus_points(pair, lo_map, s_lo, R, r_small, n=12):
    """Points of ``Im d_lo = 0`` from the circle inward to ``s_lo - r_small``."""
    cm = lo_map
    warm = None

    def solve(u, warm):
        v0 = -cm.evaluate(complex(u, 0.0), math.pi, warm)[0].imag
        return _secant(cm, u, v0, warm)

    u0 = -R
    v0 = 0.0
    for _ in range(3):
        v0, _, warm = solve(u0, warm)
        u0 = -math.sqrt(max(R * R - v0 * v0, 0.0))
    v0, _, warm = solve(u0, warm)
    if s_lo - r_small <= u0:
        raise PreconditionError("radius too small for the branch points", "build_contour")
    us = s_lo - np.geomspace(s_lo - u0, r_small, n)
    pts = [complex(u0, v0)]
    for u in us[1:]:
        v, _, warm = solve(float(u), warm)
        pts.append(complex(u, v))
    return pts


def _upper_half_path(pair, sv, R, r_small, n_circle=48, n_slit=16):
    lo_map = pair.maps[sv.lo_index - 1]
    s_lo, s_hi = sv.s1, sv.s2
    locus = _locus_points(pair, lo_map, s_lo, R, r_small)
    th_end = math.atan2(locus[0].imag, locus[0].real) % (2 * math.pi)
    circle = [R * np.exp(1j * th) for th in np.linspace(0.0, th_end, n_circle)]
    circle[-1] = locus[0]
    a_start = math.atan2(locus[-1].imag, locus[-1].real - s_lo) % (2 * math.pi)
    arc_lo = [s_lo + r_small * np.exp(1j * th) for th in np.linspace(a_start, 0.0, 9)][1:]
    arc_lo[-1] = complex(s_lo + r_small, SLIT_OFFSET)
    slit = [complex(x, SLIT_OFFSET) for x in np.linspace(s_lo + r_small, s_hi - r_small, n_slit)][1:]
    arc_hi = [s_hi + r_small * np.exp(1j * th) for th in np.linspace(math.pi, 0.0, 9)]
    arc_hi[0] = complex(s_hi - r_small, SLIT_OFFSET)
    arc_hi[-1] = complex(s_hi + r_small, 0.0)
    arc_hi = arc_hi[1:]
    pieces = ([0] * len(circle) + [1] * (len(locus) - 1) + [2] * (len(arc_lo) + len(slit) + len(arc_hi)))
    zs = circle + locus[1:] + arc_lo + slit + arc_hi
    return zs, pieces


def build_contour(system: HamiltonianSystem, eps: float, R: float,
                  config: IntegratorConfig = PRECISE, max_points: int = 4000) -> ContourTrace:
    """Sample the boundary of the counting domain and track the argument of the displacement."""
    if eps == 0.0:
        raise PreconditionError("displacement vanishes identically at eps = 0", "build_contour")
    if not 0 < R < system.loop.depth:
        raise PreconditionError("R must lie inside the annulus extent", "build_contour")
    sv = saddle_values(system, eps, config)
    if not -R < sv.s1 <= sv.s2 < R:
        raise PreconditionError("branch points lie outside the disk; shrink eps", "build_contour")
    if not sv.s2 > sv.s1:
        raise PreconditionError("branch points coincide; the slit degenerates", "build_contour")
    r_small = 0.25 * (sv.s2 - sv.s1)
    pair = _Pair(system, eps, config)
    zs, pieces = _upper_half_path(pair, sv, R, r_small)
    # continuous arguments of z - s_i along the path, starting on the positive axis
    args = [(0.0, 0.0)]
    for za, zb in zip(zs, zs[1:]):
        args.append(pair.carry(za, zb, args[-1]))
    aux, vals0 = [], []
    warms = (None, None)
    for z, a in zip(zs, args):
        v, st = pair.evaluate(z, (a, warms))
        warms = st[1]
        aux.append(st)
        vals0.append(v)
    piece_of = {complex(z): p for z, p in zip(zs, pieces)}
    zr, vals, _ = refine_polyline(zs, pair.evaluate, max_points, aux, pair.midpoint, vals0)
    # piece labels for inserted points inherit the left neighbour's
    labels = []
    cur = 0
    for z in zr:
        cur = piece_of.get(complex(z), cur)
        labels.append(cur)
    labels = np.array(labels)
    circle_vals = vals[labels == 0]
    if np.min(np.abs(circle_vals)) < 1e3 * FLOOR:
        raise SmallModulus(f"|d1 - d2| on |z| = R drops to {np.min(np.abs(circle_vals)):.3e}",
                           "build_contour")
    half = unwrapped_arg(vals)
    dhalf = half[-1] - half[0]
    # mirror half: conjugate points in reverse order (interior on the left throughout)
    z_full = np.concatenate([np.conj(zr[::-1]), zr[1:]])
    v_full = np.concatenate([np.conj(vals[::-1]), vals[1:]])
    lab_full = np.concatenate([4 - labels[::-1], labels[1:]])
    arg_full = unwrapped_arg(v_full)
    winding = 2 * dhalf / (2 * math.pi)
    if abs(winding - round(winding)) > 1e-3:
        raise NumericError(f"winding {winding:.6f} is not an integer", "build_contour")
    return ContourTrace(z_full, v_full, arg_full, lab_full, float(winding), float(eps), float(R))


def real_roots(func, a, b, n=200, tol=1e-12):
    """Sign changes of ``func`` on an ``n``-point grid over ``[a, b]``, each refined by bisection."""
    xs = np.linspace(a, b, n)
    ys = np.array([func(x) for x in xs])
    roots = []
    for k in range(n - 1):
        ya, yb = ys[k], ys[k + 1]
        if ya == 0:
            roots.append(float(xs[k]))
            continue
        if ya * yb < 0:
            lo, hi, flo = xs[k], xs[k + 1], ya
            while hi - lo > tol * max(1.0, abs(lo)):
                m = 0.5 * (lo + hi)
                fm = func(m)
                if fm == 0:
                    lo = hi = m
                    break
                if (fm < 0) == (flo < 0):
                    lo, flo = m, fm
                else:
                    hi = m
            roots.append(float(0.5 * (lo + hi)))
    return roots


def real_cycle_scan(system, eps, R, n=200, config=PRECISE, margin=None):
    """Zeros of ``P_eps(s) - s`` on ``(s_hi + margin, R)``."""
    sv = saddle_values(system, eps, config)
    margin = 0.02 * R if margin is None else margin
    a = max(sv.s2, 0.0) + margin
    return real_roots(lambda s: return_map(system, eps, s, config) - s, a, R, n, tol=1e-10)


def count_zeros(system: HamiltonianSystem, eps: float, R: float, nu=None,
                config: IntegratorConfig = PRECISE, n_real: int = 200) -> CountReport:
    """Winding count in the domain, direct real cycle count and the cyclicity bound."""
    from .bounds import CharacteristicSet, bound_two_saddle
    trace = build_contour(system, eps, R, config)
    wc = int(round(trace.winding))
    roots = real_cycle_scan(system, eps, R, n_real, config)
    sv = saddle_values(system, eps, config)
    bound = None
    if nu is not None:
        cs = nu if isinstance(nu, CharacteristicSet) else CharacteristicSet(*nu)
        bound = math.floor(bound_two_saddle(cs))
    return CountReport(wc, len(roots), bound, float(eps), float(R), trace.winding, tuple(roots),
                       (sv.s1, sv.s2), bound is not None and wc > bound, trace)
