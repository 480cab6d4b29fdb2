"""Planar Hamiltonian systems with a two-saddle loop and their perturbations.

The unperturbed vector field of a first integral ``f`` is ``(f_y, -f_x)``
and the perturbed foliation is ``df + eps * omega = 0``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import (NoConnection, NoInteriorCenter, OutOfAnnulus,
                     PreconditionError, SaddleLevelMismatch, ValidationError)


class Polynomial2:
    """Real bivariate polynomial ``sum c[i, j] x**i y**j`` (dense storage)."""

    __slots__ = ("coef", "__dict__")

    def __init__(self, coef):
        arr = np.array(coef, dtype=float, ndmin=2)
        if arr.ndim != 2:
            raise ValueError("coefficient array must be 2-D")
        nz = np.argwhere(arr != 0.0)
        if len(nz) == 0:
            arr = np.zeros((1, 1))
        else:
            arr = arr[: nz[:, 0].max() + 1, : nz[:, 1].max() + 1].copy()
        arr.setflags(write=False)
        self.coef = arr

    @classmethod
    def from_terms(cls, terms: Sequence[Sequence[float]]) -> "Polynomial2":
        """Build from ``(i, j, c)`` triples; duplicate monomials are summed."""
        terms = list(terms)
        if not terms:
            return cls([[0.0]])
        di = max(int(t[0]) for t in terms)
        dj = max(int(t[1]) for t in terms)
        arr = np.zeros((di + 1, dj + 1))
        for i, j, c in terms:
            if int(i) < 0 or int(j) < 0:
                raise ValueError("negative exponent")
            arr[int(i), int(j)] += float(c)
        return cls(arr)

    def terms(self):
        return [(int(i), int(j), float(self.coef[i, j]))
                for i, j in np.argwhere(self.coef != 0.0)]

    @property
    def degree(self):
        return self.coef.shape[0] - 1, self.coef.shape[1] - 1

    def __call__(self, x, y):
        return npoly.polyval2d(x, y, self.coef)

    def dx(self) -> "Polynomial2":
        return Polynomial2(npoly.polyder(self.coef, axis=0))

    def dy(self) -> "Polynomial2":
        return Polynomial2(npoly.polyder(self.coef, axis=1))

    def __add__(self, other):
        if not isinstance(other, Polynomial2):
            return self.shift(other)
        a, b = self.coef, other.coef
        out = np.zeros((max(a.shape[0], b.shape[0]), max(a.shape[1], b.shape[1])))
        out[: a.shape[0], : a.shape[1]] += a
        out[: b.shape[0], : b.shape[1]] += b
        return Polynomial2(out)

    def __neg__(self):
        return Polynomial2(-self.coef)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, Polynomial2):
            return _mul2(self, other)
        return Polynomial2(self.coef * float(other))

    __rmul__ = __mul__

    def shift(self, c: float) -> "Polynomial2":
        """Return ``self + c`` (the constant coefficient is changed exactly)."""
        arr = self.coef.copy()
        arr[0, 0] += float(c)
        return Polynomial2(arr)

    def is_zero(self) -> bool:
        return not np.any(self.coef)

    @cached_property
    def carr(self):
        """Complex copy for the jitted kernels."""
        return np.ascontiguousarray(self.coef, dtype=np.complex128)

    @cached_property
    def key(self):
        return (self.coef.shape, self.coef.tobytes())

    def __eq__(self, other):
        return isinstance(other, Polynomial2) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __repr__(self):
        return f"Polynomial2({self.terms()!r})"


def _mul2(a: Polynomial2, b: Polynomial2) -> Polynomial2:
    A, B = a.coef, b.coef
    out = np.zeros((A.shape[0] + B.shape[0] - 1, A.shape[1] + B.shape[1] - 1))
    for i, j in np.argwhere(A != 0):
        out[i:i + B.shape[0], j:j + B.shape[1]] += A[i, j] * B
    return Polynomial2(out)


@dataclass(frozen=True)
class OneForm:
    """``omega_eps = P(x, y, eps) dx + Q(x, y, eps) dy``.

    ``P[k]`` and ``Q[k]`` are the coefficients of ``eps**k``.
    """

    P: tuple = (Polynomial2([[0.0]]),)
    Q: tuple = (Polynomial2([[0.0]]),)

    def __post_init__(self):
        n = max(len(self.P), len(self.Q), 1)
        zero = Polynomial2([[0.0]])
        object.__setattr__(self, "P", tuple(self.P) + (zero,) * (n - len(self.P)))
        object.__setattr__(self, "Q", tuple(self.Q) + (zero,) * (n - len(self.Q)))

    @classmethod
    def zero(cls) -> "OneForm":
        return cls()

    @classmethod
    def from_terms(cls, P_terms, Q_terms) -> "OneForm":
        """Build from ``(eps_power, i, j, c)`` quadruples."""
        def split(terms):
            by_k = {}
            for k, i, j, c in terms:
                by_k.setdefault(int(k), []).append((i, j, c))
            n = max(by_k, default=0) + 1
            return tuple(Polynomial2.from_terms(by_k.get(k, [])) for k in range(n))
        return cls(split(P_terms), split(Q_terms))

    def at(self, eps: float):
        P = Polynomial2([[0.0]])
        Q = Polynomial2([[0.0]])
        for k, (p, q) in enumerate(zip(self.P, self.Q)):
            w = float(eps) ** k
            P = P + p * w
            Q = Q + q * w
        return P, Q

    @property
    def leading(self):
        """The form at ``eps = 0``."""
        return self.P[0], self.Q[0]

    def is_zero(self) -> bool:
        return all(p.is_zero() for p in self.P) and all(q.is_zero() for q in self.Q)

    def __neg__(self):
        return OneForm(tuple(-p for p in self.P), tuple(-q for q in self.Q))

    def __call__(self, x, y, eps=0.0):
        P, Q = self.at(eps)
        return P(x, y), Q(x, y)

    @property
    def key(self):
        return tuple(p.key for p in self.P), tuple(q.key for q in self.Q)


@dataclass(frozen=True)
class CriticalPoint:
    location: tuple
    kind: str
    level: float
    hessian_det: float

    @property
    def xy(self) -> np.ndarray:
        return np.array(self.location, dtype=complex if np.iscomplexobj(
            np.array(self.location)) else float)


@dataclass(frozen=True)
class Section:
    """Complex line ``{base + w * direction}`` parameterised by the level of f."""

    base: tuple
    direction: tuple

    def point(self, w):
        return (self.base[0] + w * self.direction[0],
                self.base[1] + w * self.direction[1])

    @property
    def functional(self):
        """Coefficients ``(l0, l1, l2)`` of a linear form vanishing on the line."""
        (cx, cy), (dx, dy) = self.base, self.direction
        return complex(dy * cx - dx * cy), complex(-dy), complex(dx)

    def value(self, x, y):
        l0, l1, l2 = self.functional
        return l0 + l1 * x + l2 * y

    def locate(self, f: Polynomial2, level, w0=1.0, tol=1e-15, maxit=60):
        """Solve ``f(point(w)) = level`` for ``w`` by Newton from ``w0``."""
        fx, fy = f.dx(), f.dy()
        dx, dy = self.direction
        w = complex(w0)
        for _ in range(maxit):
            x, y = self.point(w)
            r = f(x, y) - level
            d = fx(x, y) * dx + fy(x, y) * dy
            if d == 0:
                break
            step = r / d
            w -= step
            if abs(step) <= tol * max(1.0, abs(w)):
                break
        x, y = self.point(w)
        if abs(f(x, y) - level) > 1e-10 * max(1.0, abs(level)):
            raise ValidationError("section point did not converge", "section")
        return w


@dataclass(frozen=True, eq=False)
class TwoSaddleLoop:
    """Validated two-saddle loop of ``f`` (already shifted so the loop is at 0).

    ``saddle1`` is the saddle reached first by the forward Hamiltonian flow
    starting on the section ``sigma``; ``saddle2`` is reached by the backward
    flow.
    """

    f: Polynomial2
    saddle1: CriticalPoint
    saddle2: CriticalPoint
    annulus_sign: int
    center: CriticalPoint
    annulus_range: tuple
    section_anchor: tuple
    tau_anchor: tuple
    upper_connection: np.ndarray = field(repr=False)
    lower_connection: np.ndarray = field(repr=False)
    level_shift: float = 0.0
    loop_level: float = 0.0

    @property
    def saddles(self):
        return self.saddle1, self.saddle2

    @property
    def sigma(self) -> Section:
        c = self.center.location
        a = self.section_anchor
        return Section(tuple(map(float, c)), (a[0] - c[0], a[1] - c[1]))

    @property
    def tau(self) -> Section:
        c = self.center.location
        a = self.tau_anchor
        return Section(tuple(map(float, c)), (a[0] - c[0], a[1] - c[1]))

    @property
    def depth(self) -> float:
        """``|f(center)|``, the extent of the annulus in the normalised parameter."""
        return abs(self.center.level)


@dataclass(frozen=True, eq=False)
class Foliation:
    """``df + eps * omega = 0`` without loop data (used while validating)."""

    f: Polynomial2
    omega: OneForm = field(default_factory=OneForm)

    @cached_property
    def _grad(self):
        return self.f.dx(), self.f.dy()

    def field_arrays(self, eps: float):
        """Coefficient arrays of ``f_x + eps P`` and ``f_y + eps Q``."""
        return _field_arrays(self, float(eps))

    def form_arrays(self, form=None):
        P, Q = self.omega.leading if form is None else form
        return P.carr, Q.carr

    @cached_property
    def key(self):
        return self.f.key, self.omega.key


_FIELD_CACHE: dict = {}


def _field_arrays(fol: Foliation, eps: float):
    k = (fol.key, eps)
    hit = _FIELD_CACHE.get(k)
    if hit is None:
        fx, fy = fol._grad
        if eps == 0.0:
            Ax, Ay = fx, fy
        else:
            P, Q = fol.omega.at(eps)
            Ax, Ay = fx + P * eps, fy + Q * eps
        hit = (Ax.carr, Ay.carr)
        if len(_FIELD_CACHE) > 256:
            _FIELD_CACHE.clear()
        _FIELD_CACHE[k] = hit
    return hit


@dataclass(frozen=True, eq=False)
class HamiltonianSystem(Foliation):
    loop: TwoSaddleLoop = None

    def with_omega(self, omega: OneForm) -> "HamiltonianSystem":
        return HamiltonianSystem(self.f, omega, self.loop)

    @property
    def sign(self) -> int:
        return self.loop.annulus_sign

    def to_s(self, t):
        return self.loop.annulus_sign * t

    def to_t(self, s):
        return self.loop.annulus_sign * s


# ---------------------------------------------------------------------------
# critical points

def _hessian(f: Polynomial2, x, y):
    fxx = f.dx().dx()(x, y)
    fxy = f.dx().dy()(x, y)
    fyy = f.dy().dy()(x, y)
    return np.array([[fxx, fxy], [fxy, fyy]])


def find_critical_points(f: Polynomial2, search_box, grid_n: int = 16):
    """Multi-start Newton for ``grad f = 0`` seeded on a ``grid_n x grid_n`` grid."""
    if grid_n < 8:
        raise PreconditionError("grid_n must be >= 8", "find_critical_points")
    xmin, xmax, ymin, ymax = map(float, search_box)
    if not (xmax > xmin and ymax > ymin):
        raise PreconditionError("degenerate search box", "find_critical_points")
    fx, fy = f.dx(), f.dy()
    fxx, fxy, fyy = fx.dx(), fx.dy(), fy.dy()
    found = []
    pad_x, pad_y = 1e-9 * (xmax - xmin), 1e-9 * (ymax - ymin)
    for x0 in np.linspace(xmin, xmax, grid_n):
        for y0 in np.linspace(ymin, ymax, grid_n):
            x, y = x0, y0
            ok = False
            for _ in range(100):
                g = np.array([fx(x, y), fy(x, y)])
                if np.hypot(*g) < 1e-12:
                    ok = True
                    break
                H = np.array([[fxx(x, y), fxy(x, y)], [fxy(x, y), fyy(x, y)]])
                try:
                    dx, dy = np.linalg.solve(H, g)
                except np.linalg.LinAlgError:
                    break
                x, y = x - dx, y - dy
                if not (np.isfinite(x) and np.isfinite(y)) or abs(x) + abs(y) > 1e6:
                    break
            if not ok:
                continue
            if not (xmin - pad_x <= x <= xmax + pad_x and ymin - pad_y <= y <= ymax + pad_y):
                continue
            if any(np.hypot(x - p[0], y - p[1]) < 1e-8 for p in found):
                continue
            found.append((float(x), float(y)))
    out = []
    for x, y in sorted(found):
        det = float(fxx(x, y) * fyy(x, y) - fxy(x, y) ** 2)
        if abs(det) < 1e-10:
            kind = "degenerate"
        elif det < 0:
            kind = "saddle"
        else:
            kind = "center"
        out.append(CriticalPoint((x, y), kind, float(f(x, y)), det))
    return out


def _inside(poly: np.ndarray, pt) -> bool:
    x, y = pt
    px, py = poly[:, 0], poly[:, 1]
    qx, qy = np.roll(px, -1), np.roll(py, -1)
    cross = (py > y) != (qy > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = px + (y - py) * (qx - px) / (qy - py)
    return bool(np.count_nonzero(cross & (x < xint)) % 2)


def _arclength_point(traj: np.ndarray, frac: float):
    seg = np.hypot(*np.diff(traj, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    target = frac * cum[-1]
    k = int(np.searchsorted(cum, target)) - 1
    k = min(max(k, 0), len(seg) - 1)
    lam = (target - cum[k]) / seg[k] if seg[k] > 0 else 0.0
    return traj[k] + lam * (traj[k + 1] - traj[k])


def validate_two_saddle_loop(f: Polynomial2, s1: CriticalPoint, s2: CriticalPoint,
                             grid_n: int = 16) -> TwoSaddleLoop:
    """Check that ``s1`` and ``s2`` span a Hamiltonian two-saddle loop of ``f``."""
    from .complex_flow import separatrix_shoot

    if s1.kind != "saddle" or s2.kind != "saddle":
        raise PreconditionError("both critical points must be saddles",
                                "validate_two_saddle_loop")
    if np.hypot(s1.location[0] - s2.location[0], s1.location[1] - s2.location[1]) < 1e-8:
        raise PreconditionError("s1 and s2 coincide", "validate_two_saddle_loop")
    for cp in (s1, s2):
        x, y = cp.location
        if np.hypot(f.dx()(x, y), f.dy()(x, y)) > 1e-8 or np.linalg.det(_hessian(f, x, y)) >= -1e-10:
            raise PreconditionError(f"{cp.location} is not a saddle of f", "validate_two_saddle_loop")
    l1 = float(f(*s1.location))
    l2 = float(f(*s2.location))
    if abs(l1 - l2) >= 1e-10:
        raise SaddleLevelMismatch(f"saddle levels differ by {abs(l1 - l2):.3e}")
    shift = l1
    g = f.shift(-shift)

    def renorm(cp):
        return CriticalPoint(cp.location, cp.kind, 0.0, cp.hessian_det)

    a, b = renorm(s1), renorm(s2)
    fol = Foliation(g)
    span = np.hypot(a.location[0] - b.location[0], a.location[1] - b.location[1])
    connections = []
    for src, dst in ((a, b), (b, a)):
        hit = None
        for branch in ("unstable+", "unstable-"):
            target = np.array(dst.location)

            def near(p, target=target):
                return np.hypot(p[0] - target[0], p[1] - target[1]) < 1e-3

            traj = separatrix_shoot(fol, 0.0, src, branch, until=near,
                                    budget=20.0 * span + 20.0, strict=False)
            if near(traj[-1].real):
                hit = traj.real
                break
        if hit is None:
            raise NoConnection(f"no separatrix from {src.location} reaches {dst.location}")
        connections.append((src, dst, hit))
    pts = np.vstack([c[2] for c in connections])
    centroid = pts.mean(axis=0)
    fc = float(g(*centroid))
    if fc == 0.0:
        raise ValidationError("centroid lies on the loop level", "validate_two_saddle_loop")
    sign = 1 if fc > 0 else -1
    poly = np.vstack([connections[0][2], connections[1][2]])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    pad = 1e-6 * (hi - lo)
    centers = [c for c in find_critical_points(
        g, (lo[0] + pad[0], hi[0] - pad[0], lo[1] + pad[1], hi[1] - pad[1]), grid_n)
        if c.kind == "center" and _inside(poly, c.location) and sign * c.level > 0]
    if not centers:
        raise NoInteriorCenter("no center inside the loop")
    center = max(centers, key=lambda c: abs(c.level))
    rng = (min(0.0, center.level), max(0.0, center.level))
    upper, lower = sorted(connections, key=lambda c: -c[2][:, 1].mean())
    anchor = tuple(map(float, _arclength_point(upper[2], 0.5)))
    tau_anchor = tuple(map(float, _arclength_point(lower[2], 0.5)))
    # forward flow along the upper connection runs from its source to its target
    first, second = upper[1], upper[0]
    return TwoSaddleLoop(f=g, saddle1=first, saddle2=second, annulus_sign=sign,
                         center=center, annulus_range=rng, section_anchor=anchor,
                         tau_anchor=tau_anchor, upper_connection=upper[2],
                         lower_connection=lower[2], level_shift=shift)


def normalized_parameter(loop: TwoSaddleLoop, t: float) -> float:
    """``s = annulus_sign * t``; the annulus is always ``0 < s < |f(center)|``."""
    lo, hi = loop.annulus_range
    if not (lo < t < hi):
        raise OutOfAnnulus(f"t = {t} outside annulus {loop.annulus_range}")
    return loop.annulus_sign * t


# ---------------------------------------------------------------------------
# construction helpers

def canonical_f() -> Polynomial2:
    """``y**2/2 - (x**2 - 1)**2/4``."""
    return Polynomial2.from_terms([(0, 2, 0.5), (4, 0, -0.25), (2, 0, 0.5), (0, 0, -0.25)])


def canonical_omega(alpha: float = 1.0, beta: float = 0.0) -> OneForm:
    """``(alpha + beta x**2) y dx``."""
    return OneForm.from_terms([(0, 0, 1, alpha), (0, 2, 1, beta)], [])


def build_system(f: Polynomial2, omega: OneForm, search_box, grid_n: int = 16
                 ) -> HamiltonianSystem:
    """Locate a two-saddle loop of ``f`` inside ``search_box`` and validate it."""
    cps = find_critical_points(f, search_box, grid_n)
    saddles = [c for c in cps if c.kind == "saddle"]
    last = None
    for i in range(len(saddles)):
        for j in range(i + 1, len(saddles)):
            if abs(saddles[i].level - saddles[j].level) >= 1e-10:
                continue
            try:
                loop = validate_two_saddle_loop(f, saddles[i], saddles[j], grid_n)
            except ValidationError as exc:
                last = exc
                continue
            return HamiltonianSystem(loop.f, omega, loop)
    if last is not None:
        raise last
    raise ValidationError("no pair of saddles at a common level", "build_system")


_CANONICAL_LOOP = {}


def canonical_system(alpha: float = 1.0, beta: float = 0.0,
                     omega: OneForm | None = None) -> HamiltonianSystem:
    """The regression system ``f = y**2/2 - (x**2-1)**2/4``, ``omega = (alpha + beta x**2) y dx``."""
    if "loop" not in _CANONICAL_LOOP:
        f = canonical_f()
        cps = find_critical_points(f, (-2, 2, -2, 2), 16)
        s = [c for c in cps if c.kind == "saddle"]
        _CANONICAL_LOOP["loop"] = validate_two_saddle_loop(f, s[0], s[1])
    loop = _CANONICAL_LOOP["loop"]
    if omega is None:
        omega = canonical_omega(alpha, beta)
    return HamiltonianSystem(loop.f, omega, loop)


def parse_system(doc: dict):
    """Parse the JSON system definition into ``(f, omega, search_box)``."""
    try:
        f = Polynomial2.from_terms(doc["f"])
        om = doc.get("omega", {})
        omega = OneForm.from_terms(om.get("P", []), om.get("Q", []))
        box = tuple(float(v) for v in doc["search_box"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed system definition: {exc}", "load_system") from exc
    if len(box) != 4:
        raise ValidationError("search_box needs four numbers", "load_system")
    return f, omega, box


def load_system(path) -> HamiltonianSystem:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    f, omega, box = parse_system(doc)
    return build_system(f, omega, box)


def system_to_json(f: Polynomial2, omega: OneForm, box) -> dict:
    return {
        "f": [list(t) for t in f.terms()],
        "omega": {
            "P": [[k, i, j, c] for k, p in enumerate(omega.P) for i, j, c in p.terms()],
            "Q": [[k, i, j, c] for k, q in enumerate(omega.Q) for i, j, c in q.terms()],
        },
        "search_box": list(box),
    }
