"""Cyclicity bounds from characteristic numbers, in exact rational arithmetic."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .errors import ValidationError


def _q(v, name="value") -> Fraction:
    """Exact rational from an int, Fraction, decimal string or float (via its shortest repr)."""
    if isinstance(v, float):
        if v != v or abs(v) == float("inf"):
            raise ValidationError(f"{name} must be finite", "bounds")
        v = repr(v)
    try:
        return Fraction(v)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{name} is not a rational number", "bounds") from exc


@dataclass(frozen=True)
class CharacteristicSet:
    nu_P: Fraction
    nu_d1: Fraction
    nu_d2: Fraction
    nu_d12: Fraction
    provenance: str = "user"
    fit_rms: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in ("nu_P", "nu_d1", "nu_d2", "nu_d12"):
            v = _q(getattr(self, name), name)
            if v < 0:
                raise ValidationError(f"{name} must be nonnegative", "bounds")
            object.__setattr__(self, name, v)
        if self.provenance not in ("fitted", "user"):
            raise ValidationError("provenance is 'fitted' or 'user'", "bounds")

    def to_json(self):
        out = {k: str(getattr(self, k)) for k in ("nu_P", "nu_d1", "nu_d2", "nu_d12")}
        out["provenance"] = self.provenance
        if self.fit_rms:
            out["fit_rms"] = dict(sorted(self.fit_rms.items()))
        return out

    @classmethod
    def from_json(cls, d):
        return cls(*(Fraction(str(d[k])) for k in ("nu_P", "nu_d1", "nu_d2", "nu_d12")),
                   d.get("provenance", "user"))


def bound_two_saddle(cs: CharacteristicSet) -> Fraction:
    """``1 + nu(P) + max(nu(h1), nu(h2)) + nu(h1 o h2)``."""
    return 1 + cs.nu_P + max(cs.nu_d1, cs.nu_d2) + cs.nu_d12


def bound_homoclinic(nu_P, nu_d1) -> Fraction:
    """One-saddle loop: ``nu(P) + nu(h1)``."""
    return _q(nu_P) + _q(nu_d1)


def bound_example_form(p, q, p1, p2) -> Fraction:
    """``1 + min(p, q) + max(p1, p2) + q``."""
    p, q, p1, p2 = map(_q, (p, q, p1, p2))
    return 1 + min(p, q) + max(p1, p2) + q


def bound_roussarie(p, q) -> Fraction:
    """Real-domain bound: ``2p`` if ``p < q``, else ``2q - 1``."""
    p, q = _q(p), _q(q)
    return 2 * p if p < q else 2 * q - 1


def bound_dumortier_roussarie(p) -> Fraction:
    """``2p - 1 + p(p - 1)/2``."""
    p = _q(p)
    return 2 * p - 1 + p * (p - 1) / 2


def compare_bounds(p, q, p1, p2) -> dict:
    """All bounds that apply to the same inputs; negative values are clipped to 0 with a note."""
    raw = {
        "example_form": bound_example_form(p, q, p1, p2),
        "dumortier_roussarie": bound_dumortier_roussarie(p),
        "roussarie": bound_roussarie(p, q),
    }
    report, notes = {}, []
    for name, v in raw.items():
        if v < 0:
            notes.append(f"{name} evaluates to {v}; clipped to 0")
            v = Fraction(0)
        report[name] = v
    return {"bounds": report, "notes": notes}
