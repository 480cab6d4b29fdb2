import math

import numpy as np
import pytest

from oracles import M1_oracle
from twoloop.complex_flow import (DEFAULT, Arc, BasePath, IntegratorConfig, Line, flow,
                                  holonomy_transport, lift_path, perturbed_saddle,
                                  separatrix_crossing, separatrix_shoot)
from twoloop.errors import PreconditionError
from twoloop.melnikov import periodic_orbit
from twoloop.system_model import Foliation, Polynomial2

XY = Foliation(Polynomial2.from_terms([(1, 1, 1.0)]))


def _on_level(system, x, t, y_guess):
    y = complex(y_guess)
    for _ in range(50):
        y -= (system.f(x, y) - t) / system.f.dy()(x, y)
    return y


@pytest.fixture(scope="module")
def complex_start(canonical):
    x0 = 0.3 + 0.05j
    t = -0.1 + 0.01j
    return x0, _on_level(canonical, x0, t, 0.46)


def test_xy_segment():
    z = 0.3
    lifted = lift_path(XY, 0.0, (z, 1.0), BasePath((Line(z, 1.0),)))
    x, y = lifted.endpoint
    assert abs(x - 1) < 1e-12 and abs(y - z) < 1e-9


def test_xy_monodromy_arc():
    z = 0.4
    path = BasePath((Arc(0j, z, 0.0, 2 * math.pi), Line(z, 1.0)))
    lifted = lift_path(XY, 0.0, (z, 1.0), path)
    assert abs(lifted.endpoint[1] - z) < 1e-9
    assert lifted.f_drift < 1e-9


def test_oval_circuit_with_folds(canonical):
    t = -0.1
    a = math.sqrt(1 - 2 * math.sqrt(0.1))
    y0 = math.sqrt(0.5 + 2 * t)
    lifted = lift_path(canonical, 0.0, (0.0, y0), BasePath((Line(0, a), Line(a, -a), Line(-a, 0))))
    x, y = lifted.endpoint
    assert abs(x) < 1e-8 and abs(y - y0) < 1e-8
    assert lifted.switches >= 2 and lifted.f_drift < 1e-9


def test_start_must_project_onto_path(canonical):
    with pytest.raises(PreconditionError):
        lift_path(canonical, 0.0, (0.1, 0.5), BasePath((Line(0.0, 0.2),)))


def test_concatenation(canonical, complex_start):
    x0, y0 = complex_start
    A = BasePath((Line(x0, x0 + 0.1),))
    Bp = BasePath((Arc(x0 + 0.05, 0.05, 0.0, math.pi / 2),))
    whole = lift_path(canonical, 1e-3, (x0, y0), A + Bp, DEFAULT)
    first = lift_path(canonical, 1e-3, (x0, y0), A, DEFAULT)
    second = lift_path(canonical, 1e-3, first.endpoint, Bp, DEFAULT)
    assert abs(whole.endpoint[1] - second.endpoint[1]) < 2e-9


def test_reversal(canonical, complex_start):
    x0, y0 = complex_start
    path = BasePath((Line(x0, x0 + 0.08 + 0.03j), Arc(x0 + 0.03j, 0.08, 0.0, 1.0)))
    out = lift_path(canonical, 1e-3, (x0, y0), path, DEFAULT)
    back = lift_path(canonical, 1e-3, out.endpoint, path.reversed(), DEFAULT)
    assert abs(back.endpoint[1] - y0) < 2e-9


def test_schwarz_symmetry(canonical, complex_start):
    x0, y0 = complex_start
    path = BasePath((Line(x0, x0 + 0.1j), Arc(x0, 0.1, math.pi / 2, math.pi)))
    up = lift_path(canonical, 1e-3, (x0, y0), path)
    down = lift_path(canonical, 1e-3, (np.conj(x0), np.conj(y0)), path.conjugate())
    assert abs(down.endpoint[1] - np.conj(up.endpoint[1])) < 1e-10


def test_step_halving_consistency(canonical, complex_start):
    x0, y0 = complex_start
    path = BasePath((Arc(x0 - 0.1, 0.1, 0.0, 1.5),))
    coarse = lift_path(canonical, 1e-3, (x0, y0), path, DEFAULT)
    fine = lift_path(canonical, 1e-3, (x0, y0), path, DEFAULT.tightened(100))
    assert abs(coarse.endpoint[1] - fine.endpoint[1]) < 10 * DEFAULT.rel_tol


def test_complex_time_flow_conserves_f(canonical):
    X = flow(canonical, 0.0, np.array([0.2, 0.5, 0j]), 0.7 + 0.3j)
    assert abs(canonical.f(X[0], X[1]) - canonical.f(0.2, 0.5)) < 1e-11


@pytest.mark.parametrize("t", [-0.2, -0.05, -0.01])
def test_holonomy_identity_at_zero_eps(canonical, t):
    cyc = periodic_orbit(canonical, t)
    assert abs(holonomy_transport(canonical, 0.0, t, cyc, t) - t) < 1e-9


def test_holonomy_first_order_against_quadrature(canonical):
    t, s = -0.02, 0.02
    cyc = periodic_orbit(canonical, t)
    eps = np.array([1e-2, 1e-3, 1e-4])
    err = [abs(holonomy_transport(canonical, e, t, cyc, t) - t + e * M1_oracle(s)) for e in eps]
    assert np.polyfit(np.log(eps), np.log(err), 1)[0] >= 1.9


def test_holonomy_forward_then_backward(canonical):
    t = -0.05
    cyc = periodic_orbit(canonical, t)
    z1 = holonomy_transport(canonical, 1e-3, t, cyc, t)
    z2 = holonomy_transport(canonical, 1e-3, t, cyc.reversed(), z1)
    assert abs(z2 - t) < 2e-9


def test_separatrix_connects_at_zero_eps(canonical):
    left = canonical.loop.saddle2 if canonical.loop.saddle2.location[0] < 0 else canonical.loop.saddle1

    def near(p):
        return math.hypot(p[0] - 1.0, p[1]) < 1e-3

    traj = separatrix_shoot(canonical, 0.0, left, "unstable+", until=near, budget=20.0)
    assert near(traj[-1].real)
    assert np.max(np.abs(canonical.f(traj[:, 0], traj[:, 1]))) < 1e-8


@pytest.mark.parametrize("branch", ["stable+", "stable-", "unstable+", "unstable-"])
def test_separatrix_level_is_zero(canonical, branch):
    traj = separatrix_shoot(canonical, 0.0, canonical.loop.saddle1, branch, budget=1.5, strict=False)
    assert np.max(np.abs(canonical.f(traj[:, 0], traj[:, 1]))) < 1e-8


def test_broken_connection(canonical):
    left = canonical.loop.saddle2

    def near(p):
        return math.hypot(p[0] - 1.0, p[1]) < 1e-3

    traj = separatrix_shoot(canonical, 1e-3, left, "unstable+", until=near, budget=6.0, strict=False)
    assert not near(traj[-1].real)
    vals = []
    for eps in (1e-3, 1e-4):
        x, y = separatrix_crossing(canonical, eps, left, "unstable", canonical.loop.sigma, (0.0, 1.0))
        vals.append(abs(canonical.f(x.real, y.real)))
    assert 8 < vals[0] / vals[1] < 12


def test_perturbed_saddle_is_hyperbolic(canonical):
    p, lam, _ = perturbed_saddle(canonical, 1e-2, canonical.loop.saddle1)
    assert lam[0] > 0 > lam[1]
    assert math.hypot(*(p - np.array(canonical.loop.saddle1.location))) < 1e-1


@pytest.mark.parametrize("tol", [0.0, 0.1])
def test_config_rejects_bad_tolerances(tol):
    with pytest.raises(ValueError):
        IntegratorConfig(rel_tol=tol)
