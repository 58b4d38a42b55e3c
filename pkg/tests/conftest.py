from __future__ import annotations

import pytest
from flint import fmpq

from lacuna.continuation import connect
from lacuna.dfinite import ODE, frobenius_basis, ode_to_recurrence, recurrence_extend
from lacuna.pipeline import bundled
from lacuna.poly import RatFun


@pytest.fixture(scope="session")
def grz():
    return RatFun.load(bundled("grz.json"))


@pytest.fixture(scope="session")
def grz_ode():
    return ODE.load(bundled("grz_ode.json"))


@pytest.fixture(scope="session")
def grz_unit_expr():
    with open(bundled("grz_unit.txt")) as fh:
        return fh.read().strip()


@pytest.fixture(scope="session")
def grz_sequence(grz_ode):
    """Exact diagonal a_{n,n,n,n} for n <= 1600."""
    rec = ode_to_recurrence(grz_ode)
    return recurrence_extend(rec, [fmpq(1), fmpq(-3)], 1600)


@pytest.fixture(scope="session")
def grz_points(grz_ode):
    """Singular points sorted by (re, im): [conj(zeta^4), zeta^4, 0]."""
    return grz_ode.singular_points(256)


@pytest.fixture(scope="session")
def grz_connections(grz_ode, grz_points):
    """a3 connected to both dominant singular points at 50 digits."""
    target = [fmpq(0), fmpq(0), fmpq(1)]
    return [connect(grz_ode, target, w, 0, digits=50) for w in grz_points[:2]]


@pytest.fixture(scope="session")
def grz_far_bases(grz_ode, grz_points, grz_connections):
    prec = grz_connections[0].metadata["prec_bits"]
    return [frobenius_basis(grz_ode, w, 3, prec) for w in grz_points[:2]]


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance_log(request):
    """List collecting one PASS/FAIL line per acceptance criterion."""
    return request.config.stash.setdefault(_ACCEPTANCE, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda x: int(x.split()[1])):
            terminalreporter.write_line(line)
