import numpy as np
import pytest

from genres.charop import BoundaryPair, CharacteristicOperator
from genres.forms import Grid
from genres.problems import sturm_liouville
from genres.resolvent import Resolvent
from genres.solve import CanonicalSystem


def green_sl(lam, f, t, nodes=17):
    """Dirichlet Green-function integral for -y'' - lam y = f on [0, pi] by Gauss-Legendre."""
    from scipy.integrate import quad

    k = np.sqrt(complex(lam))
    den = k * np.sin(k * np.pi)
    out = []
    for tk in np.atleast_1d(t):
        def left(s):
            return np.sin(k * s) * np.sin(k * (np.pi - tk)) * f(s) / den

        def right(s):
            return np.sin(k * tk) * np.sin(k * (np.pi - s)) * f(s) / den

        val = 0j
        for g, lo, hi in ((left, 0.0, tk), (right, tk, np.pi)):
            if hi > lo:
                re = quad(lambda s: g(s).real, lo, hi, epsabs=1e-13, epsrel=1e-12)[0]
                im = quad(lambda s: g(s).imag, lo, hi, epsabs=1e-13, epsrel=1e-12)[0]
                val += re + 1j * im
        out.append(val)
    return np.array(out)


@pytest.fixture(scope="session")
def sl_family():
    return sturm_liouville()


@pytest.fixture(scope="session")
def sl_setup(sl_family):
    """Dirichlet Sturm-Liouville problem on [0, pi] with a moderate grid."""
    grid = Grid(0.0, np.pi, 400)
    sys = CanonicalSystem(sl_family, 0.0, np.pi)
    bp = BoundaryPair.dirichlet(1)
    Mop = CharacteristicOperator.from_pair(bp, sys, grid, substeps=4)
    return sys, grid, bp, Mop, Resolvent(sys, grid, Mop, 4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance check, printed in the terminal summary
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
