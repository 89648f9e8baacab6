import logging

import numpy as np
import pytest

from pfadvantage.netmodel import build_reduced_system, parse_case

logger = logging.getLogger(__name__)

FOUR_BUS_CASE = """\
function mpc = four_bus
mpc.version = '2';
mpc.baseMVA = 100;

%% bus data
%	bus_i	type	Pd	Qd
mpc.bus = [
	1	3	0	0;
	2	1	0	0;
	3	1	0	0;
	4	1	100	0;
];

%% generator data
%	bus	Pg
mpc.gen = [
	1	0;
	2	100;
];

%% branch data
%	fbus	tbus	r	x	b	rateA	rateB	rateC	ratio	angle	status
mpc.branch = [
	1	2	0	1.0	0	0	0	0	0	0	1;
	2	3	0	1.0	0	0	0	0	0	0	1;
	1	3	0	1.0	0	0	0	0	0	0	1;
	1	4	0	1.0	0	0	0	0	0	0	1;
	3	4	0	1.0	0	0	0	0	0	0	1;
];
"""

FOUR_BUS_A = np.array([[2.0, -1.0, 0.0], [-1.0, 3.0, -1.0], [0.0, -1.0, 2.0]])
FOUR_BUS_X = np.array([0.5, 0.0, -0.5])


def write_case(directory, name, text):
    path = directory / f"{name}.m"
    path.write_text(text)
    return path


@pytest.fixture
def four_bus_case():
    return parse_case(FOUR_BUS_CASE)


@pytest.fixture
def four_bus_reduced(four_bus_case):
    return build_reduced_system(four_bus_case)


@pytest.fixture
def four_bus_path(tmp_path):
    return write_case(tmp_path, "four_bus", FOUR_BUS_CASE)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_spd(rng, n, cond=100.0):
    """Dense SPD matrix with eigenvalue 1 and the rest spread geometrically
    over [2, cond]."""
    q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    lam = np.concatenate([[1.0], np.geomspace(2.0, cond, n - 1)])
    a = (q * lam) @ q.T
    return 0.5 * (a + a.T)


def wishart_spd(rng, n, m=None):
    """Sample covariance ``G G^T / m`` of an ``n x m`` Gaussian ``G``; its
    spectrum is clustered rather than geometrically spread."""
    m = 2 * n if m is None else m
    g = rng.normal(size=(n, m))
    return g @ g.T / m
