import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import FOUR_PI, brute_force_2d, chain_closed_form
from lattice_spectra.errors import AlphaZero, Unsupported
from lattice_spectra.geometry import make_lattice
from lattice_spectra.lattice_sums import (
    default_eta,
    direct_sum_1d,
    direct_sum_1d_many,
    ewald_sum_2d,
    lattice_sum,
    polylog_unit,
)


@pytest.mark.parametrize("s", [1, 2, 3, 5, 11])
@pytest.mark.parametrize("theta", [1e-6, 0.3, -1.2, 2.9, math.pi, 7.0])
def test_polylog_matches_mpmath(s, theta):
    with mpmath.workdps(40):
        ref = complex(mpmath.polylog(s, mpmath.exp(mpmath.mpc(0, theta))))
    got = complex(polylog_unit(s, theta))
    assert abs(got - ref) <= 1e-13 * max(1.0, abs(ref))


def test_polylog_vectorised_matches_scalar():
    th = np.linspace(-3, 3, 7)
    vec = polylog_unit(4, th)
    assert np.allclose(vec, [polylog_unit(4, t) for t in th], rtol=0, atol=1e-15)
    assert abs(vec[3] - float(mpmath.zeta(4))) < 1e-14


def test_chain_sum_at_origin_is_log_sine(chain):
    lat, _ = chain
    for a in [0.1, 1.0, math.pi / 2, 3.0, -2.2]:
        got = direct_sum_1d([0, 0, 0], a, lat).value
        ref = -2.0 * math.log(2.0 * abs(math.sin(a / 2))) / FOUR_PI
        assert abs(got - ref) < 1e-12


def _windowed_1d(z, a, L=1.0, M=200000):
    m = np.arange(-M, M + 1)
    t = np.abs(m) / M
    u = np.clip((t - 0.5) / 0.5, 0, 1)
    f = lambda s: np.where(s > 0, np.exp(-1 / np.maximum(s, 1e-300)), 0.0)
    w = f(1 - u) / (f(1 - u) + f(u))
    pts = np.zeros((len(m), 3)) + np.asarray(z)
    pts[:, 0] += m * L
    d = np.linalg.norm(pts, axis=1)
    ok = d > 0
    return np.sum(w[ok] * np.exp(1j * a * m[ok] * L) / (FOUR_PI * d[ok]))


@pytest.mark.parametrize("z,a", [((0.4, 0, 0), 1.3), ((0.2, 0.05, 0.1), -0.7), ((2.7, 0, 0), 2.0)])
def test_chain_sum_matches_windowed_brute_force(chain, z, a):
    lat, _ = chain
    got = direct_sum_1d(z, a, lat).value
    assert abs(got - _windowed_1d(z, a)) < 1e-10


def test_chain_sum_quasi_periodic_and_conjugate(chain):
    lat, _ = chain
    z = np.array([0.3, 0.0, 0.0])
    a = 0.9
    q = direct_sum_1d(z, a, lat).value
    # Q(z + l; a) = e^{-i a l} Q(z; a)
    assert abs(direct_sum_1d(z + [3, 0, 0], a, lat).value - np.exp(-3j * a) * q) < 1e-12
    # Q(-z; a) = conj Q(z; a)
    assert abs(direct_sum_1d(-z, a, lat).value - np.conj(q)) < 1e-12


def test_chain_sum_many_matches_single(chain):
    lat, _ = chain
    th = np.array([0.3, 1.1, -2.5])
    z = [0.25, 0.1, 0.0]
    many = direct_sum_1d_many(z, th, lat)
    single = [direct_sum_1d(z, t, lat).value for t in th]
    assert np.allclose(many, single, atol=1e-14)


def test_chain_sum_reports_error_and_cutoff(chain):
    lat, _ = chain
    r = direct_sum_1d([0.4, 0, 0], 1.0, lat, tol=1e-10)
    assert r.estimated_error <= 1e-10
    assert r.terms_used == 2 * int(r.cutoffs[0]) + 1


def test_chain_sum_dump(tmp_path, chain):
    lat, _ = chain
    path = tmp_path / "partial.csv"
    direct_sum_1d([0.4, 0, 0], 1.0, lat, dump=path)
    lines = path.read_text().splitlines()
    assert lines[0] == "cutoff,re,im"
    assert len(lines) > 2


def test_alpha_zero_rejected(chain, square):
    with pytest.raises(AlphaZero):
        direct_sum_1d([0.1, 0, 0], 0.0, chain[0])
    with pytest.raises(AlphaZero):
        direct_sum_1d([0.1, 0, 0], 2 * math.pi, chain[0])
    with pytest.raises(AlphaZero):
        ewald_sum_2d([0.1, 0, 0], [0, 0, 0], square[0])


def test_wrong_dimension_rejected(chain, square):
    with pytest.raises(Unsupported):
        direct_sum_1d([0, 0, 0], 1.0, square[0])
    with pytest.raises(Unsupported):
        ewald_sum_2d([0, 0, 0], [1.0, 0, 0], chain[0])
    lat3 = make_lattice(3, np.eye(3))
    with pytest.raises(Unsupported):
        lattice_sum([0.1, 0, 0], [1.0, 0, 0], lat3)


@pytest.mark.parametrize("z,a", [((0.3, 0.1, 0.05), (1.0, 0.4, 0.0)), ((0.0, 0.0, 0.0), (0.7, -2.0, 0.0))])
def test_ewald_matches_windowed_brute_force(square, z, a):
    lat, _ = square
    assert abs(ewald_sum_2d(z, a, lat).value - brute_force_2d(z, a, lat, cutoff=400)) < 1e-9


def test_ewald_independent_of_eta(square):
    lat, _ = square
    eta = default_eta(lat)
    z, a = (0.2, -0.3, 0.1), (2.0, 1.0, 0.0)
    v = [ewald_sum_2d(z, a, lat, eta=e).value for e in (eta, eta / 2, 2 * eta)]
    assert abs(v[0] - v[1]) < 2e-10
    assert abs(v[0] - v[2]) < 2e-10


def test_ewald_lattice_point_self_term(square):
    lat, _ = square
    a = (1.1, 0.2, 0.0)
    # z on the lattice: the z + m = 0 term is dropped and the sum is quasi-periodic
    q0 = ewald_sum_2d((0, 0, 0), a, lat).value
    q1 = ewald_sum_2d((1, 0, 0), a, lat).value
    assert abs(q1 - np.exp(-1j * a[0]) * q0) < 1e-11


def test_ewald_on_oblique_lattice_matches_brute_force(honey):
    lat, cell = honey
    z = cell.centers[1] - cell.centers[0]
    a = 0.3 * lat.dual_vectors[0] - 0.1 * lat.dual_vectors[1]
    assert abs(ewald_sum_2d(z, a, lat).value - brute_force_2d(z, a, lat, cutoff=400)) < 1e-9


@settings(max_examples=25, deadline=None)
@given(
    x=st.floats(-0.5, 0.5),
    y=st.floats(-0.5, 0.5),
    a1=st.floats(0.05, 3.0),
    a2=st.floats(-3.0, 3.0),
)
def test_ewald_hermitian_symmetry(square, x, y, a1, a2):
    lat, _ = square
    z = np.array([x, y, 0.0])
    a = (a1, a2, 0.0)
    assert abs(ewald_sum_2d(-z, a, lat).value - np.conj(ewald_sum_2d(z, a, lat).value)) < 1e-11


@settings(max_examples=25, deadline=None)
@given(a=st.floats(0.01, math.pi))
def test_closed_form_through_dispatcher(chain, a):
    lat, cell = chain
    p = 1 / (FOUR_PI * 0.1) + lattice_sum([0, 0, 0], a, lat).real
    assert abs(1 / p - chain_closed_form(a)) <= 1e-10 * chain_closed_form(a)
