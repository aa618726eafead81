"""Contour representation, quadrature, and contour selection."""

import numpy as np
import pytest

from freedeconv.contours import (
    ContourRepresentation,
    choose_m_contour,
    contour_moment,
    contour_rep_from_s,
    moments_from_contour,
    winding_number,
)
from freedeconv.errors import NoContourError, NoisyContourError
from freedeconv.inversion import (
    RamificationData,
    critical_points,
    slit_domain,
    s_transform,
)
from freedeconv.measures import DiscreteMeasure, MarchenkoPastur

from helpers import rand_measure

TWO = DiscreteMeasure([1.0, 2.0], [0.5, 0.5])


def _circle_nodes(center, radius, n):
    # half-integer angles keep the set conjugate-symmetric without real nodes
    theta = 2.0 * np.pi * (np.arange(n) + 0.5) / n
    return center + radius * np.exp(1j * theta)


def _stieltjes_rep(mu, center, radius, n):
    sigma = _circle_nodes(center, radius, n)
    return ContourRepresentation(sigma, mu.stieltjes(sigma), symmetric=True)


# ---------------------------------------------------------------------------
# representation validation
# ---------------------------------------------------------------------------

def test_contour_representation_basic_fields():
    rep = _stieltjes_rep(DiscreteMeasure([1.0], [1.0]), 1.0, 1.0, 32)
    assert rep.n_nodes == 32
    assert rep.closed
    assert rep.orientation == 1
    assert rep.symmetric
    assert not rep.sigma.flags.writeable
    assert not rep.values.flags.writeable


def test_contour_representation_rejects_short_contours():
    sigma = _circle_nodes(0.0, 1.0, 8)
    with pytest.raises(ValueError):
        ContourRepresentation(sigma, np.ones(8, dtype=complex))


def test_contour_representation_rejects_length_mismatch():
    sigma = _circle_nodes(0.0, 1.0, 32)
    with pytest.raises(ValueError):
        ContourRepresentation(sigma, np.ones(31, dtype=complex))


def test_contour_representation_rejects_bad_orientation():
    sigma = _circle_nodes(0.0, 1.0, 32)
    with pytest.raises(ValueError):
        ContourRepresentation(sigma, np.ones(32, dtype=complex), orientation=2)


def test_contour_representation_rejects_coincident_nodes():
    sigma = _circle_nodes(0.0, 1.0, 32)
    sigma[5] = sigma[6]
    with pytest.raises(ValueError):
        ContourRepresentation(sigma, np.ones(32, dtype=complex))


def test_contour_representation_rejects_nonfinite_nodes():
    sigma = _circle_nodes(0.0, 1.0, 32)
    vals = np.ones(32, dtype=complex)
    vals[3] = np.nan
    with pytest.raises(ValueError):
        ContourRepresentation(sigma, vals)


def test_contour_representation_verifies_symmetric_flag():
    sigma = _circle_nodes(0.0, 1.0, 32) + 0.05j  # shifted off symmetry
    with pytest.raises(ValueError):
        ContourRepresentation(sigma, np.ones(32, dtype=complex), symmetric=True)


# ---------------------------------------------------------------------------
# CSV round trip
# ---------------------------------------------------------------------------

def test_contour_csv_roundtrip_is_bit_exact(tmp_path):
    rep = _stieltjes_rep(TWO, 1.5, 2.0, 64)
    path = tmp_path / "contour.csv"
    rep.to_csv(path)
    header = path.read_text().splitlines()[0]
    assert header == "t_index,re_sigma,im_sigma,re_value,im_value"
    back = ContourRepresentation.from_csv(path, symmetric=True)
    assert np.array_equal(back.sigma, rep.sigma)
    assert np.array_equal(back.values, rep.values)


def test_contour_csv_rejects_foreign_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b,c,d,e\n0,1.0,0.0,1.0,0.0\n")
    with pytest.raises(ValueError):
        ContourRepresentation.from_csv(path)


# ---------------------------------------------------------------------------
# moment quadrature
# ---------------------------------------------------------------------------

def test_contour_moment_point_mass():
    rep = _stieltjes_rep(DiscreteMeasure([1.0], [1.0]), 1.0, 1.0, 256)
    assert contour_moment(rep, 0) == pytest.approx(1.0, abs=1e-10)
    assert contour_moment(rep, 1) == pytest.approx(1.0, abs=1e-10)


def test_contour_moment_two_atoms():
    rep = _stieltjes_rep(TWO, 1.5, 2.0, 512)
    assert contour_moment(rep, 2) == pytest.approx(2.5, abs=1e-8)


def test_contour_moment_input_contracts():
    sigma = _circle_nodes(1.5, 2.0, 64)
    vals = TWO.stieltjes(sigma)
    open_rep = ContourRepresentation(sigma, vals, closed=False)
    with pytest.raises(ValueError):
        contour_moment(open_rep, 0)
    cw = ContourRepresentation(sigma, vals, orientation=-1)
    with pytest.raises(ValueError):
        contour_moment(cw, 0)
    rep = ContourRepresentation(sigma, vals)
    with pytest.raises(ValueError):
        contour_moment(rep, -1)


def test_contour_moment_converges_spectrally():
    # errors drop by far more than 4x per node doubling until roundoff;
    # measured 9.0e-2, 4.5e-3, 1.0e-5, 5.1e-11 on this configuration
    errs = []
    for n in (32, 64, 128, 256):
        rep = _stieltjes_rep(TWO, 0.0, 2.2, n)
        errs.append(abs(contour_moment(rep, 2) - 2.5))
    for coarse, fine in zip(errs, errs[1:]):
        if coarse > 1e-12:
            assert fine < coarse / 4.0
    assert errs[-1] < 1e-9


def test_contour_moment_deformation_invariance():
    # two different enclosing circles must agree on every moment
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(10):
        mu = rand_measure(rng, 5, 0.2, 8.0)
        lo, hi = mu.atoms[0], mu.atoms[-1]
        span = max(hi - lo, 1.0)
        results = []
        for cx, r in (
            (0.5 * (lo + hi), 0.6 * span + 0.3),
            (0.5 * (lo + hi) + 0.1 * span, 0.8 * span + 0.5),
        ):
            rep = _stieltjes_rep(mu, cx, r, 512)
            results.append([contour_moment(rep, k).real for k in range(8)])
        worst = max(worst, np.max(np.abs(np.subtract(*results))))
    assert worst <= 1e-8


# ---------------------------------------------------------------------------
# moments_from_contour
# ---------------------------------------------------------------------------

def test_moments_from_contour_point_mass():
    rep = _stieltjes_rep(DiscreteMeasure([1.0], [1.0]), 1.0, 1.0, 256)
    cm = moments_from_contour(rep, 6)
    assert np.allclose(cm.moments.values, np.ones(7), atol=1e-9)
    assert cm.imag_residue < 1e-9


def test_moments_from_contour_two_atoms():
    rep = _stieltjes_rep(TWO, 1.5, 2.0, 512)
    cm = moments_from_contour(rep, 4)
    assert np.allclose(cm.moments.values, [1.0, 1.5, 2.5, 4.5, 8.5], atol=1e-8)


def test_moments_from_contour_detects_partial_enclosure():
    # circle around only the first atom carries mass 0.5, not 1
    rep = _stieltjes_rep(TWO, 1.0, 0.5, 256)
    with pytest.raises(NoisyContourError) as exc_info:
        moments_from_contour(rep, 4)
    assert exc_info.value.diagnostics["mass"] == pytest.approx(0.5, abs=1e-8)


def test_moments_from_contour_detects_noisy_values():
    sigma = _circle_nodes(1.5, 2.0, 256)
    rep = ContourRepresentation(sigma, TWO.stieltjes(sigma) * (1.0 + 0.01j))
    with pytest.raises(NoisyContourError) as exc_info:
        moments_from_contour(rep, 4)
    assert exc_info.value.diagnostics["imag_residue"] >= 1e-6


def test_moments_from_contour_needs_order_one():
    rep = _stieltjes_rep(TWO, 1.5, 2.0, 64)
    with pytest.raises(ValueError):
        moments_from_contour(rep, 0)


# ---------------------------------------------------------------------------
# contour_rep_from_s
# ---------------------------------------------------------------------------

def test_contour_rep_from_s_point_mass():
    # S of a point mass at a is the constant 1/a
    a = 3.0
    mc = _circle_nodes(0.0, 0.3, 64)
    rep = contour_rep_from_s(lambda m: np.full_like(m, 1.0 / a), mc)
    assert rep.orientation == 1
    assert rep.symmetric
    assert winding_number(rep.sigma, a) == 1
    assert contour_moment(rep, 1) == pytest.approx(a, abs=1e-10)


def test_contour_rep_from_s_scalar_callable_matches_vector():
    a = 3.0
    mc = _circle_nodes(0.0, 0.3, 64)
    vec = contour_rep_from_s(lambda m: np.full_like(m, 1.0 / a), mc)
    scal = contour_rep_from_s(lambda m: complex(1.0 / a), mc)
    assert np.array_equal(vec.sigma, scal.sigma)
    assert np.array_equal(vec.values, scal.values)


def test_contour_rep_from_s_marchenko_pastur():
    c = 0.2
    mp = MarchenkoPastur(c)
    mc = _circle_nodes(0.0, 0.3, 128)
    rep = contour_rep_from_s(lambda m: 1.0 / (1.0 + c * m), mc)
    cm = moments_from_contour(rep, 3)
    assert cm.moments.values[1] == pytest.approx(1.0, abs=1e-10)
    assert cm.moments.values[2] == pytest.approx(1.0 + c, abs=1e-10)
    # third moment 1 + 3c + c^2
    assert cm.moments.values[3] == pytest.approx(mp.moment(3), abs=1e-9)
    assert cm.moments.values[3] == pytest.approx(1.64, abs=1e-9)


def test_contour_rep_from_s_input_contracts():
    with pytest.raises(ValueError):
        contour_rep_from_s(lambda m: 1.0, _circle_nodes(0.0, 0.3, 8))
    mc = _circle_nodes(0.0, 0.3, 64)
    mc[0] = 0.0
    with pytest.raises(ValueError):
        contour_rep_from_s(lambda m: 1.0, mc)


# ---------------------------------------------------------------------------
# choose_m_contour
# ---------------------------------------------------------------------------

def test_choose_m_contour_hits_unit_cap_for_clear_slits():
    mc = choose_m_contour(critical_points(TWO), 64, 0.1)
    assert mc.shape == (64,)
    assert np.allclose(np.abs(mc), 1.0, atol=1e-12)
    # half-integer angles: conjugate-symmetric, never real
    assert np.all(np.abs(mc.imag) > 1e-3)
    assert np.angle(mc[0]) == pytest.approx(np.pi / 64)
    for node in mc:
        assert np.min(np.abs(np.conj(node) - mc)) < 1e-12


def test_choose_m_contour_backs_off_from_low_slits():
    # slit starting at 0.2i above the origin: the largest circle keeping a
    # 10% clearance has radius 0.9 * 0.2 = 0.18
    ram = RamificationData(
        np.array([0.3 + 0.3j, 0.3 - 0.3j]),
        np.array([0.0 + 0.2j]),
        "synthetic",
    )
    mc = choose_m_contour(ram, 32, 0.1)
    assert np.abs(mc[0]) == pytest.approx(0.18, abs=1e-9)


def test_choose_m_contour_fails_when_slit_touches_origin():
    ram = RamificationData(
        np.array([0.3 + 0.3j, 0.3 - 0.3j]),
        np.array([0.0 + 1e-9j]),
        "synthetic",
    )
    with pytest.raises(NoContourError):
        choose_m_contour(ram, 32, 0.1)


def test_choose_m_contour_input_contracts():
    ram = critical_points(TWO)
    with pytest.raises(ValueError):
        choose_m_contour(ram, 8, 0.1)
    for margin in (0.0, 1.0, 1.5, -0.2):
        with pytest.raises(ValueError):
            choose_m_contour(ram, 64, margin)


# ---------------------------------------------------------------------------
# winding number
# ---------------------------------------------------------------------------

def test_winding_number_counts_turns():
    sigma = _circle_nodes(1.5, 1.0, 64)
    assert winding_number(sigma, 1.5) == 1
    assert winding_number(sigma, 4.0) == 0
    assert winding_number(sigma[::-1], 1.5) == -1


# ---------------------------------------------------------------------------
# inversion -> contour -> moments round trip
# ---------------------------------------------------------------------------

def test_roundtrip_measure_to_contour_to_moments():
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(8):
        mu = rand_measure(rng, 5, 0.2, 8.0)
        if mu.n_atoms == 1:
            continue
        ram = critical_points(mu)
        dom = slit_domain(ram)
        mc = choose_m_contour(ram, 512, 0.1)
        r_cap = min(np.abs(mc[0]), 0.5)
        mc = mc * (r_cap / np.abs(mc[0]))
        s_vals = np.array([s_transform(mu, m, dom) for m in mc])
        rep = contour_rep_from_s(lambda m: s_vals, mc)
        cm = moments_from_contour(rep, 2 * mu.n_atoms)
        exact = np.array([mu.moment(k) for k in range(2 * mu.n_atoms + 1)])
        got = np.asarray(cm.moments.values, dtype=float)
        err = np.max(np.abs(got - exact) / np.maximum(1.0, np.abs(exact)))
        worst = max(worst, err)
    assert worst <= 1e-6
