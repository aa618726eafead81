"""Forward model, S-transform ratio, deconvolution, and REE assembly."""

import json

import numpy as np
import pytest
from numpy.polynomial.legendre import leggauss

from freedeconv.contours import ContourRepresentation, moments_from_contour
from freedeconv.errors import InvalidMomentsError
from freedeconv.inversion import critical_points, slit_domain, s_transform
from freedeconv.measures import (
    DiscreteMeasure,
    MarchenkoPastur,
    wasserstein_1,
)
from freedeconv.pipeline import (
    DeconvConfig,
    deconvolve,
    forward_contour,
    forward_measure,
    forward_mp_G,
    ree_assemble,
    t_ratio,
)

from helpers import mp_g_quadrature

TWO = DiscreteMeasure([1.0, 2.0], [0.5, 0.5])
ONE = DiscreteMeasure([1.0], [1.0])


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def test_deconv_config_defaults_and_lift_mapping():
    cfg = DeconvConfig()
    assert cfg.contour_nodes == 512
    assert cfg.max_support == 8
    lift = cfg.lift_config()
    assert lift.newton_tol == cfg.newton_tol
    assert lift.min_step == cfg.min_step


def test_deconv_config_validation():
    with pytest.raises(ValueError):
        DeconvConfig(contour_margin=0.0)
    with pytest.raises(ValueError):
        DeconvConfig(contour_margin=1.0)
    with pytest.raises(ValueError):
        DeconvConfig(contour_nodes=32)
    with pytest.raises(ValueError):
        DeconvConfig(newton_tol=0.0)
    with pytest.raises(ValueError):
        DeconvConfig(rank_tol=-1e-6)
    with pytest.raises(ValueError):
        DeconvConfig(max_support=0)
    with pytest.raises(ValueError):
        DeconvConfig(max_moments=8, max_support=8)


# ---------------------------------------------------------------------------
# t_ratio
# ---------------------------------------------------------------------------

def test_t_ratio_is_one_on_pure_noise_spectrum():
    # a fine quadrature discretization of the noise-only spectrum has
    # S close to S_MP, so the ratio is 1 up to discretization error;
    # measured 6.0e-8 on this 200-node rule
    mp = MarchenkoPastur(0.2)
    nodes, wts = leggauss(200)
    xq = 0.5 * (nodes + 1) * (mp.upper_edge - mp.lower_edge) + mp.lower_edge
    wq = wts * np.array([mp.density(x) for x in xq])
    mp_disc = DiscreteMeasure(xq, wq / wq.sum())
    dom = slit_domain(critical_points(mp_disc))
    for m in (0.05 + 0.02j, -0.04 + 0.03j, 0.06j):
        assert abs(t_ratio(mp_disc, 0.2, m, dom) - 1.0) < 1e-6


def test_t_ratio_recovers_population_s_as_noise_vanishes():
    # with c -> 0 the spectrum is the population itself, so the ratio
    # tends to S of the point mass at 2, the constant 1/2
    d2 = DiscreteMeasure([2.0], [1.0])
    dom = slit_domain(critical_points(d2))
    for m in (0.1 + 0.05j, -0.2 + 0.1j, 0.3j):
        assert abs(t_ratio(d2, 1e-6, m, dom) - 0.5) < 1e-5


def test_t_ratio_commutes_with_conjugation():
    dom = slit_domain(critical_points(TWO))
    m = 0.2 + 0.1j
    t_up = t_ratio(TWO, 0.2, m, dom)
    t_dn = t_ratio(TWO, 0.2, np.conj(m), dom)
    assert abs(t_dn - np.conj(t_up)) < 1e-12


# ---------------------------------------------------------------------------
# forward transform
# ---------------------------------------------------------------------------

def test_forward_mp_g_matches_quadrature_oracle():
    c = 0.25
    z = 1.0 + 1.0j
    G = forward_mp_G(ONE, c, z)
    oracle = mp_g_quadrature(MarchenkoPastur(c), 400)(z)
    assert abs(G - oracle) < 1e-10
    assert G.imag < 0.0


def test_forward_mp_g_satisfies_self_consistency():
    # for a unit point mass the transform solves
    # c z G^2 - (z + c - 1) G + 1 = 0
    for c in (0.1, 0.25, 0.5, 0.9):
        for z in (1.0 + 1.0j, 0.5 + 0.2j, 2.0 + 0.05j):
            G = forward_mp_G(ONE, c, z)
            assert abs(c * z * G * G - (z + c - 1.0) * G + 1.0) < 1e-10


def test_forward_mp_g_conjugate_equivariant():
    z = 1.3 + 0.7j
    G = forward_mp_G(TWO, 0.2, z)
    assert forward_mp_G(TWO, 0.2, np.conj(z)) == np.conj(G)


def test_forward_mp_g_decays_at_infinity():
    z = 1e6 + 1e6j
    G = forward_mp_G(TWO, 0.2, z)
    assert abs(G - 1.0 / z) < 1e-8


def test_forward_mp_g_input_contracts():
    with pytest.raises(ValueError):
        forward_mp_G(TWO, 0.2, 2.0)  # real z
    for c in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(ValueError):
            forward_mp_G(TWO, c, 1.0 + 1.0j)


def test_forward_contour_moments_point_mass():
    rep = forward_contour(ONE, 0.2)
    assert rep.symmetric and rep.closed and rep.orientation == 1
    cm = moments_from_contour(rep, 2)
    # product spectrum keeps mass 1 and mean 1; second moment is 1 + c
    assert np.allclose(cm.moments.values, [1.0, 1.0, 1.2], atol=1e-6)


def test_forward_contour_scales_mean_with_population():
    rep = forward_contour(DiscreteMeasure([2.0], [1.0]), 0.2)
    cm = moments_from_contour(rep, 1)
    assert cm.moments.values[1] == pytest.approx(2.0, abs=1e-6)


def test_forward_contour_weak_noise_returns_population_moments():
    rep = forward_contour(TWO, 1e-6)
    cm = moments_from_contour(rep, 4)
    exact = [TWO.moment(k) for k in range(5)]
    assert np.allclose(cm.moments.values, exact, atol=1e-4)


def test_forward_contour_input_contracts():
    with pytest.raises(ValueError):
        forward_contour(TWO, 0.2, nodes=32)
    with pytest.raises(ValueError):
        forward_contour(TWO, 1.5)


def test_forward_measure_mean_and_hull():
    mu = forward_measure(TWO, 0.2)
    assert mu.moment(1) == pytest.approx(1.5, abs=1e-8)
    mp = MarchenkoPastur(0.2)
    assert np.all(mu.atoms >= mp.lower_edge * 1.0 - 1e-9)
    assert np.all(mu.atoms <= mp.upper_edge * 2.0 + 1e-9)


def test_forward_measure_satisfies_s_factorization():
    # S of the product spectrum is S_nu(m) / (1 + c m); check one point
    # on the exact proxy of a point mass at 2
    c = 0.2
    proxy = forward_measure(DiscreteMeasure([2.0], [1.0]), c, tol=1e-8)
    dom = slit_domain(critical_points(proxy))
    for m in (0.05 + 0.05j, -0.1 + 0.08j):
        lhs = s_transform(proxy, m, dom)
        rhs = 0.5 / (1.0 + c * m)
        assert abs(lhs - rhs) < 1e-8


# ---------------------------------------------------------------------------
# deconvolve
# ---------------------------------------------------------------------------

def test_deconvolve_recovers_population_from_exact_spectra():
    # noise-free spectra of random 2- and 3-atom populations;
    # measured worst transport error 1.3e-12
    rng = np.random.default_rng(5)
    worst = 0.0
    for c in (0.1, 0.2, 0.5):
        for _ in range(2):
            l = int(rng.integers(2, 4))
            atoms = np.sort(rng.uniform(0.5, 5.0, l))
            while np.min(np.diff(atoms)) < 0.3:
                atoms = np.sort(rng.uniform(0.5, 5.0, l))
            w = rng.uniform(0.3, 1.0, l)
            nu = DiscreteMeasure(atoms, w / w.sum())
            mu_f = forward_measure(nu, c, tol=1e-8)
            est = deconvolve(mu_f, c).estimate
            worst = max(worst, wasserstein_1(est, nu))
    assert worst <= 1e-3


def test_deconvolve_result_structure():
    nu = TWO
    mu_f = forward_measure(nu, 0.2, tol=1e-8)
    res = deconvolve(mu_f, 0.2)
    assert isinstance(res.contour, ContourRepresentation)
    assert res.contour.symmetric
    assert res.diagnostics.rank == res.estimate.n_atoms
    assert res.diagnostics.imag_residue < 1e-6
    assert res.diagnostics.t_total_s >= 0.0
    # node doubling stops at the first settled refinement
    assert res.diagnostics.nodes_used >= res.config.contour_nodes
    assert res.diagnostics.nodes_used % res.config.contour_nodes == 0
    assert res.moments_used[1] == pytest.approx(1.5, abs=1e-6)
    payload = json.loads(res.to_json())
    assert set(payload) == {"estimate", "moments_used", "diagnostics", "config"}
    assert payload["estimate"]["atoms"] == res.estimate.atoms.tolist()
    assert payload["diagnostics"]["rank"] == res.estimate.n_atoms


def test_deconvolve_rejects_inconsistent_input():
    # a pure point mass cannot be the spectrum of any population under
    # nonzero noise, and the moment gate is the stage that notices
    with pytest.raises(InvalidMomentsError) as exc_info:
        deconvolve(ONE, 0.2)
    assert exc_info.value.stage == "recover_measure"


def test_deconvolve_validates_aspect_ratio():
    mu_f = forward_measure(TWO, 0.2, tol=1e-8)
    for c in (0.0, 1.0, -0.5, 2.0):
        with pytest.raises(ValueError):
            deconvolve(mu_f, c)


def test_deconvolve_honors_config():
    mu_f = forward_measure(TWO, 0.2, tol=1e-8)
    cfg = DeconvConfig(contour_nodes=256, max_moments=12, max_support=6)
    res = deconvolve(mu_f, 0.2, cfg)
    assert res.config.contour_nodes == 256
    assert res.diagnostics.nodes_used >= 256
    assert wasserstein_1(res.estimate, TWO) < 1e-6


# ---------------------------------------------------------------------------
# rotation-equivariant estimate
# ---------------------------------------------------------------------------

def test_ree_point_mass_gives_identity():
    sigma = ree_assemble(np.eye(3), [0.5, 1.0, 2.0], ONE)
    assert np.allclose(sigma, np.eye(3), atol=1e-14)


def test_ree_quantile_diagonal():
    sigma = ree_assemble(np.eye(4), [0.1, 0.2, 0.3, 0.4], TWO)
    assert np.allclose(sigma, np.diag([1.0, 1.0, 2.0, 2.0]), atol=1e-14)


def test_ree_rotation_equivariance():
    rng = np.random.default_rng(7)
    p = 8
    Q, _ = np.linalg.qr(rng.normal(size=(p, p)))
    vals = np.sort(rng.uniform(0.5, 3.0, p))
    base = ree_assemble(np.eye(p), vals, TWO)
    rotated = ree_assemble(Q, vals, TWO)
    assert np.max(np.abs(rotated - Q @ base @ Q.T)) <= 1e-10


def test_ree_input_contracts():
    with pytest.raises(ValueError):
        ree_assemble(np.ones((2, 3)), [1.0, 2.0], TWO)
    with pytest.raises(ValueError):
        ree_assemble(np.eye(3), [1.0, 2.0], TWO)
    with pytest.raises(ValueError):
        ree_assemble(np.eye(2), [2.0, 1.0], TWO)
    with pytest.raises(ValueError):
        ree_assemble(np.full((2, 2), 0.5), [1.0, 2.0], TWO)
