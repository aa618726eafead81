"""End-to-end free multiplicative deconvolution.

Given an empirical spectral measure mu_n of a sample covariance matrix with
aspect ratio c, estimate the population spectrum nu: evaluate the
S-transform ratio S_mu_n / S_MP on a circle in the m plane, map it to a
sampled Stieltjes contour of the estimate, extract moments, and reconstruct
a discrete measure.  The forward direction (nu to the spectrum of the
product) is solved from the fixed-point form of the Marchenko-Pastur
equation and serves as the noise-free oracle in tests and calibrations.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, asdict
from typing import Sequence

import numpy as np

from .errors import ForwardSolverError, InvalidMomentsError
from .measures import DiscreteMeasure, MarchenkoPastur, MomentSequence
from .inversion import (
    LiftConfig,
    SlitDomain,
    critical_points,
    lift_many,
    s_transform,
    slit_domain,
)
from .contours import (
    MAX_NODES,
    ContourRepresentation,
    choose_m_contour,
    contour_rep_from_s,
    moments_from_contour,
)
from .recovery import recover_measure_detailed

__all__ = [
    "DeconvConfig",
    "DeconvDiagnostics",
    "DeconvResult",
    "t_ratio",
    "deconvolve",
    "forward_mp_G",
    "forward_contour",
    "forward_measure",
    "ree_assemble",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DeconvConfig:
    """Tuning knobs of the deconvolution pipeline."""

    contour_margin: float = 0.1
    contour_nodes: int = 512
    max_moments: int = 16
    newton_tol: float = 1e-12
    min_step: float = 1e-9
    rank_tol: float = 1e-4
    max_support: int = 8

    def __post_init__(self):
        if not 0.0 < self.contour_margin < 1.0:
            raise ValueError("contour_margin must lie in (0, 1)")
        if self.contour_nodes < 64:
            raise ValueError("need at least 64 contour nodes")
        if min(self.newton_tol, self.min_step, self.rank_tol) <= 0.0:
            raise ValueError("tolerances must be positive")
        if self.max_support < 1:
            raise ValueError("max_support must be at least 1")
        if self.max_moments < 2 * self.max_support:
            raise ValueError(
                "rank detection up to max_support needs at least "
                "2 * max_support moments"
            )

    def lift_config(self) -> LiftConfig:
        return LiftConfig(newton_tol=self.newton_tol, min_step=self.min_step)


@dataclass(frozen=True)
class DeconvDiagnostics:
    """Run diagnostics: contour quality, recovery rank, lift effort, timings."""

    imag_residue: float
    rank: int
    contour_radius: float
    nodes_used: int
    lift_steps_total: int
    lift_steps_max: int
    t_lift_s: float
    t_recovery_s: float
    t_total_s: float


@dataclass(frozen=True)
class DeconvResult:
    """Estimate nu_hat with the moments and diagnostics that produced it."""

    estimate: DiscreteMeasure
    moments_used: MomentSequence
    diagnostics: DeconvDiagnostics
    config: DeconvConfig
    contour: ContourRepresentation | None = None

    def to_json(self) -> str:
        payload = {
            "estimate": {
                "atoms": self.estimate.atoms.tolist(),
                "weights": self.estimate.weights.tolist(),
            },
            "moments_used": np.asarray(
                self.moments_used.values, dtype=float
            ).tolist(),
            "diagnostics": asdict(self.diagnostics),
            "config": asdict(self.config),
        }
        return json.dumps(payload, indent=2)


def t_ratio(
    mu_n: DiscreteMeasure,
    c: float,
    m: complex,
    dom: SlitDomain,
    cfg: DeconvConfig = DeconvConfig(),
) -> complex:
    """Pointwise ratio S_mu_n(m) / S_MP(m), the S-transform of the estimate."""
    mp = MarchenkoPastur(c)
    return s_transform(mu_n, m, dom, cfg.lift_config()) / mp.s_transform(m)


def _ratio_on_circle(
    mu_n: DiscreteMeasure,
    mp: MarchenkoPastur,
    nodes: np.ndarray,
    dom: SlitDomain,
    lift_cfg: LiftConfig,
    step_counts: list,
) -> np.ndarray:
    # nodes are conjugate-symmetric half-offset circle samples ordered by
    # angle: evaluate the upper half by warm-chained lifts and mirror, the
    # ratio of transforms of real measures commutes with conjugation
    n = nodes.size
    upper = nodes[: n // 2]
    w = lift_many(mu_n, upper, dom, lift_cfg, step_counts=step_counts)
    s_upper = (1.0 + upper) / (upper * w)
    t_upper = s_upper / mp.s_transform(upper)
    out = np.empty(n, dtype=complex)
    out[: n // 2] = t_upper
    out[n // 2 :] = np.conj(t_upper[::-1])
    return out


def deconvolve(
    mu_n: DiscreteMeasure, c: float, cfg: DeconvConfig = DeconvConfig()
) -> DeconvResult:
    """Estimate the population spectrum behind the empirical spectrum mu_n.

    Stages: ramification analysis of mu_n fixes a slit domain; a circle in
    the m plane clear of the slits (and of the S_MP pole at -1/c) carries
    warm-chained lifts evaluating the ratio S_mu_n/S_MP; the ratio induces
    a sampled Stieltjes contour of the estimate; contour moments feed the
    Hankel recovery.  Node count doubles until the extracted moments settle
    below 1e-9 or the cap is reached.  Every failure mode raises a typed
    error carrying its stage; there is no silent fallback.
    """
    if not 0.0 < c < 1.0:
        raise ValueError("aspect ratio c must lie in (0, 1)")
    t0 = time.perf_counter()
    mp = MarchenkoPastur(c)
    ram = critical_points(mu_n)
    dom = slit_domain(ram)
    lift_cfg = cfg.lift_config()

    nodes = choose_m_contour(ram, cfg.contour_nodes, cfg.contour_margin)
    radius = float(np.abs(nodes[0]))
    # stay clear of the S_MP pole at m = -1/c
    pole_cap = 0.5 / c
    if radius > pole_cap:
        nodes = nodes * (pole_cap / radius)
        radius = pole_cap

    step_counts: list = []
    t_lift = 0.0
    prev_vals = None
    n_nodes = nodes.size
    while True:
        t1 = time.perf_counter()
        ratio = _ratio_on_circle(mu_n, mp, nodes, dom, lift_cfg, step_counts)
        t_lift += time.perf_counter() - t1
        rep = contour_rep_from_s(lambda _m: ratio, nodes)
        extracted = moments_from_contour(rep, cfg.max_moments)
        vals = np.asarray(extracted.moments.values, dtype=float)
        if prev_vals is not None:
            settle = np.max(
                np.abs(vals - prev_vals) / np.maximum(1.0, np.abs(vals))
            )
            if float(settle) < 1e-9:
                break
        if n_nodes >= MAX_NODES:
            log.warning(
                "contour moments did not settle below 1e-9 at %d nodes", n_nodes
            )
            break
        prev_vals = vals
        n_nodes *= 2
        theta = 2.0 * np.pi * (np.arange(n_nodes) + 0.5) / n_nodes
        nodes = radius * np.exp(1j * theta)

    t2 = time.perf_counter()
    report = recover_measure_detailed(
        extracted.moments, cfg.max_support, cfg.rank_tol
    )
    t_recovery = time.perf_counter() - t2
    estimate = report.measure

    window = float(np.max(mu_n.atoms)) / mp.lower_edge * 1.1
    if np.any(estimate.atoms < -1e-9) or np.any(estimate.atoms > window):
        raise InvalidMomentsError(
            f"estimated atoms leave the sanity window [0, {window:.3g}]",
            stage="deconvolve",
            diagnostics={"atoms": estimate.atoms.tolist(), "window": window},
        )

    diags = DeconvDiagnostics(
        imag_residue=extracted.imag_residue,
        rank=report.rank,
        contour_radius=radius,
        nodes_used=n_nodes,
        lift_steps_total=int(np.sum(step_counts)) if step_counts else 0,
        lift_steps_max=int(np.max(step_counts)) if step_counts else 0,
        t_lift_s=t_lift,
        t_recovery_s=t_recovery,
        t_total_s=time.perf_counter() - t0,
    )
    return DeconvResult(estimate, extracted.moments, diags, cfg, contour=rep)


def _mp_fixed_point_vec(
    lam: np.ndarray, w: np.ndarray, c: float, z: np.ndarray
) -> np.ndarray:
    """Physical root of B (z - c sum w lam/(1 + lam B)) + 1 = 0, Im z > 0.

    A damped fixed point of B = -1/(z - c h(B)) carries every node to the
    physical branch, then vectorized Newton sharpens to machine precision.
    """
    B = 1.0 / z
    prev = np.full(z.shape, np.inf)
    damp = np.zeros(z.shape, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        for _ in range(10000):
            h = np.sum(
                w[None, :] * lam[None, :] / (1.0 + lam[None, :] * B[:, None]),
                axis=1,
            )
            nxt = -1.0 / (z - c * h)
            step = np.abs(nxt - B)
            damp |= step > prev
            cand = np.where(damp, 0.5 * (B + nxt), nxt)
            done = np.abs(cand - B) <= 1e-8 * np.maximum(1.0, np.abs(cand))
            prev = step
            B = cand
            if np.all(done & np.isfinite(B)):
                break
        else:
            bad = z[~(done & np.isfinite(B))]
            raise ForwardSolverError(
                f"fixed point did not converge at z = {bad[:4].tolist()}",
                stage="forward_mp_G",
            )
        for _ in range(6):
            q = 1.0 + lam[None, :] * B[:, None]
            h = np.sum(w[None, :] * lam[None, :] / q, axis=1)
            dh = -np.sum(w[None, :] * lam[None, :] ** 2 / q**2, axis=1)
            F = B * (z - c * h) + 1.0
            dF = z - c * h - c * B * dh
            newton = F / dF
            B = B - np.where(np.isfinite(newton), newton, 0.0)
        q = 1.0 + lam[None, :] * B[:, None]
        h = np.sum(w[None, :] * lam[None, :] / q, axis=1)
        resid = np.abs(B * (z - c * h) + 1.0)
    scale = 1.0 + np.abs(z) * np.abs(B)
    if np.any(~np.isfinite(B)) or np.any(resid > 1e-11 * scale):
        raise ForwardSolverError(
            "forward solve stalled above residual tolerance",
            stage="forward_mp_G",
            diagnostics={"worst_residual": float(np.max(resid))},
        )
    return B


def forward_mp_G(nu: DiscreteMeasure, c: float, z: complex) -> complex:
    """Stieltjes transform of the spectrum obtained from population nu.

    Solves the fixed-point form of the self-consistency equation for the
    companion transform and converts to the spectrum side; the result is
    the G with Im G < 0 for Im z > 0 that behaves like 1/z at infinity.
    Conjugate inputs give conjugate outputs.
    """
    if not 0.0 < c < 1.0:
        raise ValueError("aspect ratio c must lie in (0, 1)")
    z = complex(z)
    if z.imag == 0.0:
        raise ValueError("forward solve needs z off the real axis")
    if z.imag < 0.0:
        return complex(np.conj(forward_mp_G(nu, c, np.conj(z))))
    B = _mp_fixed_point_vec(nu.atoms, nu.weights, c, np.array([z]))[0]
    return complex((-B - (1.0 - c) / z) / c)


def forward_contour(
    nu: DiscreteMeasure, c: float, nodes: int = 2048
) -> ContourRepresentation:
    """Sampled exact Stieltjes contour of the spectrum produced by nu.

    The contour is an ellipse around the support hull
    [lower_edge(c) min(nu), upper_edge(c) max(nu)].  Its half-height is
    half the hull span, keeping the solver in its contraction regime above
    the support, while the horizontal pad stays small: moment sums at
    order k amplify roundoff by (max |sigma| / support edge)^k, so the
    contour must not overshoot the hull horizontally.  Only the upper half
    is solved; the lower half is its mirror.
    """
    if nodes < 64:
        raise ValueError("need at least 64 contour nodes")
    if not 0.0 < c < 1.0:
        raise ValueError("aspect ratio c must lie in (0, 1)")
    mp = MarchenkoPastur(c)
    lo = mp.lower_edge * float(np.min(nu.atoms))
    hi = mp.upper_edge * float(np.max(nu.atoms))
    span = max(hi - lo, 1e-6 * max(abs(hi), 1.0))
    eta = 0.5 * span
    center = 0.5 * (lo + hi)
    half_width = 0.5 * span + 0.02 * span
    theta = 2.0 * np.pi * (np.arange(nodes) + 0.5) / nodes
    sigma = center + half_width * np.cos(theta) + 1j * eta * np.sin(theta)
    upper = sigma[: nodes // 2]
    B = _mp_fixed_point_vec(nu.atoms, nu.weights, c, upper)
    g_upper = (-B - (1.0 - c) / upper) / c
    values = np.empty(nodes, dtype=complex)
    values[: nodes // 2] = g_upper
    values[nodes // 2 :] = np.conj(g_upper[::-1])
    return ContourRepresentation(
        sigma, values, closed=True, orientation=1, symmetric=True
    )


def forward_measure(
    nu: DiscreteMeasure,
    c: float,
    nodes: int = 2048,
    max_support: int = 16,
    tol: float = 1e-10,
) -> DiscreteMeasure:
    """Discretization of the exact spectrum of the product, as a measure.

    Extracts 2 x max_support moments from the forward contour and runs the
    rank-truncated recovery: the result is the Gauss quadrature proxy of
    the (absolutely continuous) product spectrum, the noise-free stand-in
    for an empirical eigenvalue measure.
    """
    rep = forward_contour(nu, c, nodes)
    extracted = moments_from_contour(rep, 2 * max_support)
    return recover_measure_detailed(extracted.moments, max_support, tol).measure


def ree_assemble(
    observed_eigvecs: np.ndarray,
    observed_eigvals: Sequence[float],
    nu_hat: DiscreteMeasure,
) -> np.ndarray:
    """Rotation-equivariant covariance estimate from estimated spectrum.

    Keeps the observed eigenvectors and replaces the i-th ascending
    eigenvalue with the (i - 1/2)/p quantile of nu_hat.  Replacing O by QO
    conjugates the output by Q, which is the defining equivariance.
    """
    O = np.asarray(observed_eigvecs, dtype=float)
    vals = np.asarray(observed_eigvals, dtype=float)
    if O.ndim != 2 or O.shape[0] != O.shape[1]:
        raise ValueError("eigenvector matrix must be square")
    p = O.shape[0]
    if vals.shape != (p,):
        raise ValueError("eigenvalue count must match the matrix size")
    if np.any(np.diff(vals) < 0.0):
        raise ValueError("eigenvalues must be ascending")
    if np.max(np.abs(O.T @ O - np.eye(p))) > 1e-8:
        raise ValueError("eigenvector matrix is not orthogonal")
    q = np.array([nu_hat.quantile((i + 0.5) / p) for i in range(p)])
    sigma = (O * q[None, :]) @ O.T
    return 0.5 * (sigma + sigma.T)
