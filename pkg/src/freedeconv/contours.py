"""Contour representations of Stieltjes transforms.

A closed contour in the z plane together with samples of G on it determines
every moment of the underlying measure by residue calculus.  This module
discretizes that calculus: moment extraction from sampled contours, and the
construction of a sampled G contour for a product measure from an
S-transform evaluator composed with a circle in the m plane.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import NoContourError, NoisyContourError
from .measures import MomentSequence
from .inversion import RamificationData, slit_domain

__all__ = [
    "ContourRepresentation",
    "ContourMoments",
    "contour_moment",
    "moments_from_contour",
    "contour_rep_from_s",
    "choose_m_contour",
    "winding_number",
]

log = logging.getLogger(__name__)

# adaptive node-doubling policy for moment extraction driven by callers
DEFAULT_NODES = 512
MAX_NODES = 8192

_SYMMETRY_RTOL = 1e-10


def _as_complex_nodes(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=complex)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def _is_conjugate_symmetric(sigma: np.ndarray, values: np.ndarray) -> bool:
    # pair each node with the nearest candidate for its conjugate; sorting
    # tricks break down when conjugate partners carry 1e-16 jitter in the
    # tie-breaking coordinate
    scale = max(float(np.max(np.abs(sigma))), 1.0)
    tree = cKDTree(np.column_stack([sigma.real, sigma.imag]))
    dist, idx = tree.query(np.column_stack([sigma.real, -sigma.imag]))
    if np.max(dist) > _SYMMETRY_RTOL * scale:
        return False
    vscale = max(float(np.max(np.abs(values))), 1.0)
    return bool(
        np.max(np.abs(values[idx] - np.conj(values))) <= _SYMMETRY_RTOL * vscale
    )


@dataclass(frozen=True)
class ContourRepresentation:
    """Sampled contour sigma(t_j) with transform values on the nodes.

    Closed contours store one period without repeating the first node; the
    wrap-around is implied.  `orientation` is +1 for counterclockwise.  The
    `symmetric` flag asserts that the node set is closed under conjugation
    with conjugate-symmetric values, which holds for every contour built
    from a real measure.
    """

    sigma: np.ndarray
    values: np.ndarray
    closed: bool = True
    orientation: int = 1
    symmetric: bool = False

    def __post_init__(self):
        sigma = _as_complex_nodes(self.sigma, "sigma")
        values = _as_complex_nodes(self.values, "values")
        if sigma.size != values.size:
            raise ValueError("sigma and values must have matching length")
        if sigma.size < 16:
            raise ValueError("a contour needs at least 16 nodes")
        if self.orientation not in (1, -1):
            raise ValueError("orientation must be +1 or -1")
        if self.closed:
            gaps = np.abs(np.diff(np.concatenate([sigma, sigma[:1]])))
            if np.any(gaps == 0.0):
                raise ValueError("closed contour has coincident consecutive nodes")
        if self.symmetric and not _is_conjugate_symmetric(sigma, values):
            raise ValueError("contour flagged symmetric is not conjugate-symmetric")
        sigma.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "values", values)

    @property
    def n_nodes(self) -> int:
        return self.sigma.size

    def to_csv(self, path) -> None:
        """Write nodes as rows `t_index, re_sigma, im_sigma, re_value, im_value`.

        17 significant digits, which round-trips IEEE doubles exactly.
        """
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["t_index", "re_sigma", "im_sigma", "re_value", "im_value"]
            )
            for j in range(self.sigma.size):
                writer.writerow(
                    [
                        j,
                        f"{self.sigma[j].real:.17g}",
                        f"{self.sigma[j].imag:.17g}",
                        f"{self.values[j].real:.17g}",
                        f"{self.values[j].imag:.17g}",
                    ]
                )

    @classmethod
    def from_csv(cls, path, closed: bool = True, orientation: int = 1,
                 symmetric: bool = False) -> "ContourRepresentation":
        """Read nodes written by `to_csv`.  Flags are not serialized."""
        sigmas = []
        vals = []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            expected = ["t_index", "re_sigma", "im_sigma", "re_value", "im_value"]
            if [h.strip() for h in header] != expected:
                raise ValueError(f"unexpected contour CSV header: {header}")
            for row in reader:
                if not row:
                    continue
                sigmas.append(complex(float(row[1]), float(row[2])))
                vals.append(complex(float(row[3]), float(row[4])))
        return cls(
            np.asarray(sigmas), np.asarray(vals),
            closed=closed, orientation=orientation, symmetric=symmetric,
        )


def _parametric_derivative(sigma: np.ndarray) -> np.ndarray:
    # spectral differentiation of the 2pi-periodic node parametrization;
    # nodes must be equispaced samples in t for this to hold
    n = sigma.size
    wavenumbers = np.fft.fftfreq(n, d=1.0 / n)
    if n % 2 == 0:
        wavenumbers[n // 2] = 0.0  # odd derivative kills the Nyquist mode
    return np.fft.ifft(1j * wavenumbers * np.fft.fft(sigma))


def contour_moment(rep: ContourRepresentation, k: int) -> complex:
    """k-th moment functional (1/2pi i) of z^k G(z) dz over the contour.

    The nodes are treated as equispaced samples of an analytic periodic
    parametrization, so the trapezoid sum with a spectral derivative of
    sigma(t) converges faster than any power of the node count.  For exact
    values of G of a measure supported inside the contour the result is the
    k-th moment up to that quadrature error.
    """
    if not rep.closed:
        raise ValueError("moment extraction requires a closed contour")
    if rep.orientation != 1:
        raise ValueError("moment extraction requires counterclockwise orientation")
    if k < 0:
        raise ValueError("moment order must be nonnegative")
    dsigma = _parametric_derivative(rep.sigma)
    integrand = rep.sigma**k * rep.values * dsigma
    return complex(np.sum(integrand) / (1j * rep.sigma.size))


class ContourMoments(NamedTuple):
    moments: MomentSequence
    imag_residue: float


def moments_from_contour(rep: ContourRepresentation, K: int) -> ContourMoments:
    """Extract moments m_0..m_K and report the worst imaginary residue.

    Real measures have real moments; the imaginary parts of the contour
    sums are pure discretization noise and the maximum across orders, scaled
    by max(1, |m_k|), is the returned quality diagnostic.  A residue at or
    above 1e-6, or a total mass off 1 by more than 1e-6, means the contour
    does not faithfully enclose a probability measure.
    """
    if K < 1:
        raise ValueError("need at least orders 0 and 1")
    raw = np.array([contour_moment(rep, k) for k in range(K + 1)])
    scaled = np.abs(raw.imag) / np.maximum(1.0, np.abs(raw.real))
    residue = float(np.max(scaled))
    if residue >= 1e-6:
        raise NoisyContourError(
            f"imaginary moment residue {residue:.3e} exceeds 1e-6",
            stage="moments_from_contour",
            diagnostics={"imag_residue": residue},
        )
    if abs(raw[0].real - 1.0) > 1e-6:
        raise NoisyContourError(
            f"contour mass {raw[0].real:.9f} is not 1; the contour misses "
            "support or the transform values are unreliable",
            stage="moments_from_contour",
            diagnostics={"mass": float(raw[0].real)},
        )
    return ContourMoments(MomentSequence(raw.real), residue)


def contour_rep_from_s(
    s_eval: Callable[[complex], complex], m_contour: Sequence[complex]
) -> ContourRepresentation:
    """Build a sampled G contour of the measure whose S-transform is s_eval.

    Each node m on a closed m-plane contour around 0 maps to
    z = (1+m)/(m s(m)), where M(z) = m, hence G(z) = (1+m)/z on the image
    contour.  The image of a counterclockwise m circle winds clockwise
    around the support (z ~ m_1/m near 0), so nodes are reversed when needed
    to hand back a counterclockwise representation.
    """
    m = _as_complex_nodes(m_contour, "m_contour")
    if m.size < 16:
        raise ValueError("m contour needs at least 16 nodes")
    if np.any(m == 0.0):
        raise ValueError("m = 0 is the pole of the inverse moment map")
    try:
        s = np.asarray(s_eval(m), dtype=complex)
        if s.shape != m.shape:
            raise TypeError
    except (TypeError, ValueError):
        s = np.array([complex(s_eval(complex(mj))) for mj in m])
    z = (1.0 + m) / (m * s)
    g = (1.0 + m) / z
    area = 0.5 * np.sum(
        np.imag(np.conj(z) * np.roll(z, -1))
    )
    if area < 0.0:
        z = z[::-1]
        g = g[::-1]
    return ContourRepresentation(
        z, g, closed=True, orientation=1,
        symmetric=_is_conjugate_symmetric(z, g),
    )


def choose_m_contour(
    ram: RamificationData, nodes: int = DEFAULT_NODES, margin: float = 0.1
) -> np.ndarray:
    """Pick a circle in the m plane that clears every branch slit.

    The slits are vertical rays starting at the conjugate pairs of branch
    points, so a circle of radius r avoids the slit at (re, im_min) exactly
    when its crossing height sqrt(r^2 - re^2) stays below im_min (or it
    never reaches the line Re = re).  The radius is the largest value under
    a cap of 1 that keeps a relative `margin` of clearance, found by
    bisection on the feasibility predicate.  Nodes are placed at
    half-integer angles, which keeps the set conjugate-symmetric and off
    the real axis.
    """
    if nodes < 16:
        raise ValueError("need at least 16 contour nodes")
    if not 0.0 < margin < 1.0:
        raise ValueError("margin must lie in (0, 1)")
    dom = slit_domain(ram)
    cap = 1.0  # conditioning: larger radii inflate high-order powers

    def feasible(r: float) -> bool:
        for re, im_min in zip(dom.slit_re, dom.slit_im):
            if r > np.hypot(re, (1.0 - margin) * im_min):
                return False
        return True

    if feasible(cap):
        radius = cap
    else:
        lo, hi = 0.0, cap
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if feasible(mid):
                lo = mid
            else:
                hi = mid
        radius = lo
    if radius < 1e-8:
        raise NoContourError(
            "no circle around 0 clears the branch slits; a branch point "
            "sits too close to the origin",
            stage="choose_m_contour",
            diagnostics={"radius": radius},
        )
    theta = 2.0 * np.pi * (np.arange(nodes) + 0.5) / nodes
    log.debug("m contour radius %.6g with %d nodes", radius, nodes)
    return radius * np.exp(1j * theta)


def winding_number(sigma: Sequence[complex], z0: complex) -> int:
    """Winding count of a closed node sequence around z0, as a diagnostic."""
    rel = np.asarray(sigma, dtype=complex) - z0
    turns = np.angle(np.roll(rel, -1) / rel)
    return int(round(float(np.sum(turns)) / (2.0 * np.pi)))
