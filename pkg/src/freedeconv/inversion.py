"""Ramification geometry of the moment map and inverse-branch evaluation.

The moment map M(z) = sum_j w_j x_j / (z - x_j) of an L-atom measure is a
degree-L rational cover of the sphere.  Its inverse branch fixed by
Minv(0) = infinity is single valued on the plane minus vertical slits
through the branch points.  This module finds the ramification data
(critical points, branch points, slits) and evaluates Minv and the
S-transform by predictor-corrector path lifting with Newton correction.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateRamificationError,
    IncompleteRootsError,
    LiftFailureError,
    NumericalError,
    PoleError,
)
from .measures import DiscreteMeasure

__all__ = [
    "RamificationData",
    "SlitDomain",
    "LiftConfig",
    "PathLiftState",
    "critical_points",
    "second_kind_zeros",
    "markov_krein_zero_equivalence",
    "slit_domain",
    "lift_path",
    "lift_many",
    "s_transform",
    "injectivity_check",
]

log = logging.getLogger(__name__)

# residual certificate slack for the critical-point solve, relative to the
# absolute-value sum of the rational terms (backward-error sense)
CERT_TOL = 1e-8
# branch points closer to the real axis than this cannot carry a slit
DEGENERATE_IM = 1e-10


# ---------------------------------------------------------------------------
# ramification data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RamificationData:
    """Critical points of M (conjugate-closed, 2(L-1) of them counting
    multiplicity over the atoms that carry mass at nonzero positions) and
    one branch point per conjugate pair, canonicalized to Im > 0."""

    critical_points: np.ndarray
    branch_points_upper: np.ndarray
    source_measure_id: str

    def __post_init__(self):
        cp = np.asarray(self.critical_points, dtype=complex)
        bp = np.asarray(self.branch_points_upper, dtype=complex)
        cp.setflags(write=False)
        bp.setflags(write=False)
        object.__setattr__(self, "critical_points", cp)
        object.__setattr__(self, "branch_points_upper", bp)


def _effective_poles(mu):
    """Atoms and residues of M: only atoms with w_j * x_j != 0 are poles."""
    c = mu.weights * mu.atoms
    keep = c != 0.0
    return mu.atoms[keep], c[keep]


def _mprime(z, x, c):
    return -np.sum(c / (z[..., None] - x) ** 2, axis=-1)


def _msecond(z, x, c):
    return 2.0 * np.sum(c / (z[..., None] - x) ** 3, axis=-1)


def _poly_roots(x, c):
    # clear denominators of M' on centered coordinates and use the
    # companion matrix; feasible while binomial growth of the coefficients
    # stays inside double range (degree a few hundred)
    shift = 0.5 * (x[0] + x[-1])
    scale = max(0.5 * (x[-1] - x[0]), 1.0)
    u = (x - shift) / scale
    base = np.poly(u)  # monic, degree L
    acc = np.zeros(2 * (u.size - 1) + 1, dtype=float)
    for j in range(u.size):
        # synthetic division: base / (t - u_j), exact since u_j is a root
        q = np.empty(u.size, dtype=float)
        q[0] = base[0]
        for i in range(1, u.size):
            q[i] = base[i] + u[j] * q[i - 1]
        acc += c[j] * np.convolve(q, q)
    roots = np.roots(acc)
    return shift + scale * roots


def _gap_seeds(x, c):
    # one conjugate pair of starting points per gap, from the two-pole
    # local model c_j/(z-x_j)^2 + c_{j+1}/(z-x_{j+1})^2 = 0
    gamma = 1j * np.sqrt(c[1:] / c[:-1])
    upper = (x[1:] - gamma * x[:-1]) / (1.0 - gamma)
    return np.concatenate([upper, np.conj(upper)])


def _aberth(z, x, c, sweeps=80, active=None):
    # simultaneous Newton with pairwise repulsion, evaluated on the rational
    # form: N'/N = M''/M' + sum_k 2/(z - x_k) for N = -M' * prod (z-x_k)^2;
    # `active` restricts updates to a subset while keeping full repulsion
    scale = max(abs(x[0]), abs(x[-1]), 1.0)
    z = np.array(z, dtype=complex)
    idx = np.arange(z.size) if active is None else np.asarray(active, dtype=int)
    with np.errstate(divide="ignore", invalid="ignore"):
        for _ in range(sweeps):
            za = z[idx]
            mp = _mprime(za, x, c)
            ms = _msecond(za, x, c)
            ratio = ms / mp + 2.0 * np.sum(1.0 / (za[:, None] - x), axis=1)
            diff = za[:, None] - z[None, :]
            diff[np.arange(idx.size), idx] = np.inf
            repel = np.sum(1.0 / diff, axis=1)
            denom = ratio - repel
            step = 1.0 / denom
            step = np.where(np.isfinite(step), step, 0.0)
            z[idx] = za - step
            if np.max(np.abs(step)) < 1e-14 * scale:
                break
    return z


def _newton_polish(z, x, c, iters=3):
    with np.errstate(divide="ignore", invalid="ignore"):
        for _ in range(iters):
            mp = _mprime(z, x, c)
            ms = _msecond(z, x, c)
            step = mp / ms
            z = z - np.where(np.isfinite(step), step, 0.0)
    return z


def _certify(roots, x, c):
    # backward-error certificate: |M'(q)| must be tiny relative to the
    # absolute-value sum of its terms
    with np.errstate(divide="ignore", invalid="ignore"):
        level = np.sum(np.abs(c) / np.abs(roots[:, None] - x) ** 2, axis=1)
        resid = np.abs(_mprime(roots, x, c))
    return np.isfinite(resid) & (resid <= CERT_TOL * level)


def critical_points(mu):
    """Solve M'(z) = 0 and report ramification data.

    Returns conjugate-paired critical points (roots of
    sum_j w_j x_j / (z - x_j)^2, a polynomial of degree 2(L-1) after
    clearing denominators) and the branch points M(q) canonicalized to the
    upper half plane.  Atoms at 0 carry no pole of M and are ignored.

    Raises IncompleteRootsError when the residual certificate fails for any
    root: finding *all* solutions is what the downstream slit domain needs.
    """
    if np.any(mu.atoms < 0.0):
        raise ValueError("ramification analysis expects nonnegative atoms")
    x, c = _effective_poles(mu)
    if x.size <= 1:
        return RamificationData(
            np.empty(0, complex), np.empty(0, complex), mu.measure_id
        )
    degree = 2 * (x.size - 1)
    # companion matrices are reliable only at small degree: the cleared
    # polynomial has clustered near-real roots whose coefficient-space
    # conditioning degrades fast, so the gap-seeded simultaneous iteration
    # on the rational form is the main tier
    if degree <= 40:
        starts = np.asarray(_poly_roots(x, c), dtype=complex)
    else:
        starts = _gap_seeds(x, c)
    roots = _newton_polish(_aberth(starts, x, c), x, c)
    if degree <= 40 and not np.all(_certify(roots, x, c)):
        # companion starts carry no gap structure; swap tiers wholesale
        roots = _newton_polish(_aberth(_gap_seeds(x, c), x, c), x, c)
    for jig in (0.0, 3e-2, 1e-1):
        bad = np.where(~_certify(roots, x, c))[0]
        if bad.size == 0:
            break
        # restart only the uncertified roots from their own gap seeds
        # (seed order is preserved by the sweeps) while the certified ones
        # stay frozen as repulsors, then iterate the subset harder
        roots[bad] = _gap_seeds(x, c)[bad] * (1.0 + jig * 1j)
        roots = _aberth(roots, x, c, sweeps=300, active=bad)
        roots[bad] = _newton_polish(roots[bad], x, c)
    ok = _certify(roots, x, c)
    scale = max(abs(x[0]), abs(x[-1]))
    if np.all(ok):
        up = np.sort_complex(roots[roots.imag > 0.0])
        if up.size > 1 and np.min(np.abs(np.diff(up))) < 1e-12 * scale:
            ok = np.zeros(roots.size, dtype=bool)  # collapsed onto duplicates
    if not np.all(ok):
        raise IncompleteRootsError(
            f"{int(np.sum(~ok))} of {degree} critical points failed the "
            "residual certificate",
            stage="critical_points",
            diagnostics={"bad": roots[~ok][:8].tolist()},
        )
    upper = roots[roots.imag > 0.0]
    if 2 * upper.size != degree:
        raise IncompleteRootsError(
            f"critical points do not split into conjugate pairs "
            f"({upper.size} strictly upper of {degree})",
            stage="critical_points",
        )
    upper = upper[np.lexsort((upper.imag, upper.real))]
    paired = np.empty(degree, dtype=complex)
    paired[0::2] = upper
    paired[1::2] = np.conj(upper)
    values = np.sum(c / (upper[:, None] - x), axis=1)
    branch_upper = np.where(values.imag >= 0.0, values, np.conj(values))
    branch_upper = branch_upper[np.lexsort((branch_upper.imag, branch_upper.real))]
    return RamificationData(paired, branch_upper, mu.measure_id)


def second_kind_zeros(mu):
    """Real zeros of G, one per open gap between consecutive atoms.

    G is strictly decreasing between its poles, so plain bisection
    (the fastest safe option here) isolates each zero; refined to 1e-13
    relative tolerance.
    """
    x, w = mu.atoms, mu.weights
    if x.size < 2:
        return np.empty(0, dtype=float)

    def g(t):
        return float(np.sum(w / (t - x)))

    zeros = np.empty(x.size - 1)
    for j in range(x.size - 1):
        gap = x[j + 1] - x[j]
        delta = 0.25 * gap
        lo, hi = x[j] + delta, x[j + 1] - delta
        # shrink toward the poles until the signs bracket the zero
        while g(lo) <= 0.0:
            delta *= 0.5
            lo = x[j] + delta
        delta = 0.25 * gap
        while g(hi) >= 0.0:
            delta *= 0.5
            hi = x[j + 1] - delta
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if g(mid) > 0.0:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-13 * max(abs(lo), abs(hi)):
                break
        zeros[j] = 0.5 * (lo + hi)
    return zeros


def markov_krein_zero_equivalence(mu, z):
    """Evaluate (M'(z), F'(z)) where F' is the Cauchy transform of the
    signed measure delta_0 + sum_j delta_{y_j} - sum_j delta_{x_j} built
    from the zeros of the second kind y_j.

    The two components vanish at exactly the same points; keeping both
    routes makes the pair a cross-check, not a reformulation.
    """
    z = complex(z)
    y = second_kind_zeros(mu)
    guard = np.concatenate([mu.atoms, y, [0.0]])
    if np.min(np.abs(z - guard)) <= 1e-12:
        raise PoleError(
            "markov-krein transform evaluated at a pole", stage="ramification"
        )
    mprime = mu.moment_map_derivative(z)
    fprime = 1.0 / z + np.sum(1.0 / (z - y)) - np.sum(1.0 / (z - mu.atoms))
    return mprime, complex(fprime)


# ---------------------------------------------------------------------------
# slit domain
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SlitDomain:
    """Plane minus vertical rays {re + i t : |t| >= im_min}, one conjugate
    pair of rays per branch point."""

    slit_re: np.ndarray
    slit_im: np.ndarray

    def __post_init__(self):
        re = np.asarray(self.slit_re, dtype=float).ravel()
        im = np.asarray(self.slit_im, dtype=float).ravel()
        if re.size != im.size:
            raise ValueError("slit arrays must have equal length")
        if np.any(im <= 0.0):
            raise ValueError("slit im_min values must be positive")
        re.setflags(write=False)
        im.setflags(write=False)
        object.__setattr__(self, "slit_re", re)
        object.__setattr__(self, "slit_im", im)

    @property
    def n_slits(self):
        return int(self.slit_re.size)

    def distance(self, m):
        """Euclidean distance from m (scalar or array) to the slit set."""
        m = np.asarray(m, dtype=complex)
        if self.n_slits == 0:
            shape = m.shape
            return float("inf") if shape == () else np.full(shape, np.inf)
        dx = np.abs(m[..., None].real - self.slit_re)
        dy = np.maximum(self.slit_im - np.abs(m[..., None].imag), 0.0)
        d = np.min(np.hypot(dx, dy), axis=-1)
        return float(d) if d.ndim == 0 else d

    def contains(self, m):
        d = self.distance(m)
        return d > 0.0 if np.ndim(d) == 0 else d > 0.0

    def segment_clear(self, a, b):
        """True iff the closed segment [a, b] misses every slit."""
        a, b = complex(a), complex(b)
        if self.n_slits == 0:
            return True
        da = a.real - self.slit_re
        db = b.real - self.slit_re
        for k in range(self.n_slits):
            if da[k] == 0.0 and db[k] == 0.0:
                if max(abs(a.imag), abs(b.imag)) >= self.slit_im[k]:
                    return False
                continue
            if da[k] * db[k] > 0.0:
                continue
            t = da[k] / (da[k] - db[k])
            y = a.imag + t * (b.imag - a.imag)
            if abs(y) >= self.slit_im[k]:
                return False
        return True


def slit_domain(ram):
    """Slit domain of the inverse branch from ramification data."""
    bp = ram.branch_points_upper
    if bp.size == 0:
        return SlitDomain(np.empty(0), np.empty(0))
    if np.any(bp.imag < DEGENERATE_IM):
        worst = bp[np.argmin(bp.imag)]
        raise DegenerateRamificationError(
            f"branch point {worst} is too close to the real axis to slit",
            stage="slit_domain",
        )
    return SlitDomain(bp.real.copy(), bp.imag.copy())


# ---------------------------------------------------------------------------
# path lifting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LiftConfig:
    """Step and tolerance knobs for the predictor-corrector lift."""

    newton_tol: float = 1e-12
    max_newton: int = 20
    min_step: float = 1e-9
    start_abs: float = 1e-3

    def __post_init__(self):
        if self.newton_tol <= 0 or self.min_step <= 0 or self.start_abs <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_newton < 1:
            raise ValueError("max_newton must be at least 1")


@dataclass(frozen=True)
class PathLiftState:
    m_current: complex
    w_current: complex
    residual: float
    steps_taken: int


def _plan_path(dom, start, target):
    """Segment chain from start to target avoiding all slits."""
    if dom.segment_clear(start, target):
        return [start, target]
    if dom.n_slits:
        level = 0.5 * float(np.min(dom.slit_im))
        sign = 1.0 if target.imag >= 0.0 else -1.0
        way = complex(target.real, sign * min(level, abs(target.imag) or level))
        if dom.segment_clear(start, way) and dom.segment_clear(way, target):
            return [start, way, target]
    raise LiftFailureError(
        "no slit-free path from the asymptotic seed to the target",
        stage="lift",
    )


def _newton(mu, w, m, cfg):
    """Correct w to a root of M(.) = m; returns (w, residual, iterations)."""
    for it in range(1, cfg.max_newton + 1):
        f = mu.moment_map(w) - m
        res = abs(f)
        if res <= cfg.newton_tol:
            # one polish step: quadratic convergence takes a just-passing
            # residual to machine precision, which downstream quadrature
            # of high moments needs
            d = mu.moment_map_derivative(w)
            if d != 0.0 and np.isfinite(d):
                w2 = w - f / d
                if np.isfinite(w2):
                    f2 = mu.moment_map(w2) - m
                    if abs(f2) <= res:
                        return w2, abs(f2), it
            return w, res, it
        d = mu.moment_map_derivative(w)
        if d == 0.0 or not np.isfinite(d):
            break
        w = w - f / d
        if not np.isfinite(w):
            break
    f = mu.moment_map(w) - m
    return w, abs(f), cfg.max_newton + 1


def _walk(mu, dom, m0, w0, waypoints, cfg, coarse=False):
    """March m from m0 through the waypoints, carrying the lift w along.

    `coarse` starts at the full path length instead of the conservative
    1/64 pacing: right for short continuation hops from an already
    converged lift, where the predictor is nearly exact.  Step halving
    still guards both modes.
    """
    total = sum(
        abs(b - a) for a, b in zip([m0] + waypoints[:-1], waypoints)
    )
    h = total if coarse else total / 64.0
    h_cap = total if coarse else total / 16.0
    m_cur, w = m0, w0
    steps = 0
    easy_streak = 0
    for target in waypoints:
        while m_cur != target:
            remaining = target - m_cur
            # relative cap keeps geometric pacing near m = 0 where the
            # branch behaves like m1/m and linear steps overshoot
            dm = min(h, abs(remaining), 0.15 * abs(m_cur))
            m_next = target if dm >= abs(remaining) else (
                m_cur + remaining / abs(remaining) * dm
            )
            try:
                d = mu.moment_map_derivative(w)
                w_pred = w + (m_next - m_cur) / d if d != 0.0 else w
                w_new, res, iters = _newton(mu, w_pred, m_next, cfg)
            except (PoleError, FloatingPointError):
                res, iters = np.inf, cfg.max_newton + 1
                w_new = w
            if res <= cfg.newton_tol and np.isfinite(w_new):
                m_cur, w = m_next, w_new
                steps += 1
                easy_streak = easy_streak + 1 if iters <= 1 else 0
                if easy_streak >= 4:
                    h = min(2.0 * h, h_cap)
                    easy_streak = 0
            else:
                h *= 0.5
                easy_streak = 0
                if h < cfg.min_step:
                    raise LiftFailureError(
                        "lift step size underflow",
                        stage="lift",
                        state=PathLiftState(m_cur, w, float(res), steps),
                    )
    return w, steps


def lift_path(mu, target_m, dom, cfg=LiftConfig()):
    """Evaluate the inverse branch Minv(target_m) fixed by Minv(0) = inf.

    The lift starts from the second-order asymptotic seed
    w = m_1/m + m_2/m_1 at a small |m| on the ray toward the target, then
    tracks M(w(t)) = m(t) by an explicit predictor and Newton corrector
    with step halving/doubling.  The final residual satisfies
    |M(w) - target_m| <= cfg.newton_tol.
    """
    w, steps = _lift_full(mu, target_m, dom, cfg)
    log.debug(
        "lift target=%s steps=%d residual=%.3e",
        target_m, steps, abs(mu.moment_map(w) - target_m),
    )
    return w


def _lift_full(mu, target_m, dom, cfg=LiftConfig()):
    # lift_path plus the step count, for callers tracking effort
    target_m = complex(target_m)
    if target_m == 0.0:
        raise ValueError("target m must be nonzero (the branch pole)")
    if not dom.contains(target_m):
        raise ValueError("target m lies on a slit, outside the domain")
    m1 = mu.moment(1)
    if m1 <= 0.0:
        raise ValueError("path lifting requires a measure with positive mean")
    start = target_m * (min(cfg.start_abs, abs(target_m) / 10.0) / abs(target_m))
    path = _plan_path(dom, start, target_m)
    w0 = m1 / start + mu.moment(2) / m1
    w0, res, _ = _newton(mu, w0, start, cfg)
    if res > cfg.newton_tol:
        raise LiftFailureError(
            "asymptotic seed did not converge",
            stage="lift",
            state=PathLiftState(start, w0, res, 0),
        )
    return _walk(mu, dom, path[0], w0, path[1:], cfg)


def lift_many(mu, targets, dom, cfg=LiftConfig(), step_counts=None):
    """Lift a sequence of targets, warm-starting each from its predecessor.

    Consecutive targets whose connecting chord stays in the domain continue
    the previous lift; others fall back to a fresh lift from the seed.
    Intended for contour nodes, where chords of the circle never meet the
    slits.  When `step_counts` is a list, per-target walk step counts are
    appended to it.
    """
    targets = np.asarray(targets, dtype=complex)
    out = np.empty_like(targets)
    w = None
    prev = None
    for i, m in enumerate(targets):
        m = complex(m)
        steps = 0
        if w is not None and dom.segment_clear(prev, m):
            try:
                w, steps = _walk(mu, dom, prev, w, [m], cfg, coarse=True)
            except LiftFailureError:
                w, steps = _lift_full(mu, m, dom, cfg)
        else:
            w, steps = _lift_full(mu, m, dom, cfg)
        out[i] = w
        prev = m
        if step_counts is not None:
            step_counts.append(steps)
    return out


def s_transform(mu, m, dom, cfg=LiftConfig()):
    """S(m) = (1+m) / (m * Minv(m)) via path lifting."""
    m = complex(m)
    if m == 0.0:
        raise ValueError("S-transform argument must be nonzero")
    return (1.0 + m) / (m * lift_path(mu, m, dom, cfg))


# ---------------------------------------------------------------------------
# injectivity of M on a closed contour
# ---------------------------------------------------------------------------

def _segment_min_distance(p1, q1, p2, q2):
    """Min distance between two segments, vectorized over the first axis.

    Non-intersecting segments attain their distance at an endpoint, so the
    endpoint-to-segment minimum suffices once proper crossings (detected by
    orientation signs) are zeroed out.
    """

    def cross(o, a, b):
        return ((a - o) * np.conj(b - o)).imag

    def pt_seg(p, a, b):
        ab = b - a
        denom = np.abs(ab) ** 2
        t = np.where(denom > 0, ((p - a) * np.conj(ab)).real / denom, 0.0)
        t = np.clip(t, 0.0, 1.0)
        return np.abs(p - (a + t * ab))

    d1 = cross(p1, q1, p2)
    d2 = cross(p1, q1, q2)
    d3 = cross(p2, q2, p1)
    d4 = cross(p2, q2, q1)
    crossing = (d1 * d2 < 0.0) & (d3 * d4 < 0.0)
    endpoint = np.minimum.reduce([
        pt_seg(p1, p2, q2),
        pt_seg(q1, p2, q2),
        pt_seg(p2, p1, q1),
        pt_seg(q2, p1, q1),
    ])
    return np.where(crossing, 0.0, endpoint)


def injectivity_check(mu, contour):
    """True iff M is one-to-one on the closed polyline `contour`.

    By the boundary principle, M is injective on the enclosed region iff
    the image polyline M(contour) is a simple closed curve, which is tested
    by exact segment-pair intersection with bounding-box pruning.
    Near-tangencies within 1e-10 count as self-intersections.
    """
    sigma = np.asarray(contour, dtype=complex).ravel()
    if sigma.size < 4:
        raise ValueError("contour needs at least 4 points")
    if abs(sigma[0] - sigma[-1]) > 1e-12:
        raise ValueError("contour must be closed (first point = last point)")
    sigma = sigma[:-1]
    if np.min(np.abs(sigma[:, None] - mu.atoms)) <= 1e-14:
        raise ValueError("contour passes through an atom")
    tau = np.atleast_1d(mu.moment_map(sigma))
    n = tau.size
    p = tau
    q = np.roll(tau, -1)
    i_idx, j_idx = np.triu_indices(n, k=2)
    adjacent = (i_idx == 0) & (j_idx == n - 1)
    i_idx, j_idx = i_idx[~adjacent], j_idx[~adjacent]
    # bounding-box pruning
    lo1 = np.minimum(p[i_idx].real, q[i_idx].real)
    hi1 = np.maximum(p[i_idx].real, q[i_idx].real)
    lo2 = np.minimum(p[j_idx].real, q[j_idx].real)
    hi2 = np.maximum(p[j_idx].real, q[j_idx].real)
    lo1i = np.minimum(p[i_idx].imag, q[i_idx].imag)
    hi1i = np.maximum(p[i_idx].imag, q[i_idx].imag)
    lo2i = np.minimum(p[j_idx].imag, q[j_idx].imag)
    hi2i = np.maximum(p[j_idx].imag, q[j_idx].imag)
    margin = 1e-10
    near = (
        (lo1 <= hi2 + margin) & (lo2 <= hi1 + margin)
        & (lo1i <= hi2i + margin) & (lo2i <= hi1i + margin)
    )
    if not np.any(near):
        return True
    i_idx, j_idx = i_idx[near], j_idx[near]
    dist = _segment_min_distance(p[i_idx], q[i_idx], p[j_idx], q[j_idx])
    hit = dist < 1e-10
    if np.any(hit):
        log.debug(
            "image curve self-intersects or is near-tangent at %d segment pairs",
            int(np.sum(hit)),
        )
        return False
    return True
