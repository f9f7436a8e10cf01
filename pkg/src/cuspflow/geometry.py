"""Smoothed stadium domains.

The C^{1,1} stadium of width r is the rectangle (-r,r) x (0,2r) capped by
two radius-r half disks centered at (-r,r) and (r,r); the bottom-edge
midpoint sits at the origin and the center at (0,r).  Its curvature along
arclength is a square wave: 0 on the two straight edges, 1/r on the two
semicircular arcs.  We replace the square wave by its mollification with a
compactly supported C-infinity bump of half-width beta*r and rebuild the
curve from the smoothed tangent angle.  Only one quarter of the curve (from
the bottom-edge midpoint to the right-arc midpoint) is integrated
numerically; the remaining three quarters are exact reflections across the
two symmetry axes, so closure and both mirror symmetries hold to rounding.

Orientation is clockwise: increasing arclength moves toward -x1 along the
bottom edge, and the clockwise tangent satisfies tau = (n2, -n1) with n the
outer normal.  The signed curvature of a convex clockwise curve is negative
and the total curvature is -2*pi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicSpline, make_interp_spline


class DomainError(ValueError):
    """Invalid geometric parameters or out-of-domain points."""


class ResolutionError(ValueError):
    """Node count too small to resolve the curvature mollification."""


# ----------------------------------------------------------------------------
# Mollifier machinery: bump phi(t) = exp(1 - 1/(1-t^2)) on (-1,1), its
# normalized primitive S (a smooth 0->1 step) and the primitive W of S.
# Both are tabulated once on a fine grid; table error is ~1e-13.

_TABLE_N = 16384


def _bump(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    ti = t[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - ti * ti))
    return out


def _build_step_tables():
    t = np.linspace(-1.0, 1.0, _TABLE_N + 1)
    phi = _bump(t)
    raw = cumulative_simpson(phi, x=t, initial=0.0)
    s_vals = raw / raw[-1]
    w_vals = cumulative_simpson(s_vals, x=t, initial=0.0)
    s_spl = CubicSpline(t, s_vals)
    w_spl = CubicSpline(t, w_vals)
    return s_spl, w_spl


_S_SPLINE, _W_SPLINE = _build_step_tables()


def smooth_step(t):
    """C-infinity monotone step: 0 for t <= -1, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    out = np.clip(t, 0.0, 1.0)
    out = np.where(t <= -1.0, 0.0, np.where(t >= 1.0, 1.0, _S_SPLINE(np.clip(t, -1.0, 1.0))))
    return out


def smooth_ramp(t):
    """C-infinity monotone ramp: 0 for t <= 0, 1 for t >= 1 (exact endpoints)."""
    return smooth_step(2.0 * np.asarray(t, dtype=float) - 1.0)


def _step_primitive(t):
    """W(t) = integral of smooth_step from -1 to t; equals t for t >= 1."""
    t = np.asarray(t, dtype=float)
    out = np.where(t <= -1.0, 0.0, np.where(t >= 1.0, t, _W_SPLINE(np.clip(t, -1.0, 1.0))))
    return out


# ----------------------------------------------------------------------------


@dataclass
class DomainSpec:
    """Closed smooth boundary curve sampled at M clockwise arclength nodes.

    Immutable after construction; the lazily built periodic splines make
    shared concurrent reads safe.
    """

    r: float
    center: np.ndarray          # scaling center, (0, 1) for the width-1 stadium
    beta: float                 # curvature-mollification half-width, in units of r
    s: np.ndarray               # (M,) node arclengths, s[0] = 0
    xy: np.ndarray              # (M, 2) node positions
    tau: np.ndarray             # (M, 2) unit clockwise tangents
    normal: np.ndarray          # (M, 2) unit outer normals
    curvature: np.ndarray       # (M,) clockwise-signed curvature
    perimeter: float
    shape: str = "generic"      # "stadium" | "circle": enables fast banding
    shape_tol: float = np.inf   # bound on |capsule distance| over the nodes
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_nodes(self) -> int:
        return self.s.size

    @property
    def spacing(self) -> float:
        return self.perimeter / self.n_nodes

    # -- interpolation ------------------------------------------------------

    def _splines(self):
        if "xy" not in self._cache:
            P = self.perimeter
            s_ext = np.append(self.s, P)

            def per(vals):
                v = np.append(vals, vals[0])
                return make_interp_spline(s_ext, v, k=5, bc_type="periodic")

            self._cache["xy"] = (per(self.xy[:, 0]), per(self.xy[:, 1]))
            # tangent angle: remove the -2*pi/P linear trend, spline the residual
            theta = np.unwrap(np.arctan2(self.tau[:, 1], self.tau[:, 0]))
            resid = theta + 2.0 * np.pi * self.s / P
            self._cache["theta0"] = resid[0]
            self._cache["theta"] = per(resid - resid[0])
            self._cache["kappa"] = per(self.curvature)
        return self._cache

    def boundary_point(self, s):
        """Interpolated frame at arclength s (mod perimeter).

        Returns (point, tau_cw, normal, curvature); arrays when s is an array.
        """
        c = self._splines()
        s_arr = np.asarray(s, dtype=float)
        scalar = s_arr.ndim == 0
        sm = np.mod(np.atleast_1d(s_arr), self.perimeter)
        x = np.stack([c["xy"][0](sm), c["xy"][1](sm)], axis=-1)
        theta = c["theta"](sm) + c["theta0"] - 2.0 * np.pi * sm / self.perimeter
        tau = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        nrm = np.stack([-tau[..., 1], tau[..., 0]], axis=-1)
        kap = c["kappa"](sm)
        if scalar:
            return x[0], tau[0], nrm[0], kap[0]
        return x, tau, nrm, kap

    # -- point classification -----------------------------------------------

    def distance_to_boundary(self, pts) -> np.ndarray:
        """Distance from each point to the node polygon (chord approximation)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        a = self.xy
        b = np.roll(self.xy, -1, axis=0)
        ab = b - a
        den = np.einsum("ij,ij->i", ab, ab)
        out = np.empty(pts.shape[0])
        chunk = max(1, int(4e6 / max(a.shape[0], 1)))
        for lo in range(0, pts.shape[0], chunk):
            p = pts[lo:lo + chunk]
            ap = p[:, None, :] - a[None, :, :]
            t = np.clip(np.einsum("pij,ij->pi", ap, ab) / den, 0.0, 1.0)
            d2 = np.sum((ap - t[:, :, None] * ab[None, :, :]) ** 2, axis=2)
            out[lo:lo + chunk] = np.sqrt(d2.min(axis=1))
        return out

    def classify(self, pts, boundary_tol: float = 1e-9) -> np.ndarray:
        """Tri-state point test: +1 inside, 0 within boundary_tol of the curve,
        -1 outside.  Winding test on the node polygon."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.where(self._winding_inside(pts), 1, -1).astype(np.int8)
        d = self.distance_to_boundary(pts)
        out[d <= boundary_tol] = 0
        return out

    def contains(self, pts):
        """Strict interior test (points on the curve report False)."""
        pts = np.asarray(pts, dtype=float)
        scalar = pts.ndim == 1
        res = self.classify(pts) == 1
        return bool(res[0]) if scalar else res

    def _winding_inside(self, pts: np.ndarray) -> np.ndarray:
        x, y = self.xy[:, 0], self.xy[:, 1]
        x2, y2 = np.roll(x, -1), np.roll(y, -1)
        inside = np.zeros(pts.shape[0], dtype=bool)
        chunk = max(1, int(4e6 / max(x.size, 1)))
        for lo in range(0, pts.shape[0], chunk):
            px = pts[lo:lo + chunk, 0][:, None]
            py = pts[lo:lo + chunk, 1][:, None]
            cond = (y[None, :] > py) != (y2[None, :] > py)
            with np.errstate(divide="ignore", invalid="ignore"):
                xint = x[None, :] + (py - y[None, :]) * (x2 - x)[None, :] / (y2 - y)[None, :]
            crossings = np.sum(cond & (px < xint), axis=1)
            inside[lo:lo + chunk] = (crossings % 2) == 1
        return inside

    def nearest_boundary(self, pts):
        """Project points onto the spline curve.

        Returns (s_star, dist, foot, normal_at_foot).  Newton iteration on the
        stationarity condition (p - X(s)) . tau(s) = 0, seeded analytically
        for the known shapes and at the nearest node otherwise.
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        s = self.arclength_seed(pts)
        if s is None:
            d2 = (pts[:, None, 0] - self.xy[None, :, 0]) ** 2 \
                + (pts[:, None, 1] - self.xy[None, :, 1]) ** 2
            s = self.s[np.argmin(d2, axis=1)].copy()
        window = max(2.0 * self.spacing, 0.2 * self.beta * self.r + 2.0 * self.spacing)
        for _ in range(4):
            x, tau, nrm, kap = self.boundary_point(s)
            dp = pts - x
            f = np.einsum("ij,ij->i", dp, tau)
            fp = -1.0 + kap * np.einsum("ij,ij->i", dp, nrm)
            step = np.clip(-f / fp, -window, window)
            s = np.mod(s + step, self.perimeter)
        x, tau, nrm, _ = self.boundary_point(s)
        dist = np.linalg.norm(pts - x, axis=1)
        return s, dist, x, nrm

    # -- fast shape-aware helpers (banding only; the spline is the truth) -----

    def _capsule_params(self):
        cy = self.center[1]
        return self.r, cy

    def fast_wall_distance(self, pts) -> np.ndarray:
        """Approximate inside-positive distance to the wall.

        Stadium: capsule signed distance (exact for the unsmoothed shape,
        off by at most shape_tol for the mollified one).  Circle: exact.
        Generic shapes fall back to the polygon distance.
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.shape == "circle":
            return self.r - np.linalg.norm(pts - self.center[None, :], axis=1)
        if self.shape == "stadium":
            R, cy = self._capsule_params()
            cx = np.clip(pts[:, 0], -R, R)
            return R - np.hypot(pts[:, 0] - cx, pts[:, 1] - cy)
        return np.where(self.contains(pts), 1.0, -1.0) * self.distance_to_boundary(pts)

    def arclength_seed(self, pts) -> np.ndarray | None:
        """Clockwise arclength of the approximate wall projection (seed only)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.shape == "circle":
            th = np.arctan2(pts[:, 1] - self.center[1], pts[:, 0] - self.center[0])
            return self.r * np.mod(-th, 2.0 * np.pi)
        if self.shape != "stadium":
            return None
        R, cy = self._capsule_params()
        p_ref = (4.0 + 2.0 * math.pi) * R
        x, y = pts[:, 0], pts[:, 1]
        s = np.empty(pts.shape[0])
        flat = np.abs(x) < R
        bottom = flat & (y <= cy)
        top = flat & (y > cy)
        s[bottom] = np.mod(-x[bottom], p_ref)
        s[top] = (2.0 + math.pi) * R + x[top]
        left = (~flat) & (x < 0)
        th = np.arctan2(y[left] - cy, x[left] + R)
        s[left] = R + R * np.mod(-math.pi / 2.0 - th, 2.0 * math.pi)
        right = (~flat) & (x >= 0)
        th = np.arctan2(y[right] - cy, x[right] - R)
        s[right] = (3.0 + math.pi) * R + R * np.mod(math.pi / 2.0 - th, 2.0 * math.pi)
        return s * (self.perimeter / p_ref)

    # -- measures ------------------------------------------------------------

    def polygon_area(self) -> float:
        """Shoelace area of the node polygon (positive; orientation-corrected)."""
        x, y = self.xy[:, 0], self.xy[:, 1]
        return abs(0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def total_curvature(self) -> float:
        """Trapezoid rule for the closed integral of curvature (should be -2*pi)."""
        return float(np.sum(self.curvature) * self.spacing)

    def node_table(self) -> np.ndarray:
        """Columns s, x1, x2, t1, t2, n1, n2, kappa (for CSV export)."""
        return np.column_stack([self.s, self.xy, self.tau, self.normal, self.curvature])


NODE_TABLE_HEADER = "s,x1,x2,t1,t2,n1,n2,kappa"


# ----------------------------------------------------------------------------
# Construction


def _quarter_positions(u: np.ndarray, r: float, beta: float) -> np.ndarray:
    """Unscaled quarter curve (counterclockwise from the origin toward +x1).

    Tangent angle theta(u) = Phi(u)/r with Phi the primitive of the smoothed
    step; positions are exact on the straight run, Gauss quadrature across the
    mollification window, and a closed-form circular arc beyond it.
    """
    a = beta * r
    gl_x, gl_w = np.polynomial.legendre.leggauss(48)

    def theta(v):
        return a * _step_primitive((np.asarray(v) - r) / a) / r

    def window_int(lo, hi):
        mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
        v = mid + half * gl_x
        th = theta(v)
        return half * np.array([np.dot(gl_w, np.cos(th)), np.dot(gl_w, np.sin(th))])

    x_win_end = np.array([r - a, 0.0]) + window_int(r - a, r + a)
    out = np.empty((u.size, 2))
    for i, ui in enumerate(u):
        if ui <= r - a:
            out[i] = (ui, 0.0)
        elif ui < r + a:
            out[i] = np.array([r - a, 0.0]) + window_int(r - a, ui)
        else:
            th = (ui - r) / r
            out[i] = x_win_end + r * np.array([math.sin(th) - math.sin(beta),
                                               math.cos(beta) - math.cos(th)])
    return out


def build_domain(r: float, beta: float, M: int) -> DomainSpec:
    """Smoothed stadium of width r, bottom-edge midpoint at the origin.

    One quarter of the curve is built from the mollified curvature profile and
    reflected across x1 = 0 and x2 = r, which enforces exact closure.  A final
    uniform rescale (1 + O(beta^2)) pins the top midpoint at exactly (0, 2r).
    """
    if r <= 0.0 or beta <= 0.0:
        raise DomainError(f"r and beta must be positive, got r={r}, beta={beta}")
    if beta >= 0.3:
        raise DomainError(f"beta must lie in (0, 0.3), got {beta}")
    if M < 64 or M % 2 != 0:
        raise DomainError(f"M must be even and >= 64, got {M}")
    per0 = (4.0 + 2.0 * math.pi) * r
    nodes_per_window = M * 2.0 * beta * r / per0
    if nodes_per_window < 8.0:
        raise ResolutionError(
            f"M={M} gives {nodes_per_window:.1f} nodes per mollification window "
            f"(need >= 8 for beta={beta})")

    a = beta * r
    L_q = r * (1.0 + math.pi / 2.0)
    # half-height of the raw mollified curve; gamma renormalizes it to exactly r
    y_e = _quarter_positions(np.array([L_q]), r, beta)[0, 1]
    gamma = r / y_e
    P = 4.0 * gamma * L_q
    L = P / 4.0

    s = np.arange(M) * (P / M)
    s_ccw = np.mod(P - s, P)                      # same points, ccw parameter

    # fold each ccw parameter into the first quarter and record the transforms
    m = s_ccw.copy()
    fold_h = m > 2.0 * L                           # x1 -> -x1 branch
    m[fold_h] = P - m[fold_h]
    fold_v = m > L                                 # x2 -> 2r - x2 branch
    m[fold_v] = 2.0 * L - m[fold_v]

    q = gamma * _quarter_positions(m / gamma, r, beta)
    theta_q = a * _step_primitive((m / gamma - r) / a) / r
    kap_q = smooth_step((m / gamma - r) / a) / (gamma * r)

    xy = q.copy()
    tau = np.column_stack([np.cos(theta_q), np.sin(theta_q)])
    xy[fold_v, 1] = 2.0 * r - xy[fold_v, 1]
    tau[fold_v, 0] = -tau[fold_v, 0]
    xy[fold_h, 0] = -xy[fold_h, 0]
    tau[fold_h, 1] = -tau[fold_h, 1]

    # counterclockwise -> clockwise: reverse direction, flip curvature sign
    tau = -tau
    kappa = -kap_q
    normal = np.column_stack([-tau[:, 1], tau[:, 0]])

    dom = DomainSpec(r=float(r), center=np.array([0.0, r]), beta=float(beta),
                     s=s, xy=xy, tau=tau, normal=normal, curvature=kappa,
                     perimeter=P, shape="stadium")
    dom.shape_tol = float(np.abs(dom.fast_wall_distance(xy)).max()) + 1e-12
    return dom


def rescaled(dom: DomainSpec, rho: float) -> DomainSpec:
    """Copy of dom scaled by rho about (0, 1); realizes the width-rho stadium."""
    if not (0.0 < rho <= 1.0):
        raise DomainError(f"rho must lie in (0, 1], got {rho}")
    c = np.array([0.0, 1.0])
    if not np.allclose(dom.center, c, atol=1e-12):
        raise DomainError("rescaled expects a stadium from the width-1 family "
                          f"centered at (0,1); got center {dom.center}")
    return DomainSpec(
        r=dom.r * rho, center=c.copy(), beta=dom.beta,
        s=dom.s * rho, xy=c + rho * (dom.xy - c),
        tau=dom.tau.copy(), normal=dom.normal.copy(),
        curvature=dom.curvature / rho, perimeter=dom.perimeter * rho,
        shape=dom.shape, shape_tol=dom.shape_tol * rho)


def circle_domain(radius: float, center, M: int) -> DomainSpec:
    """Clockwise-sampled circle; validation geometry for the analytic oracles."""
    if radius <= 0 or M < 16 or M % 2 != 0:
        raise DomainError("circle_domain needs radius > 0 and even M >= 16")
    c = np.asarray(center, dtype=float)
    phi = -2.0 * np.pi * np.arange(M) / M
    xy = c + radius * np.column_stack([np.cos(phi), np.sin(phi)])
    tau = np.column_stack([np.sin(phi), -np.cos(phi)])
    normal = np.column_stack([np.cos(phi), np.sin(phi)])
    return DomainSpec(
        r=float(radius), center=c, beta=0.0,
        s=2.0 * np.pi * radius * np.arange(M) / M, xy=xy, tau=tau, normal=normal,
        curvature=np.full(M, -1.0 / radius), perimeter=2.0 * np.pi * radius,
        shape="circle", shape_tol=1e-12)


def stadium_reference(r: float, n: int):
    """Points and tangent angles of the unsmoothed C^{1,1} stadium at n uniform
    clockwise arclengths (beta -> 0 comparison oracle)."""
    P = (4.0 + 2.0 * math.pi) * r
    s = np.arange(n) * P / n
    pts = np.empty((n, 2))
    theta = np.empty(n)
    for i, si in enumerate(s):
        u = si
        if u <= r:                                   # bottom, origin toward -x1
            pts[i] = (-u, 0.0)
            theta[i] = math.pi
        elif u <= r + math.pi * r:                   # left arc
            ang = (u - r) / r
            ctr = np.array([-r, r])
            pts[i] = ctr + r * np.array([-math.sin(ang), -math.cos(ang)])
            theta[i] = math.pi - ang
        elif u <= 3.0 * r + math.pi * r:             # top, toward +x1
            pts[i] = (u - (2.0 * r + math.pi * r), 2.0 * r)
            theta[i] = 0.0
        elif u <= 3.0 * r + 2.0 * math.pi * r:       # right arc
            ang = (u - (3.0 * r + math.pi * r)) / r
            ctr = np.array([r, r])
            pts[i] = ctr + r * np.array([math.sin(ang), math.cos(ang)])
            theta[i] = -ang
        else:                                        # bottom, toward origin
            pts[i] = (r - (u - (3.0 * r + 2.0 * math.pi * r)), 0.0)
            theta[i] = -math.pi
    return pts, theta
