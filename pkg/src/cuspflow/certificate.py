"""Constants of the transit argument and their numerical verification.

kappa is the infimum of the Green's function over (boundary of the
1-delta rescaled stadium) x (closure of the 1-2*delta rescale); the Hopf
barrier v solves the Dirichlet problem on the thin annulus between the
domain boundary and the 1-delta rescale with data 0 / kappa; epsilon is the
infimum of |grad v| over the outer boundary.  Together they bound the
clockwise boundary drift from below by epsilon * delta^2, which bounds the
marker transit time to the cusp by half the perimeter over that speed.

The annulus problem is represented by double-layer densities on both
curves plus one interior point source anchored at the scaling center (the
standard rank completion for a doubly connected region, closed by the
zero-mean constraint on the inner density).  Evaluation close to either
curve upsamples the densities by trigonometric interpolation and applies
the plain rule on the refined grid; normal derivatives on the outer curve
use one-sided differences with steps scaled to the local gap width, since
the gap at delta = 0.01 is far thinner than any extrapolation stencil.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .geometry import DomainSpec, rescaled
from .potential import (
    INV_2PI,
    LaplaceSolver,
    _dlp_matrices,
    _lagrange_weights,
    free_space_green,
)


class CertificateError(RuntimeError):
    """A §-2-style inequality failed on samples, or inputs are inconsistent."""


class HopfViolation(CertificateError):
    """Non-positive inward normal derivative of the barrier."""


# ----------------------------------------------------------------------------
# Thin-annulus Dirichlet solver


@dataclass
class BarrierDensity:
    mu_outer: np.ndarray
    mu_inner: np.ndarray
    source_strength: float
    outer_value: float
    inner_value: float


class BarrierSolver:
    """Dirichlet problem on the region between two nested closed curves."""

    MAX_UPSAMPLE = 32

    def __init__(self, outer: DomainSpec, inner: DomainSpec, N: int,
                 source_point=None):
        self.outer = outer
        self.inner = inner
        self.N = int(N)
        if source_point is None:
            source_point = inner.center
        self.z0 = np.asarray(source_point, dtype=float)

        self._nodes = {}
        for tag, dom in (("outer", outer), ("inner", inner)):
            s = np.arange(N) * (dom.perimeter / N)
            x, tau, nrm, _ = dom.boundary_point(s)
            w = np.full(N, dom.perimeter / N)
            self._nodes[tag] = {1: (x, nrm, w)}
            self._nodes[tag + "_s"] = s

        xo, no, wo = self._nodes["outer"][1]
        xi, ni, wi = self._nodes["inner"][1]

        D00 = _dlp_matrices(xo, xo, no, wo)
        ko = outer.boundary_point(self._nodes["outer_s"])[3]
        np.fill_diagonal(D00, ko / (4.0 * math.pi) * wo)
        D11 = _dlp_matrices(xi, xi, ni, wi)
        ki = inner.boundary_point(self._nodes["inner_s"])[3]
        np.fill_diagonal(D11, ki / (4.0 * math.pi) * wi)
        D01 = _dlp_matrices(xo, xi, ni, wi)
        D10 = _dlp_matrices(xi, xo, no, wo)

        n = self.N
        A = np.zeros((2 * n + 1, 2 * n + 1))
        A[:n, :n] = D00 - 0.5 * np.eye(n)          # region is interior to the outer curve
        A[:n, n:2 * n] = D01
        A[n:2 * n, :n] = D10
        A[n:2 * n, n:2 * n] = D11 + 0.5 * np.eye(n)  # region is exterior to the inner curve
        A[:n, 2 * n] = free_space_green(np.sum((xo - self.z0) ** 2, axis=1))
        A[n:2 * n, 2 * n] = free_space_green(np.sum((xi - self.z0) ** 2, axis=1))
        A[2 * n, n:2 * n] = wi                      # zero-mean closure on the inner density
        self._lu = lu_factor(A)
        self._A = A

    def solve(self, outer_value: float, inner_value: float) -> BarrierDensity:
        n = self.N
        rhs = np.concatenate([np.full(n, outer_value), np.full(n, inner_value), [0.0]])
        sol = lu_solve(self._lu, rhs)
        res = np.linalg.norm(self._A @ sol - rhs)
        if res > 1e-9 * max(np.linalg.norm(rhs), 1.0):
            raise CertificateError(f"barrier solve residual {res:.3e}")
        return BarrierDensity(mu_outer=sol[:n], mu_inner=sol[n:2 * n],
                              source_strength=float(sol[2 * n]),
                              outer_value=float(outer_value),
                              inner_value=float(inner_value))

    # -- refined-grid evaluation ----------------------------------------------

    def _level_nodes(self, tag: str, level: int):
        store = self._nodes[tag]
        if level not in store:
            dom = self.outer if tag == "outer" else self.inner
            Nf = self.N * level
            s = np.arange(Nf) * (dom.perimeter / Nf)
            x, _, nrm, _ = dom.boundary_point(s)
            w = np.full(Nf, dom.perimeter / Nf)
            store[level] = (x, nrm, w)
        return store[level]

    @staticmethod
    def _upsample(mu: np.ndarray, level: int) -> np.ndarray:
        if level == 1:
            return mu
        n = mu.size
        return np.fft.irfft(np.fft.rfft(mu), n=n * level) * level

    def _pick_level(self, dist: np.ndarray, spacing: float) -> np.ndarray:
        need = spacing / np.maximum(0.4 * dist, 1e-12)
        lev = np.exp2(np.ceil(np.log2(np.maximum(need, 1.0)))).astype(int)
        return np.clip(lev, 1, self.MAX_UPSAMPLE)

    def eval(self, sol: BarrierDensity, pts) -> np.ndarray:
        """Values of the representation at points of the annulus."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.full(pts.shape[0], sol.source_strength
                      * free_space_green(np.sum((pts - self.z0) ** 2, axis=1)))
        for tag, mu in (("outer", sol.mu_outer), ("inner", sol.mu_inner)):
            dom = self.outer if tag == "outer" else self.inner
            spacing = dom.perimeter / self.N
            _, dist, _, _ = dom.nearest_boundary(pts)
            levels = self._pick_level(dist, spacing)
            for lev in np.unique(levels):
                sel = levels == lev
                x, nrm, w = self._level_nodes(tag, int(lev))
                muf = self._upsample(mu, int(lev))
                chunk = max(1, int(2e6 / x.shape[0]))
                idx = np.flatnonzero(sel)
                for lo in range(0, idx.size, chunk):
                    ii = idx[lo:lo + chunk]
                    V = _dlp_matrices(pts[ii], x, nrm, w)
                    out[ii] += V @ muf
        return out

    def outer_normal_derivative(self, sol: BarrierDensity) -> np.ndarray:
        """d/dn of the solution at every outer quadrature node (outer normal).

        Second-order one-sided differences along the inward normal, anchored
        at the imposed outer boundary value; steps are an eighth and a quarter
        of the local gap to the inner curve.
        """
        xo, no, _ = self._nodes["outer"][1]
        _, gap, _, _ = self.inner.nearest_boundary(xo)
        t1 = gap / 8.0
        probes = np.concatenate([xo - t1[:, None] * no, xo - 2.0 * t1[:, None] * no])
        vals = self.eval(sol, probes)
        n = xo.shape[0]
        f1, f2 = vals[:n], vals[n:]
        inward = (4.0 * f1 - f2 - 3.0 * sol.outer_value) / (2.0 * t1)
        return -inward


# ----------------------------------------------------------------------------
# kappa


@dataclass
class KappaReport:
    kappa: float
    minimizing_x: np.ndarray
    minimizing_y: np.ndarray
    n_boundary: int
    n_interior: int
    values: np.ndarray | None = None
    x_points: np.ndarray | None = None
    y_points: np.ndarray | None = None


def _interior_grid(dom: DomainSpec, target: int, rng=None) -> np.ndarray:
    """Roughly `target` interior points on a symmetric uniform grid."""
    area = dom.polygon_area()
    h = math.sqrt(area / max(target, 1))
    xmax = np.abs(dom.xy[:, 0]).max()
    ymin, ymax = dom.xy[:, 1].min(), dom.xy[:, 1].max()
    xs = np.arange(h / 2, xmax, h)
    xs = np.concatenate([-xs[::-1], xs])
    ys = np.arange(ymin + h / 2, ymax, h)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    keep = dom.contains(pts)
    # keep clear of the curve so every sample is strictly interior
    d = dom.distance_to_boundary(pts)
    return pts[keep & (d > 1e-6)]


def green_matrix(solver: LaplaceSolver, x_pts: np.ndarray, y_pts: np.ndarray) -> np.ndarray:
    """G_D(x_i, y_j) for target and source grids, one solve per source.

    Targets inside the near band use the anchored extrapolation with the
    exact boundary data -G0(. - y) as the anchor; the whole sweep reduces to
    a few dense matrix products.
    """
    x_pts = np.atleast_2d(x_pts)
    y_pts = np.atleast_2d(y_pts)
    nx, ny = x_pts.shape[0], y_pts.shape[0]

    rhs = np.empty((solver.N, ny))
    for j, y in enumerate(y_pts):
        rhs[:, j] = solver.green_correction_data(y)
    U = solver.solve_many(rhs)

    s_star, dist, foot, nrm = solver.dom.nearest_boundary(x_pts)
    near = dist <= solver.near_band
    H = np.empty((nx, ny))

    if np.any(~near):
        E = solver.eval_matrix(x_pts[~near])
        H[~near] = E @ U
    if np.any(near):
        t_off = solver._near_offsets()
        f = foot[near]
        nv = nrm[near]
        nn = f.shape[0]
        samples = (f[:, None, :] - t_off[None, :, None] * nv[:, None, :]).reshape(-1, 2)
        S = (solver.eval_matrix(samples) @ U).reshape(nn, 4, ny)
        nodes = np.concatenate([[0.0], t_off])
        Lv = _lagrange_weights(nodes, dist[near])
        # anchor: exact Dirichlet data of the image term at the foot point
        d2_fy = (f[:, None, 0] - y_pts[None, :, 0]) ** 2 + (f[:, None, 1] - y_pts[None, :, 1]) ** 2
        anchors = -free_space_green(d2_fy)
        H[near] = Lv[:, :1] * anchors + np.einsum("pk,pky->py", Lv[:, 1:], S)

    d2 = (x_pts[:, None, 0] - y_pts[None, :, 0]) ** 2 + (x_pts[:, None, 1] - y_pts[None, :, 1]) ** 2
    return free_space_green(d2) + H


def compute_kappa(solver: LaplaceSolver, dom: DomainSpec, delta: float,
                  n_boundary: int = 256, n_interior: int = 600,
                  keep_values: bool = False) -> KappaReport:
    """Discrete infimum of G_D over (boundary of D_{1-delta}) x (D_{1-2 delta})."""
    if not (0.0 < delta <= 0.1):
        raise CertificateError(f"delta must lie in (0, 0.1], got {delta}")
    if n_boundary < 128 or n_interior < 500:
        raise CertificateError("kappa grids need >= 128 boundary and >= 500 interior samples")
    ring_x = rescaled(dom, 1.0 - delta)
    ring_y = rescaled(dom, 1.0 - 2.0 * delta)

    sx = np.arange(n_boundary) * (ring_x.perimeter / n_boundary)
    x_pts = ring_x.boundary_point(sx)[0]
    sy = np.arange(n_boundary) * (ring_y.perimeter / n_boundary)
    y_ring = ring_y.boundary_point(sy)[0]
    y_grid = _interior_grid(ring_y, n_interior)
    y_pts = np.vstack([y_ring, y_grid])

    G = green_matrix(solver, x_pts, y_pts)
    if np.any(G <= 0.0):
        i, j = np.unravel_index(np.argmin(G), G.shape)
        raise CertificateError(
            f"non-positive Green sample {G[i, j]:.3e} at x={x_pts[i]}, y={y_pts[j]}")
    i, j = np.unravel_index(np.argmin(G), G.shape)
    return KappaReport(kappa=float(G[i, j]), minimizing_x=x_pts[i], minimizing_y=y_pts[j],
                       n_boundary=n_boundary, n_interior=len(y_pts),
                       values=G if keep_values else None,
                       x_points=x_pts if keep_values else None,
                       y_points=y_pts if keep_values else None)


# ----------------------------------------------------------------------------
# Hopf barrier and epsilon


@dataclass
class HopfBarrier:
    """Barrier v = kappa * (harmonic measure of the inner curve)."""

    outer: DomainSpec
    inner: DomainSpec
    delta: float
    kappa: float
    solver: BarrierSolver
    density: BarrierDensity
    normal_derivatives: np.ndarray | None = None   # dv/dn at outer nodes

    def eval(self, pts) -> np.ndarray:
        return self.kappa * self.solver.eval(self.density, pts)


def solve_barrier(dom: DomainSpec, delta: float, kappa: float,
                  n_quad: int = 2048) -> HopfBarrier:
    if kappa <= 0.0:
        raise CertificateError(f"kappa must be positive, got {kappa}")
    inner = rescaled(dom, 1.0 - delta)
    solver = BarrierSolver(dom, inner, n_quad)
    density = solver.solve(outer_value=0.0, inner_value=1.0)
    return HopfBarrier(outer=dom, inner=inner, delta=delta, kappa=kappa,
                       solver=solver, density=density)


def compute_epsilon(barrier: HopfBarrier) -> float:
    """inf over the outer boundary of |grad v|, by one-sided normal differences.

    v vanishes on the outer curve, so |grad v| there is the inward normal
    derivative; any non-positive sample contradicts the Hopf lemma and aborts.
    """
    dvdn = barrier.kappa * barrier.solver.outer_normal_derivative(barrier.density)
    inward = -dvdn
    if np.any(inward <= 0.0):
        i = int(np.argmin(inward))
        x = barrier.solver._nodes["outer"][1][0][i]
        raise HopfViolation(
            f"non-positive normal derivative {inward[i]:.3e} at boundary point {x}")
    barrier.normal_derivatives = dvdn
    return float(inward.min())


# ----------------------------------------------------------------------------
# inequality sweeps


@dataclass
class InequalityReport:
    name: str
    worst_margin: float
    tol: float
    n_samples: int
    worst_point: tuple

    @property
    def passed(self) -> bool:
        return self.worst_margin >= -self.tol


def verify_comparison(solver: LaplaceSolver, barrier: HopfBarrier,
                      n_samples: int = 240, rng_seed: int = 0,
                      tol: float = 1e-6) -> InequalityReport:
    """Sample G_D(x, y) >= v(x) on annulus x inner-region pairs."""
    if n_samples < 200:
        raise CertificateError("comparison needs at least 200 sample pairs")
    rng = np.random.default_rng(rng_seed)
    dom = barrier.outer
    delta = barrier.delta
    c = np.asarray(dom.center, dtype=float)

    n_x = max(24, n_samples // 10)
    s = rng.uniform(0.0, dom.perimeter, n_x)
    t = rng.uniform(0.15, 0.85, n_x)
    bp = dom.boundary_point(s)[0]
    x_pts = c + (1.0 - t[:, None] * delta) * (bp - c)

    inner2 = rescaled(dom, 1.0 - 2.0 * delta)
    n_y = -(-n_samples // n_x)
    y_pts = _rejection_sample(inner2, n_y, rng)

    G = green_matrix(solver, x_pts, y_pts)
    v = barrier.eval(x_pts)
    margins = G - v[:, None]
    i, j = np.unravel_index(np.argmin(margins), margins.shape)
    rep = InequalityReport(name="comparison G >= v", worst_margin=float(margins[i, j]),
                           tol=tol, n_samples=int(margins.size),
                           worst_point=(tuple(x_pts[i]), tuple(y_pts[j])))
    if not rep.passed:
        raise CertificateError(
            f"comparison inequality violated: margin {rep.worst_margin:.3e} at {rep.worst_point}")
    return rep


def kernel_lower_bound(solver: LaplaceSolver, barrier: HopfBarrier, epsilon: float,
                       n_samples: int = 200, rng_seed: int = 1,
                       rel_tol: float = 1e-3) -> InequalityReport:
    """Sample |K_D(x, y)| >= epsilon for x on the boundary, y in D_{1-2 delta}.

    The boundary kernel magnitude is the inward normal derivative of
    G(., y), extracted exactly like the barrier gradient.
    """
    rng = np.random.default_rng(rng_seed)
    dom = barrier.outer
    n_y = max(8, n_samples // 32)
    n_x = -(-n_samples // n_y)
    inner2 = rescaled(dom, 1.0 - 2.0 * delta_of(barrier))
    y_pts = _rejection_sample(inner2, n_y, rng)
    s = rng.uniform(0.0, dom.perimeter, n_x)
    xb, tau, nrm, _ = dom.boundary_point(s)

    worst = np.inf
    worst_pt = None
    for y in y_pts:
        density = solver.solve_dirichlet(solver.green_correction_data(y))
        sigma = np.maximum(np.linalg.norm(xb - y[None, :], axis=1), 4.0 * solver.spacing)
        h_n = np.minimum(0.025 * sigma, solver.near_band)
        probes = np.concatenate([xb - h_n[:, None] * nrm, xb - 2.0 * h_n[:, None] * nrm])
        gv = solver.green_targets(probes, y, density=density)
        mag = (4.0 * gv[:n_x] - gv[n_x:]) / (2.0 * h_n)
        ratio = mag / epsilon
        k = int(np.argmin(ratio))
        if ratio[k] < worst:
            worst = float(ratio[k])
            worst_pt = (tuple(xb[k]), tuple(y))
    rep = InequalityReport(name="kernel |K| >= eps", worst_margin=worst - 1.0,
                           tol=rel_tol, n_samples=n_x * n_y, worst_point=worst_pt)
    if not rep.passed:
        raise CertificateError(
            f"kernel lower bound violated: |K|/eps = {worst:.6f} at {worst_pt}")
    return rep


def delta_of(barrier: HopfBarrier) -> float:
    return barrier.delta


def _rejection_sample(dom: DomainSpec, n: int, rng) -> np.ndarray:
    lo = dom.xy.min(axis=0)
    hi = dom.xy.max(axis=0)
    out = []
    while sum(len(o) for o in out) < n:
        cand = rng.uniform(lo, hi, size=(4 * n, 2))
        keep = dom.contains(cand) & (dom.distance_to_boundary(cand) > 1e-6)
        out.append(cand[keep])
    return np.vstack(out)[:n]


# ----------------------------------------------------------------------------
# certificate assembly


@dataclass
class BlowupCertificate:
    delta: float
    kappa: float
    epsilon: float
    speed_bound: float
    transit_bound: float
    beta: float
    N: int
    grids: dict
    worst_margins: dict
    metadata: dict = field(default_factory=dict)

    def validate(self):
        for name in ("delta", "kappa", "epsilon", "speed_bound", "transit_bound"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0.0):
                raise CertificateError(f"certificate field {name} must be positive, got {v!r}")

    def to_dict(self) -> dict:
        return {
            "delta": self.delta, "kappa": self.kappa, "epsilon": self.epsilon,
            "speed_bound": self.speed_bound, "transit_bound": self.transit_bound,
            "beta": self.beta, "N": self.N, "grids": self.grids,
            "worst_margins": self.worst_margins, "metadata": self.metadata,
        }

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def from_dict(cls, d: dict) -> "BlowupCertificate":
        cert = cls(delta=d["delta"], kappa=d["kappa"], epsilon=d["epsilon"],
                   speed_bound=d["speed_bound"], transit_bound=d["transit_bound"],
                   beta=d["beta"], N=d["N"], grids=d.get("grids", {}),
                   worst_margins=d.get("worst_margins", {}),
                   metadata=d.get("metadata", {}))
        cert.validate()
        return cert

    @classmethod
    def load(cls, path) -> "BlowupCertificate":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def assemble_certificate(dom: DomainSpec, solver: LaplaceSolver, delta: float,
                         kappa_report: KappaReport, epsilon: float,
                         comparison: InequalityReport, kernel: InequalityReport,
                         n_barrier: int, metadata: dict | None = None) -> BlowupCertificate:
    speed_bound = epsilon * delta * delta
    # clockwise arclength from the top midpoint (0, 2r) to the origin
    transit_bound = (dom.perimeter / 2.0) / speed_bound
    cert = BlowupCertificate(
        delta=float(delta), kappa=float(kappa_report.kappa), epsilon=float(epsilon),
        speed_bound=float(speed_bound), transit_bound=float(transit_bound),
        beta=float(dom.beta), N=int(solver.N),
        grids={"kappa_boundary": kappa_report.n_boundary,
               "kappa_interior": kappa_report.n_interior,
               "comparison_samples": comparison.n_samples,
               "kernel_samples": kernel.n_samples,
               "barrier_n": int(n_barrier),
               "domain_m": int(dom.n_nodes)},
        worst_margins={"comparison": comparison.worst_margin,
                       "kernel_ratio": kernel.worst_margin + 1.0},
        metadata=metadata or {})
    cert.validate()
    return cert
