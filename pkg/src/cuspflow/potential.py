"""Dirichlet potential theory on a smooth closed curve.

Nystrom discretization of the interior double-layer equation with the
periodic trapezoid rule.  The layer kernel is

    k(x, y) = (1/2pi) (x - y) . n(y) / |x - y|^2,

whose interior jump relation gives the second-kind system (-1/2 I + D).
On the diagonal the kernel has the standard curvature limit; with the
clockwise-signed curvature stored by DomainSpec this is kappa_cw/(4pi)
per unit weight (equivalently -kappa/(4pi) in the textbook
counterclockwise sign convention).

Evaluation close to the boundary switches to a one-sided scheme: the
potential is sampled at four points further along the inward normal where
plain quadrature is spectrally accurate, and a degree-4 polynomial through
those samples plus the known boundary value extrapolates back to the
target.  Gradients use a cubic fit through the four interior samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import make_interp_spline
from scipy.linalg import get_lapack_funcs, lu_factor, lu_solve

from .geometry import DomainSpec, DomainError

INV_2PI = 1.0 / (2.0 * math.pi)


class AssemblyError(RuntimeError):
    """Nystrom matrix is numerically singular."""


class SolveError(RuntimeError):
    """Linear solve failed its residual check."""


class SingularityError(ValueError):
    """Green's function arguments coincide."""


def free_space_green(r2):
    """G0 as a function of |x-y|^2: -(1/2pi) log r = -(1/4pi) log r^2."""
    return -0.5 * INV_2PI * np.log(r2)


def _dlp_matrices(targets: np.ndarray, src: np.ndarray, src_n: np.ndarray,
                  weights: np.ndarray, gradient: bool = False):
    """Dense kernel matrices mapping a density to values (and gradients)."""
    dx = targets[:, 0, None] - src[None, :, 0]
    dy = targets[:, 1, None] - src[None, :, 1]
    r2 = dx * dx + dy * dy
    c = INV_2PI * weights
    dot = dx * src_n[None, :, 0] + dy * src_n[None, :, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / r2
        V = c * dot * inv
        if not gradient:
            return V
        inv2 = inv * inv
        Gx = c * (src_n[None, :, 0] * inv - 2.0 * dot * dx * inv2)
        Gy = c * (src_n[None, :, 1] * inv - 2.0 * dot * dy * inv2)
    return V, Gx, Gy


@dataclass
class Density:
    """Double-layer density sampled at the solver's quadrature nodes."""

    values: np.ndarray
    boundary_values: np.ndarray          # interior boundary limit at the nodes
    _cache: dict = field(default_factory=dict, repr=False)

    def boundary_spline(self, perimeter: float, s_nodes: np.ndarray):
        if "spl" not in self._cache:
            s_ext = np.append(s_nodes, perimeter)
            v = np.append(self.boundary_values, self.boundary_values[0])
            self._cache["spl"] = make_interp_spline(s_ext, v, k=5, bc_type="periodic")
        return self._cache["spl"]


class LaplaceSolver:
    """Interior Dirichlet solver for one DomainSpec curve.

    Immutable after assembly; one LU factorization serves every
    right-hand side.
    """

    def __init__(self, dom: DomainSpec, N: int):
        if N < 128 or N % 2 != 0:
            raise DomainError(f"quadrature count N must be even and >= 128, got {N}")
        self.dom = dom
        self.N = int(N)
        self.s_q = np.arange(N) * (dom.perimeter / N)
        xq, tq, nq, kq = dom.boundary_point(self.s_q)
        self.xq, self.tauq, self.nq, self.kappaq = xq, tq, nq, kq
        self.wq = np.full(N, dom.perimeter / N)
        self.spacing = dom.perimeter / N
        self.near_band = 5.0 * self.spacing

        D = _dlp_matrices(xq, xq, nq, self.wq)
        np.fill_diagonal(D, self.kappaq / (4.0 * math.pi) * self.wq)
        self._dlp_pv = D
        A = D - 0.5 * np.eye(N)
        self._anorm = np.linalg.norm(A, 1)
        self._lu = lu_factor(A)
        gecon = get_lapack_funcs("gecon", (A,))
        rcond, info = gecon(self._lu[0], self._anorm, norm="1")
        if info != 0 or rcond <= 0.0 or 1.0 / rcond > 1e12:
            raise AssemblyError(
                f"double-layer system is near-singular (cond ~ {1.0 / max(rcond, 1e-300):.3e})")
        self.condition_estimate = 1.0 / rcond
        self._A = A

    # -- solves ---------------------------------------------------------------

    def solve_dirichlet(self, g) -> Density:
        g = np.asarray(g, dtype=float)
        if g.shape != (self.N,):
            raise ValueError(f"boundary data must have shape ({self.N},), got {g.shape}")
        if not np.all(np.isfinite(g)):
            raise ValueError("boundary data contains non-finite entries")
        mu = lu_solve(self._lu, g)
        res = np.linalg.norm(self._A @ mu - g)
        if res > 1e-10 * max(np.linalg.norm(g), 1e-300):
            raise SolveError(f"Dirichlet solve residual {res:.3e} exceeds tolerance")
        return Density(values=mu, boundary_values=g.copy())

    def solve_many(self, G: np.ndarray) -> np.ndarray:
        """Solve for a matrix of right-hand sides (N, k); returns densities."""
        U = lu_solve(self._lu, G)
        res = np.linalg.norm(self._A @ U - G, axis=0)
        bad = res > 1e-10 * np.maximum(np.linalg.norm(G, axis=0), 1e-300)
        if np.any(bad):
            raise SolveError(f"{bad.sum()} of {G.shape[1]} solves failed the residual check")
        return U

    # -- evaluation -----------------------------------------------------------

    def eval_matrix(self, pts: np.ndarray, gradient: bool = False):
        """Kernel matrices for direct quadrature at the given targets."""
        return _dlp_matrices(np.atleast_2d(pts), self.xq, self.nq, self.wq, gradient)

    def _near_frames(self, pts: np.ndarray):
        s_star, d, foot, nrm = self.dom.nearest_boundary(pts)
        return s_star, d, foot, nrm

    def eval_harmonic(self, density: Density, pts, gradient: bool = False,
                      check: bool = True):
        """Double-layer potential of density at interior points.

        Dispatches between direct quadrature and the near-boundary
        extrapolation automatically.  Returns values, or (values, gradients).
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if check:
            cls = self.dom.classify(pts)
            if np.any(cls != 1):
                bad = pts[cls != 1][0]
                raise DomainError(f"evaluation point {bad} is not strictly inside the domain")
        s_star, dist, foot, nrm = self._near_frames(pts)
        near = dist <= self.near_band
        vals = np.empty(pts.shape[0])
        grads = np.empty((pts.shape[0], 2)) if gradient else None

        far_pts = pts[~near]
        if far_pts.size:
            out = _dlp_matrices(far_pts, self.xq, self.nq, self.wq, gradient)
            if gradient:
                V, Gx, Gy = out
                vals[~near] = V @ density.values
                grads[~near, 0] = Gx @ density.values
                grads[~near, 1] = Gy @ density.values
            else:
                vals[~near] = out @ density.values
        if np.any(near):
            res = self._near_eval(density, pts[near], s_star[near], dist[near],
                                  foot[near], nrm[near], gradient)
            if gradient:
                vals[near], grads[near] = res
            else:
                vals[near] = res
        return (vals, grads) if gradient else vals

    def _near_offsets(self):
        return self.near_band + self.spacing * np.arange(4)

    def _near_eval(self, density: Density, pts, s_star, dist, foot, nrm,
                   gradient: bool, anchors=None):
        """Extrapolation along the inward normal with the boundary anchor."""
        t_off = self._near_offsets()
        nb = pts.shape[0]
        samples = foot[:, None, :] - t_off[None, :, None] * nrm[:, None, :]
        flat = samples.reshape(-1, 2)
        out = _dlp_matrices(flat, self.xq, self.nq, self.wq, gradient)
        if gradient:
            V, Gx, Gy = out
            sv = (V @ density.values).reshape(nb, 4)
            sgx = (Gx @ density.values).reshape(nb, 4)
            sgy = (Gy @ density.values).reshape(nb, 4)
        else:
            sv = (out @ density.values).reshape(nb, 4)
        if anchors is None:
            spl = density.boundary_spline(self.dom.perimeter, self.s_q)
            anchors = spl(np.mod(s_star, self.dom.perimeter))
        # degree-4 Lagrange basis on fixed nodes {0, t0..t3}, evaluated at dist
        nodes = np.concatenate([[0.0], t_off])
        Lv = _lagrange_weights(nodes, dist)
        vals = Lv[:, 0] * anchors + np.einsum("pk,pk->p", Lv[:, 1:], sv)
        if not gradient:
            return vals
        Lg = _lagrange_weights(t_off, dist)
        gx = np.einsum("pk,pk->p", Lg, sgx)
        gy = np.einsum("pk,pk->p", Lg, sgy)
        return vals, np.column_stack([gx, gy])

    # -- hypersingular boundary limit ------------------------------------------

    def _spectral_ds(self, f: np.ndarray) -> np.ndarray:
        k = np.fft.rfftfreq(self.N, d=1.0 / self.N)
        return np.fft.irfft(np.fft.rfft(f) * (1j * k) * (2.0 * np.pi / self.dom.perimeter),
                            n=self.N)

    def _single_layer_nodes(self, sigma: np.ndarray) -> np.ndarray:
        """S[sigma] at the quadrature nodes with the Kress log-split rule.

        The periodic log kernel is applied spectrally (mode m picks up 1/|m|);
        the smooth remainder goes through the plain trapezoid rule with its
        analytic diagonal limit.
        """
        if "kress_smooth" not in self.__dict__:
            ds = self.s_q[:, None] - self.s_q[None, :]
            sin2 = 4.0 * np.sin(np.pi * ds / self.dom.perimeter) ** 2
            d2 = np.sum((self.xq[:, None, :] - self.xq[None, :, :]) ** 2, axis=2)
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.log(d2 / sin2)
            np.fill_diagonal(ratio, 2.0 * math.log(self.dom.perimeter / (2.0 * math.pi)))
            self.kress_smooth = -ratio * (0.5 * INV_2PI) * self.wq
        m = np.fft.rfftfreq(self.N, d=1.0 / self.N)
        inv_m = np.zeros_like(m)
        inv_m[1:] = 1.0 / m[1:]
        sing = np.fft.irfft(np.fft.rfft(sigma) * inv_m, n=self.N) \
            * (self.dom.perimeter / (4.0 * math.pi))
        return sing + self.kress_smooth @ sigma

    def boundary_normal_derivative(self, density: Density) -> np.ndarray:
        """Outward normal derivative of the double-layer potential at the nodes.

        Maue identity for the Laplace double layer: d/dn D[mu] on the curve
        equals d/ds S[d mu/ds].
        """
        dmu = self._spectral_ds(density.values)
        return self._spectral_ds(self._single_layer_nodes(dmu))

    # -- Green's function -------------------------------------------------------

    def green_correction_data(self, y: np.ndarray) -> np.ndarray:
        """Boundary data -G0(. - y) of the harmonic image term for source y."""
        d2 = np.sum((self.xq - y[None, :]) ** 2, axis=1)
        return -free_space_green(d2)

    def green_function(self, x, y, check: bool = True) -> float:
        """G_D(x, y) for a single pair of interior points."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        r2 = float(np.sum((x - y) ** 2))
        if r2 < 1e-24:
            raise SingularityError("green_function arguments coincide")
        if check:
            if not (self.dom.contains(x) and self.dom.contains(y)):
                raise DomainError("green_function arguments must lie inside the domain")
        g = self.green_correction_data(y)
        mu = self.solve_dirichlet(g)
        h = self.eval_harmonic(mu, x[None, :], check=False)[0]
        return float(free_space_green(r2) + h)

    def green_targets(self, pts: np.ndarray, y: np.ndarray,
                      density: Density | None = None) -> np.ndarray:
        """G_D(pts, y) for many interior targets and one source."""
        pts = np.atleast_2d(pts)
        y = np.asarray(y, dtype=float)
        if density is None:
            density = self.solve_dirichlet(self.green_correction_data(y))
        h = self.eval_harmonic(density, pts, check=False)
        r2 = np.sum((pts - y[None, :]) ** 2, axis=1)
        return free_space_green(r2) + h

    def green_kernel(self, x, y, check: bool = True) -> np.ndarray:
        """K_D(x, y) = perp-gradient in x of G_D(x, y).

        x may lie on the boundary, in which case the tangential limit
        -(dG/dn) tau_cw is returned (computed from one-sided differences of
        G along the inward normal, anchored at G = 0 on the curve).
        """
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if float(np.sum((x - y) ** 2)) < 1e-24:
            raise SingularityError("green_kernel arguments coincide")
        if check and not self.dom.contains(y):
            raise DomainError("green_kernel source must lie inside the domain")
        s_star, dist, foot, nrm = self.dom.nearest_boundary(x[None, :])
        g = self.green_correction_data(y)
        density = self.solve_dirichlet(g)
        if dist[0] <= 1e-9:
            # boundary limit: G = 0 on the curve, gradient purely normal
            sigma = max(math.sqrt(np.sum((foot[0] - y) ** 2)), 4.0 * self.spacing)
            h_n = min(0.025 * sigma, self.near_band)
            probes = foot[0][None, :] - np.array([[h_n], [2.0 * h_n]]) * nrm[0][None, :]
            gv = self.green_targets(probes, y, density=density)
            dgdt = (4.0 * gv[0] - gv[1]) / (2.0 * h_n)
            _, tau, _, _ = self.dom.boundary_point(s_star[0])
            return dgdt * tau
        if check and not self.dom.contains(x):
            raise DomainError("green_kernel target must lie inside the domain or on the curve")
        _, grad = self.eval_harmonic(density, x[None, :], gradient=True, check=False)
        z = x - y
        r2 = float(z @ z)
        g0_grad = -INV_2PI * z / r2
        full = g0_grad + grad[0]
        return np.array([-full[1], full[0]])


def _lagrange_weights(nodes: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Lagrange basis values L_k(t) for fixed nodes; t vectorized."""
    t = np.atleast_1d(t)
    n = nodes.size
    out = np.ones((t.size, n))
    for k in range(n):
        for m in range(n):
            if m != k:
                out[:, k] *= (t - nodes[m]) / (nodes[k] - nodes[m])
    return out


def assemble(dom: DomainSpec, N: int) -> LaplaceSolver:
    return LaplaceSolver(dom, N)
