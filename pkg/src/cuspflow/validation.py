"""Analytic-oracle suites on the disk and the concentric annulus.

Every check returns an OracleCheck with the measured error and its pinned
tolerance; the CLI validate subcommand prints them as a table and the test
suite asserts them individually.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import circle_domain
from .potential import LaplaceSolver

TWO_PI = 2.0 * np.pi


@dataclass
class OracleCheck:
    name: str
    error: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.error <= self.tol

    def row(self) -> str:
        flag = "ok" if self.passed else "FAIL"
        return f"{self.name:44s} {self.error:12.3e} {self.tol:10.1e}   {flag}"


# -- analytic formulas on the unit disk --------------------------------------

def disk_green(x, y) -> float:
    """Green's function of the unit disk, image-charge formula."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ys = y / (y @ y)
    return float(np.log(np.linalg.norm(x - ys) * np.linalg.norm(y)
                        / np.linalg.norm(x - y)) / TWO_PI)


def disk_green_gradient(x, y) -> np.ndarray:
    """Gradient in x of the unit-disk Green's function."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ys = y / (y @ y)
    return ((x - ys) / np.sum((x - ys) ** 2) - (x - y) / np.sum((x - y) ** 2)) / TWO_PI


def annulus_radial(radii, r_out=1.0, r_in=0.9):
    """Harmonic measure of the inner circle in the annulus r_in < |x| < r_out."""
    return np.log(r_out / np.asarray(radii)) / np.log(r_out / r_in)


# -- check suites -------------------------------------------------------------

def potential_checks(N: int = 256, rng_seed: int = 7) -> list[OracleCheck]:
    disk = circle_domain(1.0, (0.0, 0.0), max(N, 256))
    sol = LaplaceSolver(disk, N)
    checks = []

    # constants are harmonic
    mu = sol.solve_dirichlet(np.ones(N))
    pts = np.array([[0.0, 0.0], [0.3, 0.2], [-0.7, 0.1], [0.0, 0.85]])
    vals, grads = sol.eval_harmonic(mu, pts, gradient=True)
    checks.append(OracleCheck("disk: g=1 reproduces u=1", np.abs(vals - 1.0).max(), 1e-10))
    checks.append(OracleCheck("disk: g=1 gradient vanishes", np.abs(grads).max(), 1e-8))

    # harmonic extension of cos(theta) is x1
    theta = np.arctan2(sol.xq[:, 1], sol.xq[:, 0])
    mu = sol.solve_dirichlet(np.cos(theta))
    vals, grads = sol.eval_harmonic(mu, pts, gradient=True)
    checks.append(OracleCheck("disk: cos data -> x1 at (0.3,0.2)...",
                              np.abs(vals - pts[:, 0]).max(), 1e-10))
    checks.append(OracleCheck("disk: cos data gradient (1,0)",
                              np.abs(grads - [1.0, 0.0]).max(), 1e-8))

    # near-boundary evaluation at distance 1e-4
    p = np.array([[(1 - 1e-4) * np.cos(0.7), (1 - 1e-4) * np.sin(0.7)]])
    vals = sol.eval_harmonic(mu, p)
    checks.append(OracleCheck("disk: near-boundary value (d=1e-4)",
                              abs(vals[0] - p[0, 0]), 1e-6))

    # Green's function against the image formula at 100 interior pairs
    rng = np.random.default_rng(rng_seed)
    worst = 0.0
    for _ in range(100):
        while True:
            x = rng.uniform(-0.8, 0.8, 2)
            y = rng.uniform(-0.8, 0.8, 2)
            if x @ x < 0.64 and y @ y < 0.64 and np.sum((x - y) ** 2) > 1e-2:
                break
        worst = max(worst, abs(sol.green_function(x, y) - disk_green(x, y)))
    checks.append(OracleCheck("disk: Green vs image formula (100 pairs)", worst, 1e-8))

    # kernel at the center, against the rotated analytic gradient
    y = np.array([0.5, 0.0])
    K = sol.green_kernel(np.array([0.0, 0.0]), y)
    g = disk_green_gradient(np.array([0.0, 0.0]), y)
    checks.append(OracleCheck("disk: kernel at center", np.abs(K - [-g[1], g[0]]).max(), 1e-8))
    return checks


def annulus_checks(N: int = 512) -> list[OracleCheck]:
    from .certificate import BarrierSolver

    outer = circle_domain(1.0, (0.0, 0.0), max(N, 256))
    inner = circle_domain(0.9, (0.0, 0.0), max(N, 256))
    bar = BarrierSolver(outer, inner, N)
    sol = bar.solve(outer_value=0.0, inner_value=1.0)
    checks = []

    rng = np.random.default_rng(3)
    rr = rng.uniform(0.905, 0.995, 200)
    ang = rng.uniform(0.0, TWO_PI, 200)
    pts = np.column_stack([rr * np.cos(ang), rr * np.sin(ang)])
    vals = bar.eval(sol, pts)
    checks.append(OracleCheck("annulus: interior values vs log solution",
                              np.abs(vals - annulus_radial(rr)).max(), 1e-6))

    dv = bar.outer_normal_derivative(sol)
    exact = 1.0 / np.log(1.0 / 0.9)
    checks.append(OracleCheck("annulus: |grad| on outer circle (rel)",
                              np.abs(-dv - exact).max() / exact, 1e-3))
    return checks


def velocity_checks(h: float = 0.02) -> list[OracleCheck]:
    from .euler import FlowState, velocity

    disk = circle_domain(1.0, (0.0, 0.0), 512)
    sol = LaplaceSolver(disk, 512)
    # unit vorticity on the whole disk: u = (x2/2, -x1/2)
    xs = np.arange(-1.0 + h / 2, 1.0, h)
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    pts = pts[np.sum(pts * pts, axis=1) < 1.0]
    state = FlowState(t=0.0, pos=pts, w=np.ones(len(pts)),
                      area=np.full(len(pts), h * h), marker_s=0.0,
                      blob_eps=2.0 * h, h=h)
    u = velocity(sol, state, np.array([[0.5, 0.0], [0.0, 0.0]]))
    err1 = np.abs(u[0] - [0.0, -0.25]).max()
    err0 = np.abs(u[1]).max()
    return [
        OracleCheck("disk: solid rotation u((0.5,0)) = (0,-0.25)", err1, 1e-3),
        OracleCheck("disk: solid rotation u(0) = 0", err0, 1e-3),
    ]


def run_all(N_disk: int = 256, N_annulus: int = 512) -> list[OracleCheck]:
    checks = potential_checks(N_disk)
    checks += annulus_checks(N_annulus)
    checks += velocity_checks()
    return checks
