import math

import numpy as np
import pytest

from cuspflow.geometry import (
    DomainError,
    ResolutionError,
    build_domain,
    circle_domain,
    rescaled,
    stadium_reference,
)


@pytest.fixture(scope="module")
def dom():
    return build_domain(1.0, 0.1, 512)


def _node_set_distance(a, b):
    d2 = (a[:, None, 0] - b[None, :, 0]) ** 2 + (a[:, None, 1] - b[None, :, 1]) ** 2
    return np.sqrt(d2.min(axis=1)).max()


def test_invalid_parameters():
    with pytest.raises(DomainError):
        build_domain(-1.0, 0.1, 512)
    with pytest.raises(DomainError):
        build_domain(1.0, 0.0, 512)
    with pytest.raises(DomainError):
        build_domain(1.0, 0.35, 512)
    with pytest.raises(DomainError):
        build_domain(1.0, 0.1, 511)
    with pytest.raises(ResolutionError):
        build_domain(1.0, 0.1, 64)  # < 8 nodes per mollification window


def test_midpoints_pinned(dom):
    np.testing.assert_allclose(dom.xy[0], [0.0, 0.0], atol=1e-14)
    np.testing.assert_allclose(dom.xy[dom.n_nodes // 2], [0.0, 2.0], atol=1e-14)


def test_closure(dom):
    # discrete integral of the tangent around the curve is the net displacement
    gap = np.linalg.norm(dom.tau.sum(axis=0) * dom.spacing)
    assert gap <= 1e-10 * dom.perimeter


def test_frames_orthonormal(dom):
    assert np.abs(np.linalg.norm(dom.tau, axis=1) - 1.0).max() < 1e-12
    assert np.abs(np.linalg.norm(dom.normal, axis=1) - 1.0).max() < 1e-12
    assert np.abs(np.einsum("ij,ij->i", dom.tau, dom.normal)).max() < 1e-12
    # tau = (n2, -n1): clockwise convention
    np.testing.assert_allclose(dom.tau[:, 0], dom.normal[:, 1], atol=1e-14)
    np.testing.assert_allclose(dom.tau[:, 1], -dom.normal[:, 0], atol=1e-14)
    # det[n, tau] < 0 for the clockwise frame
    det = dom.normal[:, 0] * dom.tau[:, 1] - dom.normal[:, 1] * dom.tau[:, 0]
    assert np.all(det < 0)


def test_mirror_symmetries(dom):
    flip_x = dom.xy * np.array([-1.0, 1.0])
    assert _node_set_distance(flip_x, dom.xy) <= 1e-10
    flip_y = dom.xy.copy()
    flip_y[:, 1] = 2.0 * dom.center[1] - flip_y[:, 1]
    assert _node_set_distance(flip_y, dom.xy) <= 1e-10


def test_total_curvature_clockwise():
    dom = build_domain(1.0, 0.1, 4096)
    assert abs(dom.total_curvature() + 2.0 * math.pi) <= 1e-8


def test_curvature_derivatives_bounded_under_refinement():
    # C-infinity profile: divided differences of kappa stay bounded as M grows
    sups = []
    for M in (512, 1024, 2048):
        d = build_domain(1.0, 0.1, M)
        sups.append(np.abs(np.diff(np.append(d.curvature, d.curvature[0])) / d.spacing).max())
    assert max(sups) < 1.2 * min(sups) + 1e-9


def test_perimeter_refinement_stable():
    p = [build_domain(1.0, 0.1, M).perimeter for M in (512, 1024, 2048)]
    # construction is M-independent by design, far better than O(M^-4)
    assert abs(p[1] - p[0]) <= p[0] * 512.0**-4
    assert abs(p[2] - p[1]) <= p[1] * 1024.0**-4


def test_perimeter_beta_limit():
    # [(4 + 2*pi) is the C^{1,1} stadium perimeter]
    defects = [abs(build_domain(1.0, b, 2048).perimeter - (4 + 2 * math.pi))
               for b in (0.2, 0.1, 0.05)]
    assert defects[0] > defects[1] > defects[2]
    assert defects[2] < 0.9 * (4 + 2 * math.pi) * 0.05**2


def test_area_shoelace():
    # shoelace on the unsmoothed stadium gives exactly 4 + pi; the smoothed
    # curve differs by O(beta^2) (measured constant ~0.82)
    dom = build_domain(1.0, 0.1, 1024)
    assert abs(dom.polygon_area() - (4 + math.pi)) <= 1.5 * 0.1**2


def test_c1_convergence_to_stadium():
    # sup tangent-angle discrepancy vs the C^{1,1} stadium decreases with beta
    sups = []
    haus = []
    for beta in (0.2, 0.1, 0.05):
        d = build_domain(1.0, beta, 1024)
        ref_pts, ref_theta = stadium_reference(1.0, 4096)
        th = np.unwrap(np.arctan2(d.tau[:, 1], d.tau[:, 0]))
        # compare each node against the reference at the same relative arclength
        sref = np.arange(4096) * (4 + 2 * math.pi) / 4096
        th_ref = np.interp(d.s * (4 + 2 * math.pi) / d.perimeter, sref,
                           np.unwrap(ref_theta))
        th += 2 * math.pi * round((th_ref[0] - th[0]) / (2 * math.pi))
        sups.append(np.abs(th - th_ref).max())
        haus.append(_node_set_distance(d.xy, ref_pts))
    assert sups[0] > sups[1] > sups[2]
    assert sups[2] < 0.15
    assert haus[0] > haus[1] > haus[2]
    assert haus[2] < 0.01


def test_contains_basic(dom):
    assert dom.contains([0.0, 1.0])
    assert not dom.contains([0.0, -1.0])       # lies in the lower stadium
    assert dom.contains([1.95, 1.0])           # right extreme near (2,1)
    assert not dom.contains([2.05, 1.0])


def test_contains_tristate(dom):
    cls = dom.classify(dom.xy)
    assert np.all(cls == 0)                    # every node reported boundary
    centroid = dom.xy.mean(axis=0)
    assert dom.classify(centroid[None, :])[0] == 1


def test_rescaled_identity_and_scaling(dom):
    same = rescaled(dom, 1.0)
    np.testing.assert_allclose(same.xy, dom.xy, atol=1e-15)
    half = rescaled(dom, 0.5)
    assert abs(half.perimeter - 0.5 * dom.perimeter) < 1e-14
    d99 = rescaled(dom, 0.99)
    np.testing.assert_allclose(d99.xy[dom.n_nodes // 2], [0.0, 1.99], atol=1e-12)


def test_rescaled_composition(dom):
    a = rescaled(rescaled(dom, 0.9), 0.8)
    b = rescaled(dom, 0.72)
    assert np.abs(a.xy - b.xy).max() <= 1e-12


def test_rescaled_rejects_bad_rho(dom):
    for rho in (0.0, -0.5, 1.5):
        with pytest.raises(DomainError):
            rescaled(dom, rho)


def test_boundary_point_reproduces_nodes(dom):
    idx = [3, 100, 257, 500]
    x, tau, nrm, kap = dom.boundary_point(dom.s[idx])
    np.testing.assert_allclose(x, dom.xy[idx], atol=1e-13)
    np.testing.assert_allclose(tau, dom.tau[idx], atol=1e-13)
    np.testing.assert_allclose(nrm, dom.normal[idx], atol=1e-13)
    np.testing.assert_allclose(kap, dom.curvature[idx], atol=1e-13)


def test_boundary_point_midpoint_frames(dom):
    x, tau, nrm, _ = dom.boundary_point(0.0)
    np.testing.assert_allclose(x, [0.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(tau, [-1.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(nrm, [0.0, -1.0], atol=1e-12)
    x, tau, nrm, _ = dom.boundary_point(dom.perimeter / 2.0)
    np.testing.assert_allclose(x, [0.0, 2.0], atol=1e-12)
    np.testing.assert_allclose(tau, [1.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(nrm, [0.0, 1.0], atol=1e-12)


def test_boundary_point_consistent_with_positions(dom):
    # spline tangent of the position curve matches the stored frame
    ss = np.linspace(0.0, dom.perimeter, 97, endpoint=False)
    x, tau, _, _ = dom.boundary_point(ss)
    eps = 1e-6
    xp, _, _, _ = dom.boundary_point(ss + eps)
    xm, _, _, _ = dom.boundary_point(ss - eps)
    fd = (xp - xm) / (2 * eps)
    assert np.abs(fd - tau).max() < 1e-5


def test_nearest_boundary(dom):
    pts = np.array([[0.3, 0.001], [1.99, 1.0], [0.0, 1.999]])
    s, dist, foot, nrm = dom.nearest_boundary(pts)
    assert abs(dist[0] - 0.001) < 1e-6
    assert abs(dist[2] - 0.001) < 1e-6
    # foot of (0.3, 0.001) is on the flat bottom
    np.testing.assert_allclose(foot[0], [0.3, 0.0], atol=1e-8)


def test_circle_domain_frames():
    c = circle_domain(1.0, (0.0, 0.0), 256)
    assert abs(c.perimeter - 2 * math.pi) < 1e-14
    assert np.abs(np.einsum("ij,ij->i", c.tau, c.normal)).max() < 1e-14
    assert abs(c.total_curvature() + 2 * math.pi) < 1e-10
    assert c.contains([0.0, 0.0])
    assert not c.contains([1.1, 0.0])
