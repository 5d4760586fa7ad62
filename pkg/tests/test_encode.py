import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gpdkit.candgen import GraspCandidate, sample_candidates
from gpdkit.cloud import CloudWithViewpoints, Viewpoint
from gpdkit.encode import (SUBSET_OF_FIFTEEN, CandidateGrid, Variant, build_grid, candidate_box,
                           encode, encode_channels, free_heights, occluded_from, project)
from gpdkit.localgeom import LocalFrame, estimate_normals
from oracles import cell_hidden, cells_hidden, project_loops
from test_localgeom import random_rotation

G = 60


def axis_candidate(aperture=0.07, depth=0.06, height=0.02):
    """Candidate whose hand frame is the world frame (approach +x)."""
    frame = LocalFrame(np.zeros(3), np.array([-1.0, 0, 0]), np.array([0.0, 1, 0]),
                       np.array([0.0, 0, -1]), 20)
    return GraspCandidate(np.eye(3), np.zeros(3), frame, aperture, depth, height)


def cell_center(c, idx):
    origin, R, ext = candidate_box(c)
    return origin + R @ ((np.asarray(idx) + 0.5) / G * ext)


def test_single_point_grid():
    c = axis_candidate()
    p = cell_center(c, (30, 30, 30))
    vp = np.array([-0.4, 0.15, 0.25])
    cloud = CloudWithViewpoints.single_view([p], Viewpoint(0, vp))
    grid = build_grid(cloud, c, normals=np.array([[0.0, 0, 1]]))
    assert grid.occupancy.sum() == 1 and grid.occupancy[30, 30, 30]
    np.testing.assert_allclose(grid.normals[30, 30, 30], [0, 0, 1])
    want = cells_hidden(vp, grid.cell_centers(), [p], 0.002).reshape((G,) * 3)
    want[30, 30, 30] = False
    assert want.sum() > 0
    np.testing.assert_array_equal(grid.unobserved, want)
    # every hidden cell lies beyond the point as seen from the viewpoint
    centers = grid.cell_centers()[grid.unobserved.reshape(-1)]
    assert np.all(np.linalg.norm(centers - vp, axis=1) > np.linalg.norm(p - vp))


def test_free_space_grid():
    c = axis_candidate()
    cloud = CloudWithViewpoints.single_view([[0.5, 0.5, 0.5]], Viewpoint(0, (-0.5, 0, 0)))
    grid = build_grid(cloud, c, normals=np.array([[0.0, 0, 1]]))
    assert not grid.occupancy.any() and not grid.unobserved.any()
    assert not encode_channels(grid, Variant.FIFTEEN).any()


@pytest.fixture(scope="module")
def wall():
    c = axis_candidate()
    ys, zs = np.meshgrid(np.arange(-0.03, 0.03, 0.0005), np.arange(-0.06, 0.06, 0.0005))
    mid = 0.0305
    pts = np.column_stack([np.full(ys.size, mid), ys.ravel(), zs.ravel()])
    cloud = CloudWithViewpoints.single_view(pts, Viewpoint(0, (-0.6, 0.0, 0.0)))
    normals = np.tile([-1.0, 0, 0], (len(pts), 1))
    return c, build_grid(cloud, c, normals), mid


def test_wall_shadow(wall):
    c, grid, mid = wall
    x = grid.cell_centers()[:, 0].reshape((G,) * 3)
    assert grid.unobserved[x > mid + 1e-4].all()
    # cells in front of the wall's own slab see the viewpoint
    assert not grid.unobserved[x < mid - 5e-4].any()
    assert not (grid.occupancy & grid.unobserved).any()


def test_kappler_free_channel_on_wall(wall):
    _, grid, _ = wall
    img = encode_channels(grid, Variant.THREE_APPROACH_KAPPLER)
    free = ~grid.occupancy & ~grid.unobserved
    for i in range(0, G, 7):
        for j in range(0, G, 5):
            col = free[:, i, j]
            want = (np.flatnonzero(col) + 1).mean() / G if col.any() else 0.0
            assert abs(img[i, j, 2] - want) < 1e-6
    assert abs(img[0, 0, 2] - 15.5 / 60) < 1e-6
    np.testing.assert_array_equal(img[..., :2], project(grid, 0)[..., :2])
    np.testing.assert_array_equal(img[..., 2], free_heights(grid, 0))


def make_grid(occ, unobs=None, normals=None):
    g = occ.shape[0]
    unobs = np.zeros_like(occ) if unobs is None else unobs
    if normals is None:
        normals = np.zeros((g, g, g, 3), np.float32)
    return CandidateGrid(occ, unobs, normals)


def test_project_single_cell():
    occ = np.zeros((G,) * 3, bool)
    occ[9, 19, 29] = True  # cell (10, 20, 30) counting from 1
    n = np.zeros((G,) * 3 + (3,), np.float32)
    n[9, 19, 29] = (0, 0, 1)
    img = project(make_grid(occ, normals=n), "binormal_z")
    assert img[9, 19, 0] == pytest.approx(30 / 60)
    np.testing.assert_allclose(img[9, 19, 2:], [0, 0, 1])
    img[9, 19] = 0
    assert not img.any()


def test_project_two_cells_average():
    occ = np.zeros((G,) * 3, bool)
    occ[4, 4, 9] = occ[4, 4, 49] = True  # heights 10 and 50
    img = project(make_grid(occ), 2)
    assert img[4, 4, 0] == pytest.approx(30 / 60)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([0, 1, 2]))
def test_project_matches_loops(seed, axis):
    r = np.random.default_rng(seed)
    occ = r.random((G,) * 3) < 0.01
    unobs = (r.random((G,) * 3) < 0.01) & ~occ
    n = r.normal(size=(G, G, G, 3))
    n /= np.linalg.norm(n, axis=-1, keepdims=True)
    n = (n * occ[..., None]).astype(np.float32)
    got = project(make_grid(occ, unobs, n), axis)
    want = project_loops(occ, unobs, n.astype(np.float64), axis)
    assert np.abs(got - want).max() < 1e-6


def test_variants_and_subsets(primitive_scenes, hand):
    _, cloud, geom = primitive_scenes[1]
    c = sample_candidates(cloud, None, hand, 3, 4, seed=0, geometry=geom)[0]
    grid = build_grid(cloud, c, geom.normals)
    full = encode_channels(grid, Variant.FIFTEEN)
    assert full.shape == (G, G, 15) and full.dtype == np.float32
    for v in (Variant.TWELVE, Variant.THREE_CURVATURE):
        sub = encode_channels(grid, v)
        assert sub.shape[-1] == v.channels
        np.testing.assert_array_equal(sub, full[..., SUBSET_OF_FIFTEEN[v]])
    np.testing.assert_array_equal(full[..., 7:10], project(grid, 1)[..., 2:])
    img = encode(grid, "TWELVE", candidate_ref=7)
    assert img.variant is Variant.TWELVE and img.candidate_ref == 7
    assert not encode_channels(CandidateGrid.empty(), Variant.FIFTEEN).any()


def test_grid_invariants_on_rendered_scenes(primitive_scenes, hand):
    for _, cloud, geom in primitive_scenes:
        for c in sample_candidates(cloud, None, hand, 4, 4, seed=5, geometry=geom)[:4]:
            grid = build_grid(cloud, c, geom.normals)
            assert not (grid.occupancy & grid.unobserved).any()
            norms = np.linalg.norm(grid.normals, axis=-1)
            np.testing.assert_allclose(norms[grid.occupancy], 1.0, atol=1e-5)
            assert not norms[~grid.occupancy].any()
            for v in Variant:
                img = encode_channels(grid, v)
                assert np.isfinite(img).all() and img.min() >= 0 and img.max() <= 1


def test_occlusion_kernel_matches_per_cell_check(primitive_scenes, hand):
    _, cloud, geom = primitive_scenes[0]
    c = sample_candidates(cloud, None, hand, 3, 4, seed=1, geometry=geom)[0]
    grid = build_grid(cloud, c, geom.normals, size=12)
    centers = grid.cell_centers()
    picks = np.random.default_rng(0).choice(len(centers), 120, replace=False)
    want = ~grid.occupancy.reshape(-1)[picks]
    for vp in cloud.viewpoints:
        want &= np.array([cell_hidden(vp.position, centers[i], cloud.points, 0.002) for i in picks])
    np.testing.assert_array_equal(grid.unobserved.reshape(-1)[picks], want)
    single = occluded_from(cloud.viewpoints[0].position, cloud.points, centers,
                           np.ones(len(centers), bool))
    np.testing.assert_array_equal(single, cells_hidden(cloud.viewpoints[0].position, centers,
                                                       cloud.points, 0.002))


def test_rigid_invariance(primitive_scenes, hand):
    _, cloud, geom = primitive_scenes[1]
    cands = sample_candidates(cloud, None, hand, 3, 4, seed=2, geometry=geom)[:3]
    r = np.random.default_rng(11)
    R, t = random_rotation(r), r.uniform(-0.5, 0.5, 3)
    moved = CloudWithViewpoints(cloud.points @ R.T + t, cloud.view_mask,
                                tuple(Viewpoint(v.id, R @ v.position + t) for v in cloud.viewpoints))
    n2 = estimate_normals(moved)
    for c in cands:
        a = encode_channels(build_grid(cloud, c, geom.normals), Variant.FIFTEEN)
        b = encode_channels(build_grid(moved, c.transformed(R, t), n2), Variant.FIFTEEN)
        assert np.abs(a - b).max() < 1e-3


def test_degenerate_region():
    c = axis_candidate(aperture=0.0)
    cloud = CloudWithViewpoints.single_view([[0.0, 0, 0]], Viewpoint(0, (1, 0, 0)))
    with pytest.raises(ValueError):
        build_grid(cloud, c)
