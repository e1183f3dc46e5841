import numpy as np
import pytest

from trafficstate.assoc import (
    CHI2_95_4DOF,
    SENTINEL_COST,
    AppearanceGallery,
    CostMatrix,
    build_cost_matrix,
    build_iou_cost_matrix,
    cosine_gallery_distance,
    gate,
    iou,
    mahalanobis_sq,
    solve_assignment,
)
from trafficstate.detstream import Detection
from trafficstate.errors import ContractError, NumericalError, ValidationError
from trafficstate.motion import MeasurementProjection

from oracles import brute_force_assignment


def proj(y, s):
    return MeasurementProjection(y=np.asarray(y, float), s=np.asarray(s, float))


def det(bbox, appearance=None, frame=1, class_id=0, conf=1.0):
    app = None if appearance is None else np.asarray(appearance, float)
    return Detection(frame=frame, class_id=class_id, bbox=bbox,
                     confidence=conf, appearance=app)


# -- mahalanobis ------------------------------------------------------------

def test_mahalanobis_zero_residual():
    p = proj([1, 2, 3, 4], np.diag([2.0, 3, 4, 5]))
    assert mahalanobis_sq(p, np.array([1.0, 2, 3, 4])) == 0.0


def test_mahalanobis_identity_is_squared_euclidean():
    p = proj([0, 0, 0, 0], np.eye(4))
    assert mahalanobis_sq(p, np.array([3.0, 4, 0, 0])) == pytest.approx(25.0)


def test_mahalanobis_diagonal():
    p = proj([0, 0, 0, 0], np.diag([4.0, 1, 1, 1]))
    assert mahalanobis_sq(p, np.array([2.0, 0, 0, 0])) == pytest.approx(1.0)


def test_mahalanobis_scaled_identity_property():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        sigma2 = rng.uniform(0.1, 50.0)
        y = rng.normal(size=4)
        d = rng.normal(size=4)
        got = mahalanobis_sq(proj(y, sigma2 * np.eye(4)), d)
        want = float((d - y) @ (d - y)) / sigma2
        assert got == pytest.approx(want, abs=1e-9, rel=1e-9)


def test_mahalanobis_rejects_non_pd():
    p = proj([0, 0, 0, 0], -np.eye(4))
    with pytest.raises(NumericalError):
        mahalanobis_sq(p, np.zeros(4))


# -- gallery + cosine distance ------------------------------------------------

def unit(v):
    v = np.asarray(v, float)
    return v / np.linalg.norm(v)


def test_cosine_self_query_zero():
    g = AppearanceGallery()
    g.add(np.array([0.6, 0.8]))
    assert cosine_gallery_distance(g, np.array([0.6, 0.8])) == 0.0


def test_cosine_orthogonal_is_one():
    g = AppearanceGallery()
    g.add(np.array([1.0, 0.0]))
    assert cosine_gallery_distance(g, np.array([0.0, 1.0])) == pytest.approx(1.0)


def test_cosine_takes_min_over_members():
    g = AppearanceGallery()
    g.add(np.array([1.0, 0.0]))
    g.add(np.array([0.0, 1.0]))
    assert cosine_gallery_distance(g, np.array([1.0, 0.0])) == 0.0


def test_cosine_empty_gallery_is_contract_error():
    with pytest.raises(ContractError):
        cosine_gallery_distance(AppearanceGallery(), np.array([1.0, 0.0]))


def test_cosine_range_bounds():
    rng = np.random.default_rng(2)
    g = AppearanceGallery()
    for _ in range(30):
        g.add(unit(rng.normal(size=8)))
    for _ in range(200):
        d = cosine_gallery_distance(g, unit(rng.normal(size=8)))
        assert 0.0 <= d <= 2.0


def test_gallery_capacity_and_fifo_eviction():
    g = AppearanceGallery(capacity=3)
    vecs = [unit([1, i]) for i in range(5)]
    for v in vecs:
        g.add(v)
    assert len(g) == 3
    members = g.matrix()
    for kept in vecs[2:]:
        assert any(np.allclose(kept, row) for row in members)
    for evicted in vecs[:2]:
        assert not any(np.allclose(evicted, row) for row in members)


def test_gallery_min_distance_monotone_under_insertion():
    rng = np.random.default_rng(3)
    g = AppearanceGallery(capacity=100)
    query = unit(rng.normal(size=6))
    g.add(unit(rng.normal(size=6)))
    prev = cosine_gallery_distance(g, query)
    for _ in range(50):
        g.add(unit(rng.normal(size=6)))
        cur = cosine_gallery_distance(g, query)
        assert cur <= prev + 1e-12
        prev = cur


def test_gallery_rejects_non_unit():
    g = AppearanceGallery()
    with pytest.raises(ValidationError):
        g.add(np.array([1.0, 1.0]))


# -- gate ---------------------------------------------------------------------

def test_gate_examples():
    assert gate(5.0, 0.1, CHI2_95_4DOF, 0.2) is True
    assert gate(10.0, 0.1, CHI2_95_4DOF, 0.2) is False
    assert gate(CHI2_95_4DOF, 0.2, CHI2_95_4DOF, 0.2) is True


def test_gate_rejects_bad_thresholds():
    with pytest.raises(ValidationError):
        gate(1.0, 1.0, 0.0, 1.0)


# -- iou ------------------------------------------------------------------------

def test_iou_examples():
    assert iou((0, 0, 10, 10), (0, 0, 10, 10)) == 1.0
    assert iou((0, 0, 10, 10), (100, 100, 5, 5)) == 0.0
    assert iou((0, 0, 10, 10), (5, 0, 10, 10)) == pytest.approx(1 / 3)


# -- cost matrix -----------------------------------------------------------------

def two_track_setup():
    projections = [proj([0, 0, 1, 10], np.eye(4)), proj([50, 0, 1, 10], np.eye(4))]
    g1, g2 = AppearanceGallery(), AppearanceGallery()
    g1.add(np.array([1.0, 0.0]))
    g2.add(np.array([0.0, 1.0]))
    d1 = det((-5, -5, 10, 10), appearance=[1.0, 0.0])    # center (0,0) near track 1
    d2 = det((45, -5, 10, 10), appearance=[0.0, 1.0])    # center (50,0) near track 2
    return projections, [g1, g2], [d1, d2]


def test_cost_matrix_lambda_one_is_motion_only():
    projections, galleries, dets = two_track_setup()
    cm = build_cost_matrix(projections, galleries, dets, lam=1.0, t1=100.0, t2=0.5)
    for i, p in enumerate(projections):
        for j, d in enumerate(dets):
            if cm.admissible[i, j]:
                x, y, w, h = d.bbox
                z = np.array([x + w / 2, y + h / 2, w / h, h])
                assert cm.values[i, j] == pytest.approx(mahalanobis_sq(p, z))


def test_cost_matrix_lambda_zero_is_appearance_only():
    projections, galleries, dets = two_track_setup()
    cm = build_cost_matrix(projections, galleries, dets, lam=0.0, t1=1e6, t2=2.0)
    for i, g in enumerate(galleries):
        for j, d in enumerate(dets):
            assert cm.admissible[i, j]
            assert cm.values[i, j] == pytest.approx(
                cosine_gallery_distance(g, d.appearance), abs=1e-12
            )


def test_cost_matrix_convex_combination():
    # d_motion = 4, d_appearance = 0.2 at lambda 0.5 -> 2.1
    projections = [proj([0, 0, 1, 10], np.eye(4))]
    g = AppearanceGallery()
    z = np.array([2.0, 0.0, 1.0, 10.0])
    bbox = (z[0] - 5, z[1] - 5, 10, 10)
    query = unit([1.0, 3.0])
    # choose gallery member so that 1 - dot(query, member) = 0.2
    member = unit(0.8 * query + np.sqrt(1 - 0.64) * np.array([query[1], -query[0]]))
    g.add(member)
    d = det(bbox, appearance=query)
    assert mahalanobis_sq(projections[0], z) == pytest.approx(4.0)
    assert cosine_gallery_distance(g, query) == pytest.approx(0.2)
    cm = build_cost_matrix(projections, [g], [d], lam=0.5, t1=10.0, t2=0.5)
    assert cm.values[0, 0] == pytest.approx(2.1)


def test_cost_matrix_missing_appearance_falls_back_to_motion():
    projections = [proj([0, 0, 1, 10], np.eye(4))]
    d = det((-5, -5, 10, 10))  # no descriptor
    cm = build_cost_matrix(projections, [AppearanceGallery()], [d], lam=0.0)
    assert cm.admissible[0, 0]
    z = np.array([0.0, 0.0, 1.0, 10.0])
    assert cm.values[0, 0] == pytest.approx(mahalanobis_sq(projections[0], z))


def test_cost_matrix_gating_sets_sentinel():
    projections = [proj([0, 0, 1, 10], np.eye(4))]
    far = det((995, -5, 10, 10))
    cm = build_cost_matrix(projections, [None], [far], lam=1.0)
    assert not cm.admissible[0, 0]
    assert cm.values[0, 0] == SENTINEL_COST


def test_cost_matrix_unusable_projection_row():
    cm = build_cost_matrix([None], [None], [det((0, 0, 10, 10))], lam=1.0)
    assert not cm.admissible.any()


# -- assignment --------------------------------------------------------------------

def matrix(vals, admissible=None):
    vals = np.asarray(vals, float)
    if admissible is None:
        admissible = vals < SENTINEL_COST
    return CostMatrix(values=vals, admissible=np.asarray(admissible, bool))


def test_assignment_prefers_global_minimum():
    # row minima would pick (0,0)+(1,0) conflict; optimum is (0,1)+(1,0)
    result = solve_assignment(matrix([[1.0, 2.0], [2.0, 4.0]]))
    assert result.matches == [(0, 1), (1, 0)]
    assert result.unmatched_tracks == [] and result.unmatched_detections == []


def test_assignment_single_cell():
    result = solve_assignment(matrix([[0.3]]))
    assert result.matches == [(0, 0)]


def test_assignment_empty():
    result = solve_assignment(matrix(np.empty((0, 3))))
    assert result.matches == []
    assert result.unmatched_detections == [0, 1, 2]


def test_assignment_never_matches_sentinel():
    vals = np.full((2, 2), SENTINEL_COST)
    vals[0, 0] = 1.0
    result = solve_assignment(matrix(vals))
    assert result.matches == [(0, 0)]
    assert result.unmatched_tracks == [1]
    assert result.unmatched_detections == [1]


def random_gated_matrix(rng, n, m):
    vals = rng.uniform(0.0, 10.0, size=(n, m))
    admissible = rng.random(size=(n, m)) < 0.75
    vals[~admissible] = SENTINEL_COST
    return CostMatrix(values=vals, admissible=admissible)


def test_assignment_matches_brute_force_200_random():
    rng = np.random.default_rng(4)
    for _ in range(200):
        n = int(rng.integers(1, 7))
        m = int(rng.integers(1, 7))
        cm = random_gated_matrix(rng, n, m)
        result = solve_assignment(cm)
        total = sum(cm.values[i, j] for i, j in result.matches)
        total += SENTINEL_COST * (min(n, m) - len(result.matches))
        assert total == pytest.approx(brute_force_assignment(cm.values), abs=1e-9)


def test_assignment_invariant_to_constant_shift():
    rng = np.random.default_rng(5)
    for _ in range(50):
        cm = random_gated_matrix(rng, 5, 5)
        shift = float(rng.uniform(0.5, 20.0))
        shifted_vals = cm.values.copy()
        shifted_vals[cm.admissible] += shift
        shifted = CostMatrix(values=shifted_vals, admissible=cm.admissible)
        assert solve_assignment(cm).matches == solve_assignment(shifted).matches


def test_iou_cost_matrix_gate():
    tracks = [(0.0, 0.0, 10.0, 10.0)]
    near = det((2, 0, 10, 10))
    far = det((9.5, 0, 10, 10))
    cm = build_iou_cost_matrix(tracks, [near, far], max_distance=0.7)
    assert cm.admissible[0, 0]
    assert not cm.admissible[0, 1]
    assert cm.values[0, 0] == pytest.approx(1 - iou(tracks[0], near.bbox))
