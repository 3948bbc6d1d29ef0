import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pkleval import (
    PlannerParams,
    Pose2D,
    SceneMap,
    aggregate,
    build_cost_map,
    evaluate_pkl,
    identity_submission,
    kl_divergence,
    pkl_sample,
    plan_distribution,
)
from pkleval.planner import (
    OFF_MAP,
    PklValue,
    StepDistribution,
    distribution_kl,
    template_trajectories,
    template_weights,
)
from pkleval.scene import ObjectBox, Sample, Submission, ValidationError

from conftest import car, open_map


# ---------------------------------------------------------------- oracles

def point_to_box_distance(px, py, box):
    """Distance from a point to a rotated rectangle via its four edges (0 inside)."""
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    hl, hw = box.length / 2, box.width / 2
    corners = [(box.center_x + c * a - s * b, box.center_y + s * a + c * b)
               for a, b in ((hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw))]
    inside = True
    best = math.inf
    for (x1, y1), (x2, y2) in zip(corners, corners[1:] + corners[:1]):
        ex, ey = x2 - x1, y2 - y1
        cross = ex * (py - y1) - ey * (px - x1)
        inside &= cross >= 0
        t = max(0.0, min(1.0, ((px - x1) * ex + (py - y1) * ey) / (ex * ex + ey * ey)))
        best = min(best, math.hypot(px - (x1 + t * ex), py - (y1 + t * ey)))
    return 0.0 if inside else best


def oracle_cost(boxes, scene_map, params):
    h, w = scene_map.shape
    out = np.zeros((h, w))
    cut = params.obstacle_cutoff_sigmas * params.obstacle_sigma_m
    for r in range(h):
        for c in range(w):
            x = scene_map.origin[0] + (c + 0.5) * scene_map.resolution
            y = scene_map.origin[1] + (r + 0.5) * scene_map.resolution
            if not scene_map.drivable[r, c]:
                out[r, c] += params.offroad_cost_weight
            for b in boxes:
                d = point_to_box_distance(x, y, b)
                if d <= cut:
                    out[r, c] += params.obstacle_cost_weight * math.exp(-d * d / (2 * params.obstacle_sigma_m ** 2))
    return out


def centred_map(half_cells=30, resolution=0.5, drivable=None):
    n = 2 * half_cells + 1
    origin = (-(half_cells + 0.5) * resolution, -(half_cells + 0.5) * resolution)
    d = np.ones((n, n), bool) if drivable is None else drivable
    return SceneMap(origin, resolution, d, np.zeros((n, n), bool))


# ---------------------------------------------------------------- params

def test_params_defaults_and_roundtrip():
    p = PlannerParams()
    assert (p.horizon_steps, p.step_dt, p.n_templates, p.epsilon) == (8, 0.5, 25, 1e-12)
    assert PlannerParams.from_dict(p.to_dict()) == p


@pytest.mark.parametrize("field,value", [
    ("horizon_steps", 0), ("n_templates", 0), ("obstacle_cost_weight", -1.0),
    ("offroad_cost_weight", -1.0), ("obstacle_sigma_m", 0.0), ("temperature", 0.0),
    ("epsilon", 0.0), ("kl_direction", "sideways"),
])
def test_params_validation(field, value):
    with pytest.raises(ValueError):
        PlannerParams(**{field: value})


def test_params_from_dict_rejects_unknown():
    with pytest.raises(ValueError):
        PlannerParams.from_dict({"horizon": 3})


def test_templates_shape_and_forward():
    p = PlannerParams()
    tpl = template_trajectories(p)
    assert tpl.shape == (len(p.speeds_mps) * p.n_templates, p.horizon_steps, 2)
    assert np.all(tpl[:, 0, 0] >= 0)
    # constant speed along each arc: consecutive arc lengths are equal
    fast = tpl[-p.n_templates:]
    chord = np.hypot(*np.diff(fast, axis=1).transpose(2, 0, 1))
    assert np.allclose(chord, chord[:, :1], atol=1e-9)


# ---------------------------------------------------------------- cost map

def test_cost_empty_is_zero():
    m = open_map(20)
    assert np.array_equal(build_cost_map([], m, PlannerParams()), np.zeros((20, 20)))


def test_cost_matches_geometric_oracle():
    drivable = np.ones((24, 30), bool)
    drivable[:, :4] = False
    m = SceneMap((-3.0, 2.0), 0.5, drivable, np.zeros_like(drivable))
    boxes = [ObjectBox(3.0, 8.0, 1.9, 4.6, 0.7, "car"), ObjectBox(8.5, 5.0, 0.7, 0.7, -2.0, "pedestrian")]
    p = PlannerParams(obstacle_sigma_m=0.8)
    assert np.allclose(build_cost_map(boxes, m, p), oracle_cost(boxes, m, p), atol=1e-12)


def test_cost_single_box_peak_and_decay():
    m = centred_map(40)
    p = PlannerParams()
    cost = build_cost_map([car(0.0, 0.0)], m, p)
    assert cost.max() == pytest.approx(p.obstacle_cost_weight)
    row = cost[40, 40:]  # along +x from the box centre
    inside = row[:5]  # x < 2.3 m lies inside the footprint
    assert np.allclose(inside, p.obstacle_cost_weight)
    tail = row[5:][row[5:] > 0]
    assert len(tail) > 5
    assert np.all(np.diff(tail) < 0)


def test_cost_two_identical_boxes_double():
    m = centred_map(20)
    p = PlannerParams(offroad_cost_weight=0.0)
    one = build_cost_map([car(1.0, -2.0, yaw=0.3)], m, p)
    two = build_cost_map([car(1.0, -2.0, yaw=0.3)] * 2, m, p)
    assert np.array_equal(two, 2 * one)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(-8, 8), st.floats(-8, 8), st.floats(-3.2, 3.2)), min_size=1, max_size=4),
       st.lists(st.tuples(st.floats(-8, 8), st.floats(-8, 8), st.floats(-3.2, 3.2)), min_size=1, max_size=4))
def test_cost_additive(a, b):
    drivable = np.ones((41, 41), bool)
    drivable[:5] = False
    m = centred_map(20, drivable=drivable)
    p = PlannerParams()
    A = [car(x, y, yaw=t) for x, y, t in a]
    B = [car(x, y, yaw=t) for x, y, t in b]
    offroad = p.offroad_cost_weight * (~m.drivable)
    lhs = build_cost_map(A + B, m, p)
    rhs = build_cost_map(A, m, p) + build_cost_map(B, m, p) - offroad
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_cost_far_box_ignored():
    m = open_map(20)
    assert np.all(build_cost_map([car(500.0, 500.0)], m, PlannerParams()) == 0)


# ---------------------------------------------------------------- plan distribution

def test_uniform_cost_gives_equal_weights():
    m = centred_map(60)
    p = PlannerParams()
    dist = plan_distribution(np.zeros(m.shape), m, Pose2D(0, 0, 0.3), p)
    n = len(p.speeds_mps) * p.n_templates
    assert np.allclose(dist.weights, 1.0 / n)


def test_softmax_ln3():
    assert np.allclose(template_weights([0.0, math.log(3.0)], 1.0), [0.75, 0.25], atol=1e-15)


def toy_two_template_params():
    return PlannerParams(horizon_steps=1, n_templates=2, speeds_mps=(5.0,), max_curvature=0.2)


def toy_cost(m, right_cost):
    """Zero everywhere except the cell reached by the right-turning template."""
    cost = np.zeros(m.shape)
    tpl = template_trajectories(toy_two_template_params())
    x, y = tpl[0, 0]  # curvature -0.2 turns right (y < 0)
    r, c = m.cell_of(x, y)
    cost[r, c] = right_cost
    return cost


def test_two_template_weights():
    m = centred_map(20)
    p = toy_two_template_params()
    dist = plan_distribution(toy_cost(m, math.log(3.0)), m, Pose2D(0, 0, 0), p)
    assert np.allclose(dist.weights, [0.25, 0.75])
    assert np.allclose(sorted(dist.steps[0].probs), [0.25, 0.75])


def test_mirror_symmetry():
    m = centred_map(40)
    p = PlannerParams()
    rng = np.random.default_rng(0)
    cost = rng.random(m.shape) * 3
    mirrored = cost[::-1].copy()
    ego = Pose2D(0.0, 0.0, 0.0)
    d1 = plan_distribution(cost, m, ego, p)
    d2 = plan_distribution(mirrored, m, ego, p)
    h, w = m.shape
    for s1, s2 in zip(d1.steps, d2.steps):
        a = {}
        for cell, pr in zip(s1.cells, s1.probs):
            r, c = divmod(int(cell), w)
            a[(h - 1 - r) * w + c] = pr
        b = dict(zip(s2.cells.tolist(), s2.probs))
        assert a.keys() == b.keys()
        assert all(abs(a[k] - b[k]) < 1e-12 for k in a)


def test_plan_rejects_ego_outside_map():
    m = open_map(10)
    with pytest.raises(ValidationError):
        plan_distribution(np.zeros(m.shape), m, Pose2D(-5, 3, 0), PlannerParams())


def test_off_map_waypoints_pay_offroad():
    m = open_map(10, resolution=1.0)
    p = PlannerParams()
    dist = plan_distribution(np.zeros(m.shape), m, Pose2D(9.5, 5, 0), p)
    last = dist.steps[-1]
    assert OFF_MAP in last.cells
    # templates leaving the grid are penalised, so the stop template dominates
    assert dist.weights.argmax() < p.n_templates


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.05, 20.0))
def test_steps_normalised(seed, scale):
    rng = np.random.default_rng(seed)
    m = centred_map(25)
    cost = rng.exponential(scale, m.shape)
    ego = Pose2D(*rng.uniform(-5, 5, 2), rng.uniform(-math.pi, math.pi))
    dist = plan_distribution(cost, m, ego, PlannerParams(temperature=float(rng.uniform(0.1, 3))))
    for step in dist.steps:
        assert np.all(step.probs >= 0)
        assert abs(step.probs.sum() - 1.0) <= 1e-6


# ---------------------------------------------------------------- KL

def test_kl_identity():
    p = np.array([0.2, 0.3, 0.5])
    assert kl_divergence(p, p) <= 1e-9


def test_kl_hand_cases():
    assert kl_divergence([1.0, 0.0], [0.5, 0.5], 1e-12) == pytest.approx(math.log(2), abs=1e-4)
    expected = 0.75 * math.log(1.5) + 0.25 * math.log(0.5)
    assert kl_divergence([0.75, 0.25], [0.5, 0.5]) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.1308, abs=1e-4)


def test_kl_sparse_union_support():
    p = StepDistribution(np.array([3, 7]), np.array([0.5, 0.5]))
    q = StepDistribution(np.array([7, 9]), np.array([0.5, 0.5]))
    eps = 1e-12
    expected = 0.5 * math.log((0.5 + eps) / eps) + 0.5 * math.log(1.0)
    assert kl_divergence(p, q, eps) == pytest.approx(expected)


def test_kl_rejects_unnormalised():
    with pytest.raises(ValueError):
        kl_divergence([0.5, 0.4], [0.5, 0.5])
    with pytest.raises(ValueError):
        kl_divergence([1.2, -0.2], [0.5, 0.5])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=2, max_size=12), st.integers(0, 2**31 - 1))
def test_kl_non_negative(raw, seed):
    p = np.array(raw)
    if p.sum() == 0:
        return
    p = p / p.sum()
    q = np.random.default_rng(seed).dirichlet(np.ones(len(p)))
    assert kl_divergence(p, q) >= 0.0
    assert kl_divergence(p, p) <= 1e-9


# ---------------------------------------------------------------- PKL

def test_pkl_toy_composition():
    m = centred_map(20)
    p = toy_two_template_params()
    ego = Pose2D(0, 0, 0)
    gt = plan_distribution(toy_cost(m, math.log(3.0)), m, ego, p)
    det = plan_distribution(np.zeros(m.shape), m, ego, p)
    assert distribution_kl(gt, det, p.epsilon) == pytest.approx(0.1308, abs=1e-4)


def _blocking_sample(m):
    return Sample("a", "s", Pose2D(0, 0, 0), (car(9.0, 0.0),))


def test_pkl_identical_boxes_zero():
    m = centred_map(40)
    s = _blocking_sample(m)
    assert pkl_sample(s, s.gt_boxes, m, PlannerParams()).pkl == 0.0


def test_pkl_missing_blocker_positive():
    m = centred_map(40)
    s = _blocking_sample(m)
    p = PlannerParams()
    empty = pkl_sample(s, [], m, p).pkl
    assert empty > pkl_sample(s, s.gt_boxes, m, p).pkl
    assert empty > 0


def test_kl_direction_switch():
    m = centred_map(40)
    s = _blocking_sample(m)
    fwd = pkl_sample(s, [], m, PlannerParams()).pkl
    rev = pkl_sample(s, [], m, PlannerParams(kl_direction="det_to_gt")).pkl
    assert fwd > 0 and rev > 0 and fwd != rev


def test_translation_equivariance(small_dataset):
    p = PlannerParams()
    off = (37.5, -12.0)
    for s in small_dataset.samples[::4]:
        m = small_dataset.map_for(s)
        dets = s.gt_boxes[::2]
        base = pkl_sample(s, dets, m, p).pkl

        def shift(b):
            return ObjectBox(b.center_x + off[0], b.center_y + off[1], b.width, b.length, b.yaw, b.class_name, b.score)

        m2 = SceneMap((m.origin[0] + off[0], m.origin[1] + off[1]), m.resolution, m.drivable, m.intersection)
        e = s.ego_pose
        s2 = Sample(s.sample_id, s.scene_id, Pose2D(e.x + off[0], e.y + off[1], e.yaw, e.timestamp),
                    tuple(shift(b) for b in s.gt_boxes))
        moved = pkl_sample(s2, [shift(b) for b in dets], m2, p).pkl
        assert moved == pytest.approx(base, abs=1e-9)


def test_evaluate_pkl_identity_and_empty(small_dataset):
    p = PlannerParams()
    ident = evaluate_pkl(small_dataset, identity_submission(small_dataset), p)
    assert [v.sample_id for v in ident] == small_dataset.sample_ids
    assert all(v.pkl == 0.0 for v in ident)
    empty = Submission("empty", "synthetic", {})
    e1 = evaluate_pkl(small_dataset, empty, p)
    e2 = evaluate_pkl(small_dataset, empty, p)
    assert e1 == e2
    assert aggregate(e1) > aggregate(ident)


def test_aggregate_examples():
    assert aggregate([0.0, 0.0, 0.0]) == 0.0
    assert aggregate([1.0, 2.0, 100.0]) == 2.0
    assert aggregate([1.0, 2.0, 100.0], "mean") == pytest.approx(34.33, abs=5e-3)
    assert aggregate([PklValue("a", 1), PklValue("b", 2), PklValue("c", 3), PklValue("d", 4)]) == 2.5
    with pytest.raises(ValueError):
        aggregate([])
    with pytest.raises(ValueError):
        aggregate([1.0], "mode")
