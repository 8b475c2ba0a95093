import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from navlab import reward as R

CFG = R.RewardConfig()
CFG_OFF = R.RewardConfig(wsp_enabled=False)
CFG_POT = R.RewardConfig(formulation=R.Formulation.Potential)


def make_state(cfg, d0, alpha0, p0):
    return R.RewardState.initial(cfg, d0, alpha0, p0)


# Voxel quantization ---------------------------------------------------------

quantize_cases = [
    ((0.3, 0.0, 0.6), 0.25, (1, 0, 2)),
    ((-0.1, 0.0, 0.0), 0.25, (-1, 0, 0)),
    ((0.0, 0.0), 0.25, (0, 0)),
    ((0.5, 0.5), 0.5, (1, 1)),
    ((-0.25, 0.25), 0.25, (-1, 1)),
]


@pytest.mark.parametrize("p,s,expected", quantize_cases)
def test_quantize_voxel(p, s, expected):
    assert R.quantize_voxel(p, s) == expected


def test_quantize_rejects_nonpositive_resolution():
    with pytest.raises(R.NonPositiveResolution):
        R.quantize_voxel((1.0, 1.0), 0.0)
    with pytest.raises(R.NonPositiveResolution):
        R.quantize_voxel((1.0, 1.0), -0.25)


@given(st.tuples(st.floats(-50, 50), st.floats(-50, 50)),
       st.floats(0.01, 2.0))
def test_quantize_is_floor_division(p, s):
    got = R.quantize_voxel(p, s)
    assert got == tuple(math.floor(c / s) for c in p)
    # the voxel's half-open box contains the point
    for coord, k in zip(p, got):
        assert k * s <= coord
        assert coord < (k + 1) * s or math.isclose(coord, (k + 1) * s, abs_tol=1e-9)


# Dense shaping --------------------------------------------------------------

def test_shaping_distance_progress_outside_goal_radius():
    z = R.zer_step_reward(CFG, d_prev=2.00, d_t=1.75, alpha_prev_deg=90.0, alpha_t_deg=10.0)
    assert z.distance_term == pytest.approx(0.25, abs=1e-12)
    assert z.view_term == 0.0            # gate closed: d_t > 1.0
    assert z.slack_term == pytest.approx(-0.01, abs=1e-12)
    total = z.distance_term + z.view_term + z.slack_term
    assert total == pytest.approx(0.24, abs=1e-12)


def test_shaping_view_progress_inside_goal_radius():
    z = R.zer_step_reward(CFG, d_prev=0.9, d_t=0.9, alpha_prev_deg=60.0, alpha_t_deg=30.0)
    assert z.distance_term == 0.0
    assert z.view_term == pytest.approx(math.radians(30.0), abs=1e-12)
    total = z.distance_term + z.view_term + z.slack_term
    assert total == pytest.approx(0.5135987755982988, abs=1e-12)


def test_shaping_no_motion_pays_slack_only():
    z = R.zer_step_reward(CFG, d_prev=3.0, d_t=3.0, alpha_prev_deg=45.0, alpha_t_deg=45.0)
    assert z.distance_term + z.view_term + z.slack_term == pytest.approx(-0.01, abs=1e-12)


def test_shaping_gate_boundary_inclusive():
    z = R.zer_step_reward(CFG, d_prev=1.2, d_t=1.0, alpha_prev_deg=40.0, alpha_t_deg=30.0)
    assert z.view_term == pytest.approx(math.radians(10.0), abs=1e-12)


@given(st.floats(0, 12), st.floats(0, 12), st.floats(0, 180), st.floats(0, 180))
def test_shaping_view_gate(d_prev, d_t, a_prev, a_t):
    z = R.zer_step_reward(CFG, d_prev, d_t, a_prev, a_t)
    assert z.view_delta_rad == pytest.approx(math.radians(a_prev - a_t), rel=1e-12, abs=1e-12)
    if d_t > CFG.d_s:
        assert z.view_term == 0.0
    else:
        assert z.view_term == z.view_delta_rad


# Success bonus --------------------------------------------------------------

success_cases = [
    (0.8, 20.0, True, 10.0),
    (0.8, 40.0, True, 5.0),
    (1.5, 5.0, True, 0.0),
    (1.0, 25.0, True, 10.0),   # both thresholds inclusive
    (0.8, 20.0, False, 0.0),   # only granted on the stopping step
]


@pytest.mark.parametrize("d,alpha,stopped,expected", success_cases)
def test_success_reward(d, alpha, stopped, expected):
    assert R.success_reward(CFG, d, alpha, stopped) == expected


@given(st.floats(0, 12), st.floats(0, 180), st.booleans())
def test_success_reward_is_tiered(d, alpha, stopped):
    got = R.success_reward(CFG, d, alpha, stopped)
    assert got in (0.0, 5.0, 10.0)
    if not stopped or d > CFG.d_s:
        assert got == 0.0


# Wandering suppression ------------------------------------------------------

def test_wsp_charges_fresh_forward_step():
    state = make_state(CFG, 2.0, 0.0, (0.1, 0.1))
    res, state = R.wsp_step(CFG, state, (0.1, 0.1), (0.35, 0.1))
    assert res.path_penalty == pytest.approx(-0.25, abs=1e-12)
    assert res.revisit_penalty == 0.0
    assert res.r_wsp == pytest.approx(-0.25, abs=1e-12)
    assert CFG.lambda_w * res.r_wsp == pytest.approx(-0.05, abs=1e-12)
    assert not res.revisit


def test_wsp_charges_reentered_voxel():
    # out of the start voxel and back: the return step pays length + revisit
    state = make_state(CFG, 2.0, 0.0, (0.1, 0.1))
    _, state = R.wsp_step(CFG, state, (0.1, 0.1), (0.35, 0.1))
    res, state = R.wsp_step(CFG, state, (0.35, 0.1), (0.1, 0.1))
    assert res.revisit
    assert res.r_wsp == pytest.approx(-0.27, abs=1e-12)


def test_wsp_turn_in_place_is_free():
    state = make_state(CFG, 2.0, 0.0, (0.6, 0.6))
    res, state = R.wsp_step(CFG, state, (0.6, 0.6), (0.6, 0.6))
    assert res.r_wsp == 0.0
    assert not res.revisit


def test_wsp_dwelling_in_voxel_not_reentry():
    # moving within the current voxel pays length but no revisit charge
    state = make_state(CFG, 2.0, 0.0, (0.05, 0.05))
    res, _ = R.wsp_step(CFG, state, (0.05, 0.05), (0.2, 0.05))
    assert res.path_penalty == pytest.approx(-0.15, abs=1e-12)
    assert res.revisit_penalty == 0.0


def test_wsp_any_repeat_mode_charges_dwell():
    cfg = R.RewardConfig(revisit_mode=R.RevisitMode.AnyRepeat)
    state = make_state(cfg, 2.0, 0.0, (0.05, 0.05))
    res, _ = R.wsp_step(cfg, state, (0.05, 0.05), (0.2, 0.05))
    assert res.revisit
    assert res.revisit_penalty == pytest.approx(-cfg.lambda_rv, abs=1e-12)


def test_wsp_disabled_is_a_noop():
    state = make_state(CFG_OFF, 2.0, 0.0, (0.1, 0.1))
    before = (state.path_len, state.revisit_counter, set(state.visited))
    res, state = R.wsp_step(CFG_OFF, state, (0.1, 0.1), (0.35, 0.1))
    assert res.r_wsp == 0.0
    assert (state.path_len, state.revisit_counter, set(state.visited)) == before


@given(st.lists(st.tuples(st.floats(-3, 3), st.floats(-3, 3)), min_size=2, max_size=40))
def test_wsp_never_positive(points):
    cfg = CFG
    state = make_state(cfg, 5.0, 0.0, points[0])
    for prev, cur in zip(points, points[1:]):
        res, state = R.wsp_step(cfg, state, prev, cur)
        assert res.r_wsp <= 0.0
        if res.r_wsp == 0.0:
            assert prev == cur and not res.revisit


@given(st.lists(st.tuples(st.floats(-3, 3), st.floats(-3, 3)), min_size=2, max_size=40))
def test_wsp_accumulators_match_step_sums(points):
    state = make_state(CFG, 5.0, 0.0, points[0])
    length = 0.0
    charges = 0.0
    for prev, cur in zip(points, points[1:]):
        res, state = R.wsp_step(CFG, state, prev, cur)
        length += -res.path_penalty
        charges += -res.revisit_penalty
    assert state.path_len == pytest.approx(length, rel=1e-12, abs=1e-12)
    assert state.revisit_counter == pytest.approx(charges, rel=1e-12, abs=1e-12)


# Composition ----------------------------------------------------------------

def test_total_combines_weighted_terms():
    state = make_state(CFG, 2.00, 90.0, (0.1, 0.1))
    breakdown, _, state = R.episode_reward_step(
        CFG, state, (0.1, 0.1), (0.35, 0.1), d_t=1.75, alpha_t_deg=90.0, stopped=False)
    assert breakdown.total == pytest.approx(0.19, abs=1e-12)
    assert breakdown.success_term == 0.0
    assert breakdown.wsp_path_term == pytest.approx(-0.05, abs=1e-12)


def test_total_is_sum_of_components():
    state = make_state(CFG, 1.2, 50.0, (0.3, 0.3))
    b, _, _ = R.episode_reward_step(
        CFG, state, (0.3, 0.3), (0.3, 0.55), d_t=0.95, alpha_t_deg=20.0, stopped=True)
    parts = (b.distance_term + b.view_term + b.slack_term + b.success_term
             + b.wsp_path_term + b.wsp_revisit_term)
    assert b.total == pytest.approx(parts, rel=1e-15, abs=0)
    assert b.success_term == 10.0


def test_disabled_wsp_breakdown_equals_pure_shaping():
    # every component and the running state identical, bit for bit
    path = [(0.1, 0.1), (0.35, 0.1), (0.35, 0.35), (0.1, 0.35), (0.1, 0.1)]
    ds = [2.0, 1.8, 1.6, 1.7, 1.9]
    state = make_state(CFG_OFF, ds[0], 30.0, path[0])
    for prev, cur, d in zip(path, path[1:], ds[1:]):
        d_before = state.d_prev
        b, _, state = R.episode_reward_step(CFG_OFF, state, prev, cur, d, 30.0, False)
        z = R.zer_step_reward(CFG_OFF, d_before, d, 30.0, 30.0)
        assert b.wsp_path_term == 0.0
        assert b.wsp_revisit_term == 0.0
        assert b.distance_term == z.distance_term
        assert b.total == z.distance_term + z.view_term + z.slack_term


def test_formulation_mismatch_rejected():
    z = R.zer_step_reward(CFG, 2.0, 1.9, 0.0, 0.0)
    state = make_state(CFG_POT, 2.0, 0.0, (0.0, 0.0))
    wsp_pot, _ = R.wsp_step(CFG_POT, state, (0.0, 0.0), (0.0, 0.0))
    with pytest.raises(R.FormulationMismatch):
        R.total_step_reward(CFG, z, 0.0, wsp_pot)


def test_potential_mode_view_term_ungated():
    # the single point of disagreement between the two formulations
    state_a = make_state(CFG, 2.0, 60.0, (0.0, 0.0))
    state_p = make_state(CFG_POT, 2.0, 60.0, (0.0, 0.0))
    args = ((0.0, 0.0), (0.25, 0.0), 1.75, 30.0, False)
    b_add, _, _ = R.episode_reward_step(CFG, state_a, *args)
    b_pot, _, _ = R.episode_reward_step(CFG_POT, state_p, *args)
    assert b_add.view_term == 0.0
    assert b_pot.view_term == pytest.approx(math.radians(30.0), abs=1e-12)
    assert b_pot.total - b_add.total == pytest.approx(math.radians(30.0), abs=1e-12)


# Telescoping identities -----------------------------------------------------

def random_walk(rng, n):
    pts = [(rng.uniform(-2, 2), rng.uniform(-2, 2))]
    for _ in range(n):
        if rng.random() < 0.3:
            pts.append(pts[-1])          # turn in place
        elif rng.random() < 0.4 and len(pts) > 1:
            pts.append(pts[-2])          # backtrack into the previous voxel
        else:
            x, y = pts[-1]
            pts.append((x + rng.uniform(-0.4, 0.4), y + rng.uniform(-0.4, 0.4)))
    return pts


def test_weighted_wsp_sum_telescopes_to_accumulators():
    import random
    rng = random.Random(7)
    for _ in range(20):
        pts = random_walk(rng, 60)
        state = make_state(CFG, 5.0, 0.0, pts[0])
        total = 0.0
        for prev, cur in zip(pts, pts[1:]):
            res, state = R.wsp_step(CFG, state, prev, cur)
            total += CFG.lambda_w * res.r_wsp
        expected = -CFG.lambda_w * (state.path_len + state.revisit_counter)
        assert total == pytest.approx(expected, rel=1e-9, abs=1e-12)


def test_potential_mode_shaping_telescopes():
    import random
    rng = random.Random(11)
    for _ in range(20):
        pts = random_walk(rng, 50)
        ds = [rng.uniform(0.2, 6.0) for _ in pts]
        alphas = [rng.uniform(0.0, 180.0) for _ in pts]
        state = make_state(CFG_POT, ds[0], alphas[0], pts[0])
        phi0 = R.potential(CFG_POT, 0.0, 0.0, ds[0], alphas[0])
        total = 0.0
        for i in range(1, len(pts)):
            b, _, state = R.episode_reward_step(
                CFG_POT, state, pts[i - 1], pts[i], ds[i], alphas[i], False)
            total += b.total - b.slack_term - b.success_term
        phi_t = R.potential(CFG_POT, state.path_len, state.revisit_counter,
                            ds[-1], alphas[-1])
        assert total == pytest.approx(phi0 - phi_t, rel=1e-9, abs=1e-9)


# Warm-up schedule -----------------------------------------------------------

schedule_cases = [
    (4, 10, 0.5, False),
    (5, 10, 0.5, True),
    (0, 10, 0.0, True),
    (0, 10, 1.0, False),
    (10, 10, 1.0, True),
]


@pytest.mark.parametrize("it,total,frac,expected", schedule_cases)
def test_wsp_schedule(it, total, frac, expected):
    assert R.wsp_schedule(it, total, frac) is expected


@given(st.integers(0, 200), st.integers(1, 200), st.floats(0, 1))
def test_wsp_schedule_is_monotone(it, total, frac):
    on = R.wsp_schedule(it, total, frac)
    if on:
        assert R.wsp_schedule(min(it + 1, 10**6), total, frac)
    else:
        assert it < total


def test_wsp_schedule_rejects_bad_args():
    with pytest.raises(ValueError):
        R.wsp_schedule(1, 10, warmup_fraction=1.5)
    with pytest.raises(ValueError):
        R.wsp_schedule(1, 0)


# Config validation ----------------------------------------------------------

def test_reward_config_validation():
    with pytest.raises(ValueError):
        R.RewardConfig(d_s=0.0)
    with pytest.raises(R.NonPositiveResolution):
        R.RewardConfig(revisit_radius=0.0)
    with pytest.raises(ValueError):
        R.RewardConfig(lambda_w=-0.1)
