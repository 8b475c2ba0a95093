"""Acceptance gate: one test per numbered check, with pinned tolerances.

Each test states a measurable promise of the package: algebraic reward
identities, frozen worked examples, gradient correctness against finite
differences, metric and geodesic agreement with brute-force oracles, the
two paired training ablations, validator precision on a seeded corpus,
latency amortization, and byte-identical reruns.
"""
import json
import math
import random
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

import navlab.env as E
import navlab.experiments as X
import navlab.reward as R
from navlab.annot import StubJudge, quality_metrics, run_tqcm, TrajectoryRecord
from navlab.cli import main
from navlab.metrics import EpisodeResult, amortized_latency, spl, sr
from navlab.policy.net import PolicyNet, PolicyNetConfig, log_softmax
from navlab.policy.ppo import TrainConfig, ppo_loss_and_grad
from oracles import bellman_ford_all_pairs, brute_spl, brute_sr, numeric_gradient

REL_TOL = 1e-9          # reward identities, geodesic agreement
EXACT_ABS = 1e-12       # frozen worked examples
GRAD_TOL = 1e-4         # max relative analytic-vs-numeric gradient error
FD_STEP = 1e-5
BENCH_TOL = 0.15        # measured latency vs t_fast + t_slow / k
ALPHA = 0.05            # one-sided paired test level
ABLATION_BUDGET_S = 7200.0

ROOT = Path(__file__).resolve().parent.parent


def close_rel(a: float, b: float, tol: float = REL_TOL) -> bool:
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


# 1 ---------------------------------------------------------------------------

def random_rollout(rng: random.Random, cfg: R.RewardConfig):
    """One synthetic trajectory: positions, goal distances, view angles."""
    steps = rng.randint(5, 60)
    p = (rng.uniform(0.0, 3.0), rng.uniform(0.0, 3.0))
    d = rng.uniform(0.0, 6.0)
    alpha = rng.uniform(0.0, 180.0)
    state = R.RewardState.initial(cfg, d, alpha, p)
    track = []
    for t in range(steps):
        dx = rng.choice((-0.25, 0.0, 0.25))
        dy = rng.choice((-0.25, 0.0, 0.25))
        p_next = (p[0] + dx, p[1] + dy)
        d = max(0.0, d + rng.uniform(-0.3, 0.3))
        alpha = rng.uniform(0.0, 180.0)
        stopped = t == steps - 1 and rng.random() < 0.5
        track.append((p, p_next, d, alpha, stopped))
        p = p_next
    return state, track


def test_criterion_01_reward_identities():
    rng = random.Random(1307)
    t0 = time.perf_counter()
    for _ in range(1000):
        lam_w = rng.choice((0.1, 0.2, 0.5))
        lam_rv = rng.choice((0.02, 0.05))
        mode = rng.choice((R.RevisitMode.ReentryOnly, R.RevisitMode.AnyRepeat))
        add = R.RewardConfig(lambda_w=lam_w, lambda_rv=lam_rv, revisit_mode=mode)
        pot = R.RewardConfig(lambda_w=lam_w, lambda_rv=lam_rv, revisit_mode=mode,
                             formulation=R.Formulation.Potential)
        state, track = random_rollout(rng, add)
        d0, alpha0 = state.d_prev, state.alpha_prev_deg

        wsp_sum = 0.0
        for p_prev, p_t, d, alpha, stopped in track:
            b, wsp_res, state = R.episode_reward_step(add, state, p_prev, p_t,
                                                      d, alpha, stopped)
            assert wsp_res.r_wsp <= 0.0
            wsp_sum += b.wsp_path_term + b.wsp_revisit_term
        # summed weighted penalty telescopes to -lambda_w * (path + revisits)
        assert close_rel(wsp_sum,
                         -lam_w * (state.path_len + state.revisit_counter))

        pstate = R.RewardState.initial(pot, d0, alpha0, track[0][0])
        shaping_sum = 0.0
        for p_prev, p_t, d, alpha, stopped in track:
            b, wsp_res, pstate = R.episode_reward_step(pot, pstate, p_prev, p_t,
                                                       d, alpha, stopped)
            assert wsp_res.r_wsp <= 0.0
            shaping_sum += b.total - b.slack_term - b.success_term
        phi0 = R.potential(pot, 0.0, 0.0, d0, alpha0)
        phiT = R.potential(pot, pstate.path_len, pstate.revisit_counter,
                           pstate.d_prev, pstate.alpha_prev_deg)
        # potential-based shaping telescopes to Phi_0 - Phi_T
        assert close_rel(shaping_sum, phi0 - phiT)
    assert time.perf_counter() - t0 < 60.0


# 2 ---------------------------------------------------------------------------

def test_criterion_02_pinned_reward_values():
    approx = lambda v: pytest.approx(v, abs=EXACT_ABS)
    cfg = R.RewardConfig()

    assert R.quantize_voxel((0.3, 0.0, 0.6), 0.25) == (1, 0, 2)
    assert R.quantize_voxel((-0.1, 0.0, 0.0), 0.25) == (-1, 0, 0)

    gate_closed = R.zer_step_reward(cfg, 2.00, 1.75, 40.0, 40.0)
    assert gate_closed.view_term == 0.0
    assert (gate_closed.distance_term + gate_closed.view_term
            + gate_closed.slack_term) == approx(0.24)

    gated = R.zer_step_reward(cfg, 0.9, 0.9, 60.0, 30.0)
    assert (gated.distance_term + gated.view_term
            + gated.slack_term) == approx(0.5135987755982988)

    assert R.success_reward(cfg, 0.8, 20.0, stopped=True) == approx(10.0)
    assert R.success_reward(cfg, 0.8, 40.0, stopped=True) == approx(5.0)
    assert R.success_reward(cfg, 0.8, 20.0, stopped=False) == approx(0.0)

    state = R.RewardState.initial(cfg, 2.0, 40.0, (0.0, 0.0))
    fresh, state = R.wsp_step(cfg, state, (0.0, 0.0), (0.25, 0.0))
    assert fresh.r_wsp == approx(-0.25)
    assert cfg.lambda_w * fresh.r_wsp == approx(-0.05)
    reentry, state = R.wsp_step(cfg, state, (0.25, 0.0), (0.0, 0.0))
    assert reentry.r_wsp == approx(-0.27)

    state = R.RewardState.initial(cfg, 2.0, 40.0, (0.0, 0.0))
    b, _, state = R.episode_reward_step(cfg, state, (0.0, 0.0), (0.25, 0.0),
                                        1.75, 40.0, stopped=False)
    assert b.total == approx(0.19)


# 3 ---------------------------------------------------------------------------

def test_criterion_03_gradients_match_finite_differences():
    t0 = time.perf_counter()
    cfg200 = PolicyNetConfig(input_dim=11, encoder_dim=3, hidden_dim=3,
                             num_layers=2, num_actions=4)
    net = PolicyNet.init(cfg200, seed=42)
    assert net.num_params == 200

    rng = np.random.default_rng(123)
    T, B = 6, 3
    X_in = rng.normal(size=(T, B, cfg200.input_dim))
    h0 = rng.normal(scale=0.5, size=(cfg200.num_layers, B, cfg200.hidden_dim))
    resets = np.zeros((T, B))
    resets[3, 1] = 1.0
    resets[5, 0] = 1.0
    actions = rng.integers(0, 4, size=(T, B))
    logits, _, _ = net.forward_sequence(X_in, h0, resets)
    logp = np.take_along_axis(log_softmax(logits), actions[..., None], -1)[..., 0]
    batch = {
        "X": X_in, "h0": h0, "resets": resets, "actions": actions,
        "logp_old": logp + rng.normal(scale=0.1, size=logp.shape),
        "adv": rng.normal(size=(T, B)),
        "returns": rng.normal(size=(T, B)),
    }
    tcfg = TrainConfig()

    _, analytic, _ = ppo_loss_and_grad(net, batch, tcfg)

    def loss_of(params):
        loss, _, _ = ppo_loss_and_grad(PolicyNet(cfg200, params), batch, tcfg)
        return loss

    numeric = numeric_gradient(loss_of, net.params.copy(), eps=FD_STEP)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6)
    max_rel = float(np.max(np.abs(analytic - numeric) / denom))
    assert max_rel < GRAD_TOL
    assert time.perf_counter() - t0 < 60.0


# 4 ---------------------------------------------------------------------------

def test_criterion_04_sr_spl_against_brute_force():
    rng = np.random.default_rng(4)
    exact = spl([EpisodeResult("e", True, 2.0, 4.0, 1)])
    assert exact == 0.5
    for _ in range(500):
        n = int(rng.integers(1, 41))
        flags = (rng.random(n) < 0.6).tolist()
        shortest = rng.uniform(0.5, 12.0, n)
        travelled = np.where(rng.random(n) < 0.1,
                             shortest * rng.uniform(0.2, 0.9, n),
                             shortest + rng.uniform(0.0, 8.0, n))
        results = [EpisodeResult(f"e{i}", flags[i], float(shortest[i]),
                                 float(travelled[i]), 1) for i in range(n)]
        got_sr, got_spl = sr(results), spl(results)
        assert got_sr == pytest.approx(brute_sr(flags), rel=1e-12)
        assert got_spl == pytest.approx(
            brute_spl(flags, shortest.tolist(), travelled.tolist()), rel=1e-12)
        assert 0.0 <= got_spl <= got_sr <= 1.0


# 5 ---------------------------------------------------------------------------

def random_lattice(rng: np.random.Generator) -> E.GridMap:
    while True:
        rows = int(rng.integers(4, 13))
        cols = int(rng.integers(4, 13))
        blocked = rng.random((rows, cols)) < 0.25
        if (~blocked).sum() < 2:
            continue
        text = "\n".join("".join("#" if blocked[r, c] else "."
                                 for c in range(cols)) for r in range(rows))
        return E.load_map(text, {"cell_size_m": 0.25, "agent_radius_m": 0.05,
                                 "name": "rand"})


def test_criterion_05_geodesics_match_bellman_ford():
    rng = np.random.default_rng(5)
    for _ in range(25):
        gmap = random_lattice(rng)
        free = ~gmap.inflated
        cells, want = bellman_ford_all_pairs(free, gmap.cell_size)
        n = len(cells)
        got = np.empty((n, n))
        for i, cell in enumerate(cells):
            field = gmap.distance_field(cell)
            got[i] = [field[c] for c in cells]
        assert np.array_equal(np.isfinite(got), np.isfinite(want))
        assert np.allclose(got, want, rtol=REL_TOL, atol=0.0)
        assert np.allclose(got, got.T, rtol=REL_TOL, atol=0.0)
        for k in range(n):
            via = got[:, k:k + 1] + got[k:k + 1, :]
            slack = REL_TOL * np.maximum(1.0, np.abs(np.where(
                np.isfinite(via), via, 0.0)))
            assert np.all(got <= via + slack)


# 6 and 7 ---------------------------------------------------------------------

@pytest.fixture(scope="module")
def ablation(tmp_path_factory):
    """Train every protocol arm over five seeds and evaluate once."""
    out = tmp_path_factory.mktemp("ablation")
    maps = X.load_suite(ROOT / "maps")
    train_eps = X.suite_episodes(maps, X.TRAIN_SAMPLER)
    eval_eps = X.suite_episodes(maps, X.EVAL_SAMPLER)
    t0 = time.perf_counter()
    results = {arm: [] for arm in X.ARMS}
    for arm in X.ARMS:
        for seed in range(5):
            results[arm].append(X.run_arm(maps, train_eps, eval_eps, arm, seed,
                                          out / f"{arm}-s{seed}"))
    elapsed = time.perf_counter() - t0
    X.write_results(out / "results.jsonl",
                    [r for rs in results.values() for r in rs])
    return results, elapsed


def test_criterion_06_wandering_penalty_improves_spl(ablation):
    results, elapsed = ablation
    with_wsp = [r.overall_spl for r in results["null_wsp"]]
    without = [r.overall_spl for r in results["null_no_wsp"]]
    assert len(with_wsp) == len(without) == 5
    p = X.paired_one_sided_p(with_wsp, without)
    assert sum(with_wsp) / 5 > sum(without) / 5
    assert p < ALPHA
    assert elapsed < ABLATION_BUDGET_S


def test_criterion_07_oracle_beats_null_on_hard(ablation):
    results, _ = ablation
    oracle = results["wsp"]
    null = results["null_wsp"]
    mean = lambda xs: sum(xs) / len(xs)
    assert mean([r.hard_sr for r in oracle]) > mean([r.hard_sr for r in null])
    assert mean([r.hard_spl for r in oracle]) > mean([r.hard_spl for r in null])


# 8 ---------------------------------------------------------------------------

def test_criterion_08_validator_on_seeded_corpus(tmp_path):
    corpus = tmp_path / "corpus"
    subprocess.run([sys.executable, str(ROOT / "scripts" / "make_tqcm_corpus.py"),
                    "--out", str(corpus)], check=True, capture_output=True)
    truth = json.loads((corpus / "truth.json").read_text())
    judge = StubJudge.from_file(corpus / "judge.json")
    records = []
    with open(corpus / "manifest.jsonl") as f:
        for line in f:
            records.append(TrajectoryRecord.from_json(json.loads(line)))
    assert len(records) == 1000
    blocks = {r.trajectory_id:
              (corpus / "annotations" / f"{r.trajectory_id}.txt").read_text()
              for r in records}

    t0 = time.perf_counter()
    reports = [run_tqcm(r, blocks[r.trajectory_id], judge, 4) for r in records]
    elapsed = time.perf_counter() - t0

    flagged_format = {rep.trajectory_id for rep in reports if not rep.format_ok}
    flagged_temporal = {rep.trajectory_id for rep in reports
                        if rep.temporal_ok is False}
    want_format = set(truth["format_defect_ids"])
    want_temporal = set(truth["temporal_defect_ids"])
    assert len(want_format) == 68 and len(want_temporal) == 50

    for flagged, want in ((flagged_format, want_format),
                          (flagged_temporal, want_temporal)):
        precision = len(flagged & want) / len(flagged)
        recall = len(flagged & want) / len(want)
        assert precision == 1.0
        assert recall == 1.0

    qm = quality_metrics(reports)
    assert qm.n == 1000
    assert qm.format_pct == pytest.approx(93.2, abs=1e-9)
    assert qm.retained == 1000 - 68 - 50
    assert elapsed < 10.0


# 9 ---------------------------------------------------------------------------

def test_criterion_09_latency_amortization(tmp_path):
    out = tmp_path / "latency.csv"
    assert main(["bench", "--t-slow-ms", "374", "--k-values", "5,10,15,30,60",
                 "--steps", "60", "--out", str(out)]) == 0
    rows = [line.split(",") for line
            in out.read_text().splitlines()[2:]]
    assert [int(r[0]) for r in rows] == [5, 10, 15, 30, 60]
    measured = [float(r[4]) for r in rows]
    for r in rows:
        k, t_fast = int(r[0]), float(r[1])
        predicted = amortized_latency(t_fast, 374.0, k)
        assert abs(float(r[4]) - predicted) <= BENCH_TOL * predicted
    assert all(a > b for a, b in zip(measured, measured[1:]))


# 10 --------------------------------------------------------------------------

def test_criterion_10_byte_identical_reruns(tmp_path, maps_dir):
    run_cfg = tmp_path / "run.json"
    run_cfg.write_text(json.dumps({
        "seed": 0, "out_dir": str(tmp_path / "run_out"),
        "maps": [str(maps_dir / "tworoom20.txt")],
        "episodes": {"sampler": {"n_per_stratum": 2, "seed": 7,
                                 "max_steps": 200}},
        "agent": {"type": "greedy"},
        "hier": {"planner": "oracle", "k": 10},
    }))
    assert main(["run", "--config", str(run_cfg)]) == 0
    first = {p.name: p.read_bytes() for p in (tmp_path / "run_out").iterdir()}
    assert main(["run", "--config", str(run_cfg)]) == 0
    second = {p.name: p.read_bytes() for p in (tmp_path / "run_out").iterdir()}
    assert set(first) >= {"trajectories.jsonl", "results.csv"}
    assert first == second

    train_cfg = tmp_path / "train.json"
    train_cfg.write_text(json.dumps({
        "seed": 3, "out_dir": str(tmp_path / "train_out"),
        "maps": [str(maps_dir / "open12.txt")],
        "episodes": {"sampler": {"n_per_stratum": 2, "seed": 7,
                                 "strata": ["easy"], "max_steps": 80}},
        "agent": {"type": "greedy"},
        "hier": {"planner": "null", "k": 5},
        "train": {"total_env_steps": 256, "rollout_len": 16, "n_workers": 1,
                  "probe_every": 4,
                  "episodes": {"sampler": {"n_per_stratum": 2, "seed": 3,
                                           "strata": ["easy"],
                                           "max_steps": 60}}},
    }))
    assert main(["train", "--config", str(train_cfg)]) == 0
    first = {p.name: p.read_bytes() for p in (tmp_path / "train_out").iterdir()}
    assert main(["train", "--config", str(train_cfg)]) == 0
    second = {p.name: p.read_bytes() for p in (tmp_path / "train_out").iterdir()}
    assert set(first) >= {"curve.csv", "checkpoint.json"}
    assert first == second
