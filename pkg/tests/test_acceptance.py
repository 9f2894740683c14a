"""The ten acceptance criteria, each printing one PASS/FAIL line."""

import time

import numpy as np
import pytest

from nasforge.cost import TensorShape, cost_report, hinge_cost
from nasforge.data import DataSettings
from nasforge.driver import RunConfig, run_search
from nasforge.fair import fair_pattern, part_counts
from nasforge.network import Network
from nasforge.search import SearchConfig, choice_indices, init_params, run_bandit, sample_architecture
from nasforge.space import AXES, cardinality, get_space, preset_autox3d_s, preset_x3d_s
from nasforge.supernet import Supernet
from gradsuite import all_cases
import test_supernet

SEEDS = (0, 1, 2, 3, 4)


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {n:2d} {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail
    return emit


def test_01_x3d_s_cost(report):
    t = time.perf_counter()
    r = cost_report(preset_x3d_s(), TensorShape(3, 13, 160, 160))
    elapsed = time.perf_counter() - t
    gf, mp = r.total_flops / 1e9, r.total_params / 1e6
    report(1, 1.76 <= gf <= 2.16 and 3.06 <= mp <= 3.74 and elapsed < 1,
           f"X3D-S {gf:.3f} GFLOPs, {mp:.3f} M params, {elapsed * 1e3:.0f} ms")


def test_02_autox3d_s_params(report):
    r = cost_report(preset_autox3d_s())
    mp = r.total_params / 1e6
    report(2, 3.15 <= mp <= 3.85, f"AutoX3D-S {mp:.3f} M params ({r.total_flops / 1e9:.3f} GFLOPs, not asserted)")


def test_03_cardinality(report):
    lg = cardinality(get_space("macro")).log10
    report(3, 32.0 <= lg <= 32.7, f"macro space log10 = {lg:.2f}")


def test_04_fair_pattern(report):
    bad = [n for n in range(1, 64, 2) if not np.all(part_counts(fair_pattern(n)) == (n + 1) // 2)]
    five, seven = part_counts(fair_pattern(5)), part_counts(fair_pattern(7))
    report(4, not bad and set(five) == {3} and set(seven) == {4},
           f"odd N <= 63 balanced (failures: {bad}); N=5 -> {five[0]}/5, N=7 -> {seven[0]}/7")


def test_05_hinge(report):
    exact = [hinge_cost(2e9, 2e9), hinge_cost(1.7e9, 2.0e9), hinge_cost(3.0e9, 2.0e9)]
    rng = np.random.default_rng(5)
    fl, tg = rng.uniform(1, 1e10, 1000), rng.uniform(1, 1e10, 1000)
    got = np.array([hinge_cost(f, t) for f, t in zip(fl, tg)])
    ref = np.array([max(f - t, 0.0) / t for f, t in zip(fl, tg)])
    report(5, exact == [0, 0, 0.5] and np.array_equal(got, ref),
           f"cases {exact}; 1000 random pairs match max(F-T,0)/T exactly: {np.array_equal(got, ref)}")


def test_06_gradients(report):
    t = time.perf_counter()
    results = list(all_cases())
    elapsed = time.perf_counter() - t
    worst = max(r.max_rel_error for _, r in results)
    failed = [name for name, r in results if not (r.passed and r.max_rel_error < 1e-4)]
    report(6, not failed and elapsed < 60,
           f"{len(results)} cases, worst relative error {worst:.1e}, {elapsed:.1f} s, failures {failed}")


def test_07_bandit(report):
    space = get_space("toy")
    uniform = init_params(space)
    t = time.perf_counter()
    lows = []
    for seed in range(3):
        rng = np.random.default_rng(seed)
        target = [{a: int(rng.integers(len(g.axis(a)))) for a in AXES} for g in space.groups]

        def evaluate(arch, target=target):
            idx = choice_indices(uniform, arch)
            return -float(sum((i[a] - t[a]) ** 2 for i, t in zip(idx, target) for a in AXES))

        opt = run_bandit(space, evaluate, SearchConfig(cost_weight=0.0, samples_per_step=13), 500, rng)
        lows.append(float(min(opt.params.probs(g, a)[target[g][a]] for g in range(len(space.groups)) for a in AXES)))
    elapsed = time.perf_counter() - t
    report(7, min(lows) > 0.9 and elapsed < 30,
           f"lowest planted-axis probability per seed {[round(x, 3) for x in lows]}, {elapsed:.1f} s")


def targeting_config(seed, mode, out):
    return RunConfig(space="toy-width", search=SearchConfig(samples_per_step=7, seed=seed),
                     data=DataSettings(), batch_size=4, eval_batch_size=8, pattern_mode=mode, out_dir=str(out))


@pytest.fixture
def targeting_runs(tmp_path):
    t = time.perf_counter()
    gaps = {mode: [] for mode in ("fair", "naive")}
    for seed in SEEDS:
        for mode in gaps:
            r = run_search(targeting_config(seed, mode, tmp_path / f"{mode}{seed}"))
            gaps[mode].append((r.flops - r.target) / r.target)
    return gaps, time.perf_counter() - t


def test_08_flops_targeting(report, targeting_runs):
    gaps, elapsed = targeting_runs
    fair_ok = all(abs(g) <= 0.15 for g in gaps["fair"])
    naive_ok = all(g <= -0.10 for g in gaps["naive"])
    # the same runs also carry the fair-vs-naive separation property
    fair_mean, naive_mean = np.mean(np.abs(gaps["fair"])), np.mean(np.abs(gaps["naive"]))
    report(8, fair_ok and naive_ok and fair_mean < naive_mean and elapsed < 600,
           f"fair gaps {[round(g, 3) for g in gaps['fair']]} (need |gap| <= 0.15), naive gaps "
           f"{[round(g, 3) for g in gaps['naive']]} (need <= -0.10), mean |gap| fair {fair_mean:.3f} "
           f"vs naive {naive_mean:.3f} (need fair < naive), {elapsed:.0f} s")


def test_09_weight_sharing(report):
    space = get_space("toy")
    net = Supernet(space, seed=0)
    rng = np.random.default_rng(9)
    x = rng.standard_normal((2, space.input_channels, space.input_frames, space.input_spatial, space.input_spatial))
    params = init_params(space)
    worst = 0.0
    for _ in range(20):
        arch = sample_architecture(params, rng)[0]
        shared = net.forward(net.activate(arch), x).data
        alone = Network(space, arch, weights=net.extract_standalone(arch)).forward(x).data
        worst = max(worst, float(np.abs(shared - alone).max()))
    report(9, worst <= 1e-10, f"max elementwise difference over 20 archs {worst:.1e}")


def test_10_update_fairness(report):
    space = get_space("toy-width")
    fair = test_supernet.TestFairnessRealization.part_rates(space, "fair")
    naive = test_supernet.TestFairnessRealization.part_rates(space, "naive")
    fair_err = float(np.abs(fair - 0.6).max())
    naive_err = float(np.abs(naive - [1.0, 0.8, 0.6, 0.4, 0.2]).max())
    report(10, fair_err <= 0.02 and naive_err <= 0.02,
           f"max deviation over 1e4 draws: fair {fair_err:.4f}, naive {naive_err:.4f}")
