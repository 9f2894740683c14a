import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nasforge.cost import cost_report
from nasforge.space import AXES, ArchitectureSpec, GroupChoice, get_space
from nasforge.search import (
    LOGPROB_FLOOR,
    ArchParams,
    ParsecOptimizer,
    SearchConfig,
    alpha_gradient,
    axis_entropy,
    batch_loglik,
    choice_indices,
    init_params,
    log_prob,
    most_probable,
    posterior_weights,
    run_bandit,
    sample_architecture,
    softmax,
)


def one_hot_params(space, rng):
    params = init_params(space)
    chosen = {}
    for k, v in params.logits.items():
        i = int(rng.integers(len(v)))
        v[i] = 50.0
        chosen[k] = i
    return params, chosen


def arch_from_indices(space, idx):
    return ArchitectureSpec(space.space_id, [
        GroupChoice(*(g.axis(axis)[idx[gi][axis]] for axis in AXES)) for gi, g in enumerate(space.groups)
    ])


class TestConfig:
    def test_defaults(self):
        cfg = SearchConfig()
        assert (cfg.samples_per_step, cfg.cost_weight) == (13, 1.0)
        assert (cfg.warmup_epochs, cfg.total_epochs) == (60, 200)

    @pytest.mark.parametrize("kw", [dict(samples_per_step=0), dict(warmup_epochs=201),
                                    dict(cost_weight=-1), dict(target_flops=0)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SearchConfig(**kw)

    def test_json_round_trip(self):
        cfg = SearchConfig(target_flops=1e6, seed=4)
        assert SearchConfig.from_json(cfg.to_json()) == cfg
        with pytest.raises(ValueError):
            SearchConfig.from_json({"samples": 3})


class TestParams:
    def test_uniform_init(self, toy):
        params = init_params(toy)
        assert np.allclose(params.probs(0, "block_type"), 1 / 6)
        for k, v in params.logits.items():
            assert abs(softmax(v).sum() - 1) <= 1e-12

    def test_fresh_most_probable_is_lowest_index(self, toy):
        arch = most_probable(init_params(toy))
        assert all(i == 0 for idx in choice_indices(init_params(toy), arch) for i in idx.values())

    def test_json_round_trip(self, toy, rng):
        params, _ = one_hot_params(toy, rng)
        again = ArchParams.from_json(params.to_json(), toy)
        assert all(np.array_equal(again.logits[k], params.logits[k]) for k in params.logits)

    def test_json_wrong_space(self, toy, toy_width):
        with pytest.raises(ValueError):
            ArchParams.from_json(init_params(toy).to_json(), toy_width)


class TestSampling:
    def test_one_hot_always_drawn(self, toy, rng):
        params, chosen = one_hot_params(toy, rng)
        target = arch_from_indices(toy, [{a: chosen[f"g{g + 1}.{a}"] for a in AXES}
                                         for g in range(len(toy.groups))])
        assert all(sample_architecture(params, rng)[0] == target for _ in range(1000))

    def test_uniform_frequencies(self, toy, rng):
        params = init_params(toy)
        n, k = 10_000, len(toy.groups[1].block_types)
        draws = [choice_indices(params, sample_architecture(params, rng)[0])[1]["block_type"] for _ in range(n)]
        freq = np.bincount(draws, minlength=k) / n
        p = 1 / k
        assert np.all(np.abs(freq - p) <= 3 * math.sqrt(p * (1 - p) / n))

    def test_log_prob_is_product_of_axis_probs(self, toy, rng):
        params = init_params(toy)
        for v in params.logits.values():
            v[:] = rng.standard_normal(v.shape)
        for _ in range(20):
            arch, lp = sample_architecture(params, rng)
            direct = 1.0
            for g, idx in enumerate(choice_indices(params, arch)):
                for axis in AXES:
                    direct *= params.probs(g, axis)[idx[axis]]
            assert lp == pytest.approx(math.log(direct), abs=1e-12)
            assert log_prob(params, arch) == pytest.approx(lp, abs=1e-12)


class TestPosterior:
    def test_uniform(self):
        assert np.allclose(posterior_weights([-1.0] * 4, [0.0] * 4, 1.0), 0.25)

    def test_likelihood_ratio(self):
        np.testing.assert_allclose(posterior_weights([0.0, math.log(2)], [0, 0], 0.0), [1 / 3, 2 / 3])

    def test_hinge_penalty(self):
        np.testing.assert_allclose(posterior_weights([0.0, 0.0], [0.0, 0.5], 1.0), [0.6225, 0.3775], atol=1e-4)

    def test_all_minus_infinity(self):
        with pytest.raises(ValueError):
            posterior_weights([-np.inf, -np.inf], [0, 0], 1.0)

    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            posterior_weights([0.0, np.nan], [0, 0], 1.0)

    # values on a 1/8 grid with integer shifts keep every subtraction exact
    @given(st.lists(st.integers(-400, 0), min_size=1, max_size=13), st.integers(-10**6, 10**6))
    def test_shift_invariance_exact(self, ticks, shift):
        ll = np.array(ticks) / 8.0
        costs = np.zeros(len(ticks))
        assert np.array_equal(posterior_weights(ll, costs, 1.0), posterior_weights(ll + shift, costs, 1.0))

    @given(st.lists(st.floats(-50, 0), min_size=1, max_size=13), st.floats(-1e3, 1e3))
    def test_shift_invariance_general(self, ll, shift):
        ll = np.array(ll)
        np.testing.assert_allclose(posterior_weights(ll, 0 * ll, 1.0), posterior_weights(ll + shift, 0 * ll, 1.0),
                                   atol=1e-12)

    def test_floor(self):
        assert batch_loglik([-1.0, -1e9, -2.0]) == -3.0 + LOGPROB_FLOOR


class TestGradient:
    def test_single_sample_five_options(self, toy_width):
        params = init_params(toy_width)
        grad = alpha_gradient([most_probable(params)], [1.0], params)
        np.testing.assert_allclose(-grad["g1.expansion"], np.eye(5)[0] - 0.2, atol=1e-15)

    def test_two_option_axis(self, toy):
        params = init_params(toy)
        grad = alpha_gradient([most_probable(params)], [1.0], params)
        np.testing.assert_allclose(-grad["g1.attention"], [0.5, -0.5])

    def test_proportional_samples_cancel(self, toy):
        params = init_params(toy)
        base = most_probable(params)
        other = ArchitectureSpec(base.space_id, (GroupChoice(base.choices[0].block_type, base.choices[0].channels,
                                                             base.choices[0].expansion,
                                                             toy.groups[0].attention_kinds[1]),)
                                 + base.choices[1:])
        grad = alpha_gradient([base, other], [0.5, 0.5], params)
        np.testing.assert_allclose(grad["g1.attention"], 0, atol=1e-15)

    def test_sums_to_zero(self, toy, rng):
        params = init_params(toy)
        for v in params.logits.values():
            v[:] = rng.standard_normal(v.shape)
        samples = [sample_architecture(params, rng)[0] for _ in range(13)]
        w = rng.dirichlet(np.ones(13))
        for v in alpha_gradient(samples, w, params).values():
            assert abs(v.sum()) <= 1e-12

    def test_length_mismatch(self, toy):
        params = init_params(toy)
        with pytest.raises(ValueError):
            alpha_gradient([most_probable(params)], [0.5, 0.5], params)

    def test_matches_surrogate_finite_differences(self, toy, rng):
        # J(a) = log sum_k exp(s_k + log P(A_k|a) - log P(A_k|a0)); its gradient at a0 is the ascent direction
        params0 = init_params(toy)
        for v in params0.logits.values():
            v[:] = rng.standard_normal(v.shape)
        samples = [sample_architecture(params0, rng)[0] for _ in range(2)]
        scores = np.array([-0.7, -1.9])
        lp0 = np.array([log_prob(params0, a) for a in samples])

        def surrogate(p):
            z = scores + np.array([log_prob(p, a) for a in samples]) - lp0
            return float(np.log(np.exp(z - z.max()).sum()) + z.max())

        ascent = {k: -v for k, v in alpha_gradient(samples, posterior_weights(scores, [0, 0], 0.0),
                                                   params0).items()}
        eps, worst = 1e-6, 0.0
        for k, v in params0.logits.items():
            for i in range(len(v)):
                hi, lo = params0.copy(), params0.copy()
                hi.logits[k][i] += eps
                lo.logits[k][i] -= eps
                fd = (surrogate(hi) - surrogate(lo)) / (2 * eps)
                worst = max(worst, abs(fd - ascent[k][i]))
        assert worst <= 1e-5


class TestMostProbable:
    def test_one_hot(self, toy, rng):
        params, chosen = one_hot_params(toy, rng)
        idx = choice_indices(params, most_probable(params))
        assert all(idx[g][a] == chosen[f"g{g + 1}.{a}"] for g in range(len(toy.groups)) for a in AXES)

    @given(st.floats(-100, 100))
    def test_shift_invariant(self, c):
        space = get_space("toy")
        params = init_params(space)
        rng = np.random.default_rng(0)
        for v in params.logits.values():
            v[:] = rng.standard_normal(v.shape)
        before = most_probable(params)
        params.logits["g2.channels"] = params.logits["g2.channels"] + c
        assert most_probable(params) == before

    def test_entropy_of_uniform(self, toy):
        ent = axis_entropy(init_params(toy))
        assert ent["block_type"] == pytest.approx(math.log(6))
        assert ent["attention"] == pytest.approx(math.log(2))


class TestOptimizer:
    def test_cost_weight_needs_target(self, toy):
        opt = ParsecOptimizer(toy, SearchConfig(cost_weight=1.0))
        with pytest.raises(ValueError):
            opt.costs([most_probable(opt.params)])

    def test_bandit_converges(self, toy):
        rng = np.random.default_rng(0)
        target = [{a: int(rng.integers(len(g.axis(a)))) for a in AXES} for g in toy.groups]
        uniform = init_params(toy)

        def evaluate(arch):
            idx = choice_indices(uniform, arch)
            return -float(sum((idx[g][a] - target[g][a]) ** 2 for g in range(len(idx)) for a in AXES))

        opt = run_bandit(toy, evaluate, SearchConfig(cost_weight=0.0), 500, rng)
        assert min(opt.params.probs(g, a)[target[g][a]] for g in range(len(toy.groups)) for a in AXES) > 0.9
        assert opt.most_probable() == arch_from_indices(toy, target)

    def test_cost_steering_toward_cheaper_channels(self, toy_width):
        rng = np.random.default_rng(1)
        cheapest = cost_report(most_probable(init_params(toy_width)), space=toy_width).total_flops
        opt = ParsecOptimizer(toy_width, SearchConfig(cost_weight=1.0, target_flops=cheapest / 2))

        def expected_channel_index():
            # summed over groups: single groups jitter once they sit on the cheapest option
            return sum(float(opt.params.probs(g, "channels") @ np.arange(5)) for g in range(len(toy_width.groups)))

        history = [expected_channel_index()]
        for _window in range(4):
            for _ in range(50):
                samples = opt.sample(rng)
                opt.step(samples, np.zeros(len(samples)))
            history.append(expected_channel_index())
        assert np.all(np.diff(history) < 0)
