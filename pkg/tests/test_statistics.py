import numpy as np
import pytest

from knockoffkit import statistics as st
from knockoffkit.harness import BreakSpec, generate_break_experiment
from knockoffkit.knockoff_core import MixtureKnockoffSampler, compute_diag, gaussian_knockoff_params
from knockoffkit.predictors import CapabilityError, MlpModel, fit_lasso, fit_logistic, fit_mlp
from knockoffkit.statistics import LambdaPath, StatConfig


def gaussian_problem(rng, n=300, d=6, nonnull=(0, 1), amp=1.0, binary=True):
    S = 0.3 ** np.abs(np.subtract.outer(np.arange(d), np.arange(d)))
    X = rng.multivariate_normal(np.zeros(d), S, n)
    p = gaussian_knockoff_params(np.zeros(d), S, compute_diag(S))
    Xk = p.conditional_mean(X) + rng.standard_normal((n, d)) @ p.cond_cov_chol.T
    beta = np.zeros(d)
    beta[list(nonnull)] = amp
    eta = X @ beta
    Y = (rng.random(n) < 1 / (1 + np.exp(-2 * eta))).astype(int) if binary else eta + rng.standard_normal(n)
    return X, Xk, Y


def linear_mlp(W, b, p):
    return MlpModel([np.asarray(W, float)], [np.asarray(b, float)], np.zeros(p), np.ones(p),
                    np.array([0, 1]), [], np.zeros(p))


class TestScores:
    def test_identical_scores(self):
        np.testing.assert_array_equal(st.scores_to_stats([1, 2, 1, 2]).w, [0, 0])

    def test_arithmetic(self):
        np.testing.assert_array_equal(st.scores_to_stats([3, 0, 1, 2]).w, [2, -2])

    def test_swap_negates_one_entry(self):
        z = np.array([3.0, 0.5, 1.0, 2.0, 0.2, 4.0])
        zs = z.copy()
        zs[[1, 4]] = zs[[4, 1]]
        np.testing.assert_array_equal(st.scores_to_stats(zs).w, st.scores_to_stats(z).w * [1, -1, 1])

    def test_odd_length(self):
        with pytest.raises(ValueError):
            st.scores_to_stats([1, 2, 3])


class TestFakes:
    def test_swap_involution(self):
        A = np.random.default_rng(0).standard_normal((5, 6))
        for j in range(6):
            np.testing.assert_array_equal(st.swap_fake(st.swap_fake(A, j), j), A)

    def test_permutation_multiset_and_seed(self):
        col = np.random.default_rng(1).standard_normal(100)
        a = st.permutation_fake(col, 5)
        np.testing.assert_array_equal(np.sort(a), np.sort(col))
        np.testing.assert_array_equal(a, st.permutation_fake(col, 5))

    def test_column_substreams(self):
        A = np.tile(np.arange(50.0)[:, None], (1, 4))
        T = st._fake_targets(A, "permutation", 7)
        for c in range(4):
            np.testing.assert_array_equal(T[:, c], st.permutation_fake(A[:, c], np.random.default_rng([7, c])))
        assert not np.array_equal(T[:, 0], T[:, 1])


class TestAccuracyDrop:
    def setup_method(self):
        rng = np.random.default_rng(2)
        self.X, self.Xk, self.Y = gaussian_problem(rng, n=2000)
        self.model = fit_mlp(st.augment(self.X, self.Xk), self.Y, layers=(16,), epochs=5)

    def test_identity_fake(self):
        sv = st.accuracy_drop_scores(self.model, self.X, self.Xk, self.Y, lambda A, c: A[:, c])
        np.testing.assert_array_equal(sv.z, 0.0)

    def test_constant_column_inside_noise_band(self):
        X = np.hstack([self.X, np.full((len(self.X), 1), 2.0)])
        Xk = np.hstack([self.Xk, np.full((len(self.X), 1), 2.0)])
        m = fit_logistic(st.augment(X, Xk), self.Y, l2=1e-2)
        rng = np.random.default_rng(3)
        sv = st.accuracy_drop_scores(m, X, Xk, self.Y, lambda A, c: st.permutation_fake(A[:, c], rng))
        acc = m.accuracy(st.augment(X, Xk), self.Y)
        band = 2 * np.sqrt(acc * (1 - acc) / len(self.Y))
        assert abs(sv.z[6]) <= band and abs(sv.z[13]) <= band

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            st.accuracy_drop_scores(self.model, self.X, self.Xk, self.Y, lambda A, c: A[:10, c])

    def test_mlp_fast_path_matches_direct_evaluation(self):
        Xaug = st.augment(self.X, self.Xk)
        targets = st._fake_targets(Xaug, "swap", 0)
        fast = st._perturbed_scores(self.model, Xaug, self.Y, targets, 0.75)
        direct = np.empty(Xaug.shape[1])
        for c in range(Xaug.shape[1]):
            A = Xaug.copy()
            A[:, c] += 0.75 * (targets[:, c] - A[:, c])
            direct[c] = self.model.accuracy(A, self.Y)
        # float32 forward pass may flip a handful of near-tie predictions
        assert np.abs(fast - direct).max() <= 3 / len(self.Y)

    def test_nonnull_originals_beat_knockoffs(self):
        diffs = []
        cfg = StatConfig(predictor="logistic", logistic_l2=0.1)
        for seed in range(40):
            rng = np.random.default_rng(seed)
            X, Y, nonnulls, model = generate_break_experiment(rng, BreakSpec(n=1000, seed=seed),
                                                              return_model=True)
            Xk = MixtureKnockoffSampler(model).sample(X, rng)
            z = st.compute_statistic("swap", X, Xk, Y, StatConfig(**{**cfg.__dict__, "seed": seed})).z
            d = X.shape[1]
            diffs.append(z[nonnulls].mean() - z[d + np.asarray(nonnulls)].mean())
        assert np.mean(diffs) > 0


class TestLambdaPath:
    def setup_method(self):
        rng = np.random.default_rng(4)
        self.X, self.Xk, self.Y = gaussian_problem(rng, n=1500)
        self.model = fit_mlp(st.augment(self.X, self.Xk), self.Y, layers=(16,), epochs=5)

    def test_zero_row(self):
        path = st.lambda_path(self.model, self.X, self.Xk, self.Y, "swap", [0, 0.5, 1])
        assert np.all(path.values[0] == 0.0)
        assert np.all(np.abs(path.values) <= 1)

    def test_swap_at_one_matches_basic_swap(self):
        path = st.lambda_path(self.model, self.X, self.Xk, self.Y, "swap", [0.0, 1.0])
        sv = st.accuracy_drop_scores(self.model, self.X, self.Xk, self.Y,
                                     lambda A, c: st.swap_fake(A, c)[:, c])
        np.testing.assert_allclose(path.values[1], st.scores_to_stats(sv).w, atol=1e-12)

    def test_permutation_at_one_matches_seeded_fakes(self):
        path = st.lambda_path(self.model, self.X, self.Xk, self.Y, "permutation", [0.0, 1.0], seed=9)
        sv = st.accuracy_drop_scores(self.model, self.X, self.Xk, self.Y,
                                     lambda A, c: st.permutation_fake(A[:, c], np.random.default_rng([9, c])))
        np.testing.assert_allclose(path.values[1], st.scores_to_stats(sv).w, atol=1e-12)

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            st.lambda_path(self.model, self.X, self.Xk, self.Y, "swap", [0.5, 1.0])
        with pytest.raises(ValueError):
            LambdaPath([0.0, 1.0, 1.0], np.zeros((3, 2)))

    def test_default_grid(self):
        g = np.asarray(st.DEFAULT_GRID)
        assert g.size == 41 and g[0] == 0 and g[-1] == 10
        np.testing.assert_allclose(np.diff(g), 0.25)


class TestIntegrate:
    def test_constant(self):
        grid = np.asarray(st.DEFAULT_GRID)
        path = LambdaPath(grid, np.full((grid.size, 2), 0.3))
        np.testing.assert_allclose(st.integrate_path(path).w, [3.0, 3.0])

    def test_trapezoid_hand_value(self):
        path = LambdaPath([0, 5, 10], [[0.0], [1.0], [0.0]])
        assert st.integrate_path(path).w[0] == pytest.approx(5.0)

    def test_linear(self):
        rng = np.random.default_rng(5)
        grid = np.array([0, 0.5, 2.0, 3.0])
        a, b = rng.standard_normal((4, 3)), rng.standard_normal((4, 3))
        ia = st.integrate_path(LambdaPath(grid, a)).w
        ib = st.integrate_path(LambdaPath(grid, b)).w
        np.testing.assert_allclose(st.integrate_path(LambdaPath(grid, 2 * a - b)).w, 2 * ia - ib)

    def test_too_short(self):
        with pytest.raises(ValueError):
            st.integrate_path(LambdaPath([0.0], [[1.0]]))


class TestSaliency:
    def test_linear_gradient_norms(self):
        W = np.array([[1.0, -1.0], [-2.0, 2.0], [0.0, 0.0], [0.5, -0.5]])
        m = linear_mlp(W, [0, 0], 4)
        X = np.random.default_rng(6).standard_normal((50, 4))
        z = st.saliency_scores(m, X[:, :2], X[:, 2:], "gradient").z
        np.testing.assert_allclose(z, [1.0, 2.0, 0.0, 0.5])

    def test_disconnected_column(self):
        rng = np.random.default_rng(7)
        X = rng.standard_normal((200, 4))
        m = fit_mlp(X, (X[:, 0] > 0).astype(int), layers=(8,), epochs=2)
        m.weights[0][1] = 0.0
        for variant in ("gradient", "integrated"):
            assert st.saliency_scores(m, X[:, :2], X[:, 2:], variant).z[1] == 0.0

    def test_integrated_linear_closed_form(self):
        W = np.array([[1.0, -1.0], [-2.0, 2.0], [0.3, -0.3], [0.5, -0.5]])
        m = linear_mlp(W, [0.1, -0.1], 4)
        X = np.random.default_rng(8).standard_normal((60, 4)) + 1.0
        m.feature_means = X.mean(0)
        grad = st.saliency_scores(m, X[:, :2], X[:, 2:], "gradient").z
        ig = st.saliency_scores(m, X[:, :2], X[:, 2:], "integrated").z
        np.testing.assert_allclose(ig, grad * np.abs(X - m.feature_means).mean(0), rtol=1e-12)

    def test_capability_error(self):
        X = np.random.default_rng(9).standard_normal((30, 4))
        fit = fit_lasso(X, X[:, 0], lam=0.1)
        with pytest.raises(CapabilityError):
            st.saliency_scores(fit, X[:, :2], X[:, 2:])


class TestLcd:
    def test_identity_knockoffs(self):
        rng = np.random.default_rng(10)
        X, _, Y = gaussian_problem(rng, binary=False)
        sv = st.lcd_stats(X, X.copy(), Y, l2=1e-3)
        assert np.all(np.abs(sv.w) <= 1e-6)

    def test_swap_negates(self):
        rng = np.random.default_rng(11)
        X, Xk, Y = gaussian_problem(rng, binary=False)
        w = st.lcd_stats(X, Xk, Y).w
        A, B = st.swap_columns(X, Xk, [1, 3])
        ws = st.lcd_stats(A, B, Y).w
        np.testing.assert_array_equal(ws, w * [1, -1, 1, -1, 1, 1])

    def test_signal_and_null_symmetry(self):
        nn_w, null_pos, null_nonzero = [], 0, 0
        nonnull = (0, 4, 8, 12, 16)
        for seed in range(50):
            rng = np.random.default_rng(100 + seed)
            X, Xk, Y = gaussian_problem(rng, n=200, d=20, nonnull=nonnull, amp=0.5, binary=False)
            w = st.lcd_stats(X, Xk, Y, seed=seed).w
            nulls = np.setdiff1d(np.arange(20), nonnull)
            nn_w.append((w[list(nonnull)].mean(), w[nulls].mean()))
            null_pos += int((w[nulls] > 0).sum())
            null_nonzero += int((w[nulls] != 0).sum())
        nn_w = np.array(nn_w)
        assert nn_w[:, 0].mean() > nn_w[:, 1].mean()
        frac = null_pos / null_nonzero
        assert abs(frac - 0.5) <= 3 * np.sqrt(0.25 / null_nonzero)


ALL_METHODS = list(st.METHODS)


class TestFlipSign:
    @pytest.mark.parametrize("subset", [[0], [1, 3], [0, 1, 2, 3]])
    def test_exact_flip_sign_all_methods(self, subset):
        rng = np.random.default_rng(12)
        X, Xk, Y = gaussian_problem(rng, n=400, d=4, nonnull=(0,))
        cfg = StatConfig(layers=(8,), epochs=3, grid=(0.0, 0.5, 1.0, 2.0), ig_steps=8, seed=3)
        w = st.compute_statistics(X, Xk, Y, ALL_METHODS, cfg)
        A, B = st.swap_columns(X, Xk, subset)
        ws = st.compute_statistics(A, B, Y, ALL_METHODS, cfg)
        eps = np.ones(4)
        eps[subset] = -1
        for m in ALL_METHODS:
            np.testing.assert_array_equal(ws[m].w, eps * w[m].w, err_msg=m)

    def test_tied_pairs_are_zero(self):
        rng = np.random.default_rng(13)
        X, Xk, Y = gaussian_problem(rng, n=300, d=3)
        Xk[:, 1] = X[:, 1]
        cfg = StatConfig(layers=(8,), epochs=2, grid=(0.0, 1.0), ig_steps=4)
        out = st.compute_statistics(X, Xk, Y, ALL_METHODS, cfg)
        for m in ALL_METHODS:
            assert out[m].w[1] == 0.0, m

    def test_unknown_method(self):
        with pytest.raises(ValueError, match="unknown method"):
            st.compute_statistics(np.zeros((4, 1)), np.ones((4, 1)), [0, 1, 0, 1], ["magic"])

    def test_deterministic(self):
        rng = np.random.default_rng(14)
        X, Xk, Y = gaussian_problem(rng, n=300, d=3)
        cfg = StatConfig(layers=(8,), epochs=2, grid=(0.0, 1.0), seed=5)
        a = st.compute_statistics(X, Xk, Y, ["permutation", "swap-integral"], cfg)
        b = st.compute_statistics(X, Xk, Y, ["permutation", "swap-integral"], cfg)
        for m in a:
            np.testing.assert_array_equal(a[m].w, b[m].w)
            assert a[m].seed == 5

    def test_return_paths(self):
        rng = np.random.default_rng(15)
        X, Xk, Y = gaussian_problem(rng, n=300, d=3)
        cfg = StatConfig(layers=(8,), epochs=2, grid=(0.0, 1.0, 2.0))
        out, paths = st.compute_statistics(X, Xk, Y, ["swap-integral"], cfg, return_paths=True)
        np.testing.assert_allclose(st.integrate_path(paths["swap-integral"]).w, out["swap-integral"].w)
