"""Tests for the latent-Gaussian mixture imputer.

The truncated-normal sampler is checked against the analytic truncated
cdf (Kolmogorov-Smirnov) and closed-form moments; the sampler as a
whole is checked on fixed-cutoff recoveries where the generating
distribution is known exactly: a probit-style univariate model, a
single correlated Gaussian, and a two-cluster mixture.
"""

import numpy as np
import pytest
from scipy import stats
from scipy.special import ndtr

from ordimpute import DpmmvnImputer, OrdinalDataset, VariableSpec, inject_mcar
from ordimpute.data import IncompleteDataset
from ordimpute.dpmmvn import (
    DpmmvnState,
    SweepAbort,
    cutoffs_for,
    default_hyperpriors,
    gibbs_sweep,
    level_of,
    sample_truncated_normal,
)


def make_incomplete(cells, mask, cards):
    cells = np.asarray(cells)
    mask = np.asarray(mask, dtype=bool)
    variables = tuple(
        VariableSpec(f"v{j}", int(d)) for j, d in enumerate(cards)
    )
    shown = cells.copy()
    shown[mask] = 0
    return IncompleteDataset(variables, shown, mask)


def truncated_cdf(t, mean, sd, lower, upper):
    """Analytic cdf of N(mean, sd^2) truncated to (lower, upper], using
    the complement cdf when the window sits in the upper tail."""
    a = (lower - mean) / sd
    b = (upper - mean) / sd
    s = np.clip((np.asarray(t, dtype=float) - mean) / sd, a, b)
    if a >= 0:
        return (ndtr(-a) - ndtr(-s)) / (ndtr(-a) - ndtr(-b))
    return (ndtr(s) - ndtr(a)) / (ndtr(b) - ndtr(a))


class TestCutoffs:
    def test_two_levels_cut_at_zero(self):
        grid = cutoffs_for([2])[0]
        assert np.array_equal(grid, np.array([-np.inf, 0.0, np.inf]))

    def test_four_levels_quartile_cuts(self):
        grid = cutoffs_for([4])[0]
        q = 0.6744897501960817  # Phi^{-1}(0.75)
        assert grid[0] == -np.inf and grid[-1] == np.inf
        assert np.allclose(grid[1:-1], [-q, 0.0, q], atol=1e-15)

    def test_strictly_increasing_all_cardinalities(self):
        for grid in cutoffs_for(range(2, 9)):
            assert (np.diff(grid) > 0).all()

    def test_equal_prior_mass_per_level(self):
        grid = cutoffs_for([5])[0]
        mass = np.diff(ndtr(grid))
        assert np.allclose(mass, 0.2, atol=1e-12)

    def test_rejects_degenerate_cardinality(self):
        with pytest.raises(ValueError):
            cutoffs_for([1])


class TestLevelOf:
    def test_worked_examples(self):
        grid = np.array([-np.inf, 0.0, 1.0, np.inf])
        assert level_of(0.5, grid) == 2
        assert level_of(0.0, grid) == 1  # windows are upper-inclusive
        assert level_of(-3.0, grid) == 1
        assert level_of(7.0, grid) == 3

    def test_exact_interior_cutoff_codes_below(self):
        grid = cutoffs_for([4])[0]
        assert level_of(grid[2], grid) == 2
        assert level_of(grid[3], grid) == 3
        assert level_of(np.nextafter(grid[3], np.inf), grid) == 4

    def test_vectorized(self):
        grid = np.array([-np.inf, 0.0, 1.0, np.inf])
        got = level_of(np.array([-0.1, 0.0, 0.3, 1.0, 1.1]), grid)
        assert np.array_equal(got, [1, 1, 2, 2, 3])

    def test_roundtrip_through_windows(self):
        rng = np.random.default_rng(4)
        grid = cutoffs_for([6])[0]
        for level in range(1, 7):
            draws = sample_truncated_normal(
                0.0, 1.0, np.full(200, grid[level - 1]), np.full(200, grid[level]), rng
            )
            assert np.array_equal(level_of(draws, grid), np.full(200, level))


class TestTruncatedNormal:
    def test_rejects_bad_windows_and_sd(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            sample_truncated_normal(0.0, 1.0, 1.0, 1.0, rng)
        with pytest.raises(ValueError):
            sample_truncated_normal(0.0, 1.0, 2.0, -1.0, rng)
        with pytest.raises(ValueError):
            sample_truncated_normal(0.0, 0.0, 0.0, 1.0, rng)
        with pytest.raises(ValueError):
            sample_truncated_normal(
                0.0, 1.0, np.array([0.0, 3.0]), np.array([1.0, 3.0]), rng
            )

    def test_support_is_half_open(self):
        rng = np.random.default_rng(1)
        lo, hi = 0.0, 0.5
        draws = sample_truncated_normal(
            0.0, 1.0, np.full(20000, lo), np.full(20000, hi), rng
        )
        assert (draws > lo).all() and (draws <= hi).all()
        assert np.isfinite(draws).all()

    @pytest.mark.parametrize(
        "mean,sd,lower,upper",
        [
            (0.0, 1.0, -np.inf, np.inf),
            (0.0, 1.0, -1.0, 1.0),
            (0.0, 1.0, 2.0, np.inf),
            (0.0, 1.0, 4.0, 6.0),
            (0.0, 1.0, -np.inf, -3.0),
            (3.0, 2.0, 2.5, 8.0),
        ],
    )
    def test_ks_against_analytic_cdf(self, mean, sd, lower, upper):
        rng = np.random.default_rng(11)
        draws = sample_truncated_normal(
            np.full(100_000, mean), sd, lower, upper, rng
        )
        assert (draws > lower).all() and (draws <= upper).all()
        stat = stats.kstest(
            draws, lambda t: truncated_cdf(t, mean, sd, lower, upper)
        ).statistic
        assert stat < 0.01

    def test_standard_normal_moments(self):
        rng = np.random.default_rng(2)
        draws = sample_truncated_normal(
            np.zeros(100_000), 1.0, -np.inf, np.inf, rng
        )
        assert abs(draws.mean()) < 0.02
        assert abs(draws.var() - 1.0) < 0.03

    def test_half_normal_mean(self):
        rng = np.random.default_rng(3)
        draws = sample_truncated_normal(np.zeros(100_000), 1.0, 0.0, np.inf, rng)
        assert abs(draws.mean() - np.sqrt(2.0 / np.pi)) < 0.02

    def test_broadcasting_and_scalars(self):
        rng = np.random.default_rng(5)
        out = sample_truncated_normal(
            np.array([0.0, 10.0, -10.0]), 1.0, -np.inf, np.inf, rng
        )
        assert out.shape == (3,)
        assert abs(out[1] - 10.0) < 6 and abs(out[2] + 10.0) < 6
        one = sample_truncated_normal(0.0, 1.0, 1.0, 2.0, rng)
        assert isinstance(one, float) and 1.0 < one <= 2.0

    def test_deterministic_under_seed(self):
        a = sample_truncated_normal(
            0.0, 1.0, np.full(50, -0.5), 1.5, np.random.default_rng(9)
        )
        b = sample_truncated_normal(
            0.0, 1.0, np.full(50, -0.5), 1.5, np.random.default_rng(9)
        )
        assert np.array_equal(a, b)


class TestHyperpriors:
    def test_default_constants(self):
        h = default_hyperpriors(3)
        assert np.array_equal(h.a_m, np.zeros(3))
        assert np.array_equal(h.B_m, 10.0 * np.eye(3))
        assert h.a_V == 5.0 and np.array_equal(h.B_V, np.eye(3))
        assert h.a_S == 5.0 and np.allclose(h.B_S, np.eye(3) / 5.0)
        assert h.nu == 5.0

    def test_unknown_key_rejected(self):
        inc = make_incomplete([[1, 1], [2, 2]], np.zeros((2, 2), bool), (2, 2))
        imp = DpmmvnImputer(K=2, n_iter=4, burn_in=2, n_imputations=2,
                            hyperpriors={"bogus": 1.0})
        with pytest.raises(ValueError, match="unknown hyperprior"):
            imp.impute(inc, seed=0)

    def test_non_spd_scale_rejected(self):
        inc = make_incomplete([[1, 1], [2, 2]], np.zeros((2, 2), bool), (2, 2))
        bad = np.array([[1.0, 2.0], [2.0, 1.0]])
        imp = DpmmvnImputer(K=2, n_iter=4, burn_in=2, n_imputations=2,
                            hyperpriors={"B_m": bad})
        with pytest.raises(ValueError, match="positive definite"):
            imp.impute(inc, seed=0)

    def test_small_df_rejected(self):
        inc = make_incomplete([[1, 1], [2, 2]], np.zeros((2, 2), bool), (2, 2))
        imp = DpmmvnImputer(K=2, n_iter=4, burn_in=2, n_imputations=2,
                            hyperpriors={"nu": 1.0})
        with pytest.raises(ValueError, match="at least p"):
            imp.impute(inc, seed=0)

    def test_valid_override_runs(self):
        rng = np.random.default_rng(7)
        cells = rng.integers(1, 4, size=(40, 2))
        mask = rng.random((40, 2)) < 0.2
        inc = make_incomplete(cells, mask, (3, 3))
        imp = DpmmvnImputer(K=3, n_iter=12, burn_in=4, n_imputations=3,
                            hyperpriors={"nu": 6.0, "a_m": [0.5, -0.5]})
        res = imp.impute(inc, seed=2)
        assert len(res.completed) == 3


class TestSweepMechanics:
    def test_invariants_hold_every_sweep(self):
        # check_every=1 asserts state shape, SPD-ish structure, and the
        # cutoff-window consistency of every cell after every sweep
        rng = np.random.default_rng(12)
        cells = rng.integers(1, 5, size=(60, 3))
        mask = rng.random((60, 3)) < 0.25
        inc = make_incomplete(cells, mask, (4, 4, 4))
        imp = DpmmvnImputer(K=4, n_iter=30, burn_in=10, n_imputations=5,
                            check_every=1)
        res = imp.impute(inc, seed=5)
        assert len(res.completed) == 5
        assert res.diagnostics["aborted_sweeps"] == 0.0

    def test_covariance_draws_stay_spd(self):
        rng = np.random.default_rng(13)
        cells = rng.integers(1, 4, size=(50, 2))
        mask = np.zeros((50, 2), bool)
        inc = make_incomplete(cells, mask, (3, 3))
        levels = inc.cells.astype(np.int64).copy()
        cutoffs = cutoffs_for(inc.cardinalities)
        priors = default_hyperpriors(2)
        from ordimpute.dpmmvn import _prior_state

        chain = np.random.default_rng(77)
        state = _prior_state(levels, inc.mask, cutoffs, 4, priors, chain)
        for _ in range(20):
            state = gibbs_sweep(state, levels, inc.mask, cutoffs, priors, chain)
            for k in range(state.K):
                np.linalg.cholesky(state.Sigma[k])
            np.linalg.cholesky(state.Vmat)
            np.linalg.cholesky(state.S)
            assert (np.linalg.eigvalsh(state.Sigma) > 0).all()

    def test_deterministic_under_seed(self):
        rng = np.random.default_rng(14)
        cells = rng.integers(1, 4, size=(40, 2))
        mask = rng.random((40, 2)) < 0.3
        inc = make_incomplete(cells, mask, (3, 3))
        imp = DpmmvnImputer(K=3, n_iter=20, burn_in=5, n_imputations=4)
        a = imp.impute(inc, seed=21)
        b = imp.impute(inc, seed=21)
        c = imp.impute(inc, seed=22)
        assert all(
            np.array_equal(x.cells, y.cells)
            for x, y in zip(a.completed, b.completed)
        )
        assert any(
            not np.array_equal(x.cells, y.cells)
            for x, y in zip(a.completed, c.completed)
        )

    def test_default_configuration(self):
        imp = DpmmvnImputer()
        assert imp.K == 50
        assert imp.n_iter == 15000
        assert imp.burn_in == 5000

    def test_empty_mask_returns_input_copies(self):
        rng = np.random.default_rng(15)
        cells = rng.integers(1, 5, size=(30, 2))
        inc = make_incomplete(cells, np.zeros((30, 2), bool), (4, 4))
        res = DpmmvnImputer(K=3, n_iter=10, burn_in=3, n_imputations=3).impute(
            inc, seed=1
        )
        for done in res.completed:
            assert np.array_equal(done.cells, cells)

    def test_unfixable_cholesky_aborts_without_side_effects(self):
        n, p = 6, 2
        levels = np.tile([1, 2], (n, 1)).astype(np.int64)
        mask = np.zeros((n, p), bool)
        mask[0, 0] = True
        cutoffs = cutoffs_for([3, 3])
        priors = default_hyperpriors(p)
        bad = np.array([[1.0, 2.0], [2.0, 1.0]])  # eigenvalues -1 and 3
        state = DpmmvnState(
            K=1,
            z=np.ones(n, dtype=np.int64),
            V=np.array([1.0]),
            pi=np.array([1.0]),
            alpha=1.0,
            x=np.zeros((n, p)),
            mu=np.zeros((1, p)),
            Sigma=bad[None],
            m=np.zeros(p),
            Vmat=np.eye(p),
            S=np.eye(p),
        )
        before = levels.copy()
        x_before = state.x.copy()
        with pytest.raises(SweepAbort, match="class covariance"):
            gibbs_sweep(state, levels, mask, cutoffs, priors, np.random.default_rng(0))
        assert np.array_equal(levels, before)
        assert np.array_equal(state.x, x_before)

    def test_truncation_grows_when_saturated(self):
        # four well-separated latent blobs but only K=2 classes to start
        rng = np.random.default_rng(16)
        n = 300
        centers = np.array([[-2.5, -2.5], [-2.5, 2.5], [2.5, -2.5], [2.5, 2.5]])
        which = rng.integers(0, 4, n)
        x = centers[which] + 0.3 * rng.standard_normal((n, 2))
        grids = cutoffs_for([5, 5])
        cells = np.stack([level_of(x[:, j], grids[j]) for j in range(2)], axis=1)
        inc = make_incomplete(cells, np.zeros((n, 2), bool), (5, 5))
        imp = DpmmvnImputer(K=2, n_iter=60, burn_in=20, n_imputations=5)
        res = imp.impute(inc, seed=3)
        assert res.diagnostics["final_K"] >= 12.0
        assert res.diagnostics["growth_steps"] >= 1.0
        frozen = DpmmvnImputer(K=2, n_iter=60, burn_in=20, n_imputations=5,
                               adapt_truncation=False)
        res2 = frozen.impute(inc, seed=3)
        assert res2.diagnostics["final_K"] == 2.0

    def test_trace_file(self, tmp_path):
        rng = np.random.default_rng(17)
        cells = rng.integers(1, 4, size=(40, 2))
        mask = rng.random((40, 2)) < 0.2
        inc = make_incomplete(cells, mask, (3, 3))
        path = tmp_path / "trace.csv"
        imp = DpmmvnImputer(K=3, n_iter=25, burn_in=10, n_imputations=5,
                            trace_path=str(path))
        imp.impute(inc, seed=4)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "sweep,occupied_classes,alpha,p_v0_eq_1,p_v1_eq_1"
        assert len(lines) == 26
        rows = [line.split(",") for line in lines[1:]]
        assert [int(r[0]) for r in rows] == list(range(1, 26))
        for r in rows:
            assert 1 <= int(r[1]) <= 23  # occupied never exceeds truncation
            assert float(r[2]) > 0
            assert 0.0 <= float(r[3]) <= 1.0 and 0.0 <= float(r[4]) <= 1.0


class TestPosteriorBehavior:
    def test_probit_marginal_tracks_observed_proportion(self):
        # K=1, p=1, D=2: the model is a latent-normal threshold marginal;
        # long-run imputed P(Y=1) must match the observed proportion
        rng = np.random.default_rng(30)
        n = 600
        y = (rng.random(n) < 0.65).astype(np.int64) + 1  # P(level 2) = 0.65
        data = OrdinalDataset((VariableSpec("y", 2),), y[:, None])
        inc = inject_mcar(data, {"y": 0.3}, seed=301)
        obs = ~inc.mask[:, 0]
        observed_p1 = float((inc.cells[obs, 0] == 1).mean())
        imp = DpmmvnImputer(K=1, n_iter=2000, burn_in=500, n_imputations=25,
                            adapt_truncation=False)
        res = imp.impute(inc, seed=31)
        imputed = np.concatenate(
            [done.cells[inc.mask[:, 0], 0] for done in res.completed]
        )
        assert abs((imputed == 1).mean() - observed_p1) < 0.03

    def test_single_gaussian_recovery_under_mcar(self):
        # data generated by one correlated normal pushed through the fixed
        # cutoffs; pooled completed-data marginals must match the
        # generating pmf
        rng = np.random.default_rng(32)
        n = 2500
        mu = np.array([0.3, -0.2, 0.1])
        cov = np.array([[1.0, 0.5, 0.3], [0.5, 1.0, 0.4], [0.3, 0.4, 1.0]])
        x = rng.multivariate_normal(mu, cov, size=n)
        cards = (3, 4, 5)
        grids = cutoffs_for(cards)
        cells = np.stack(
            [level_of(x[:, j], grids[j]) for j in range(3)], axis=1
        )
        data = OrdinalDataset(
            tuple(VariableSpec(f"v{j}", d) for j, d in enumerate(cards)), cells
        )
        inc = inject_mcar(data, {"v0": 0.3, "v1": 0.3, "v2": 0.3}, seed=321)
        imp = DpmmvnImputer(K=8, n_iter=800, burn_in=250, n_imputations=10)
        res = imp.impute(inc, seed=33)
        for j, d in enumerate(cards):
            truth = np.diff(ndtr(grids[j] - mu[j]))  # unit variances
            pooled = np.zeros(d)
            for done in res.completed:
                pooled += np.bincount(done.cells[:, j], minlength=d + 1)[1:]
            pooled /= pooled.sum()
            assert np.abs(pooled - truth).max() < 0.03

    def test_two_latent_clusters_occupy_two_classes(self, tmp_path):
        # Two well-separated latent clusters, each confined to a single
        # bounded interior cell of a 5x5 grid.  Under vague hyperpriors
        # the latent coordinates are free enough that near-duplicate
        # classes persist for long stretches (a tight sub-class can
        # re-draw its members' latents to fit itself at no data cost),
        # so the run uses informative scale hyperpriors: class
        # covariance pinned near 0.01*I by a large nu, and class means
        # pinned near the grid centre so empty-class draws park away
        # from the data.  Label mixing is then driven by the data and
        # the chain sits on exactly two occupied classes almost always.
        rng = np.random.default_rng(34)
        n = 1000
        half = n // 2
        x = np.concatenate(
            [
                -0.55 + 0.08 * rng.standard_normal((half, 2)),
                0.55 + 0.08 * rng.standard_normal((n - half, 2)),
            ]
        )
        grids = cutoffs_for([5, 5])
        cells = np.stack([level_of(x[:, j], grids[j]) for j in range(2)], axis=1)
        data = OrdinalDataset(
            tuple(VariableSpec(f"v{j}", 5) for j in range(2)), cells
        )
        inc = inject_mcar(data, {"v0": 0.02, "v1": 0.02}, seed=77)

        p, K, nu, a_V, a_S = 2, 5, 5000.0, 1e4, 1e6
        s0, v0 = 0.01, 0.01  # posterior scale targets for Sigma_k and Vmat
        trace = tmp_path / "trace.csv"
        imputer = DpmmvnImputer(
            K=K,
            n_iter=400,
            burn_in=150,
            n_imputations=3,
            adapt_truncation=False,
            trace_path=str(trace),
            hyperpriors={
                "a_m": np.zeros(p),
                "B_m": 10.0 * np.eye(p),
                "a_V": a_V,
                "B_V": v0 * (a_V + K - p - 1) * np.eye(p),
                "a_S": a_S,
                "B_S": s0 * (nu - p - 1) / (a_S + K * nu) * np.eye(p),
                "nu": nu,
            },
        )
        result = imputer.impute(inc, seed=35)
        assert result.diagnostics["aborted_sweeps"] == 0
        occupied = np.loadtxt(trace, delimiter=",", skiprows=1)[:, 1]
        post = occupied[150:]
        assert np.mean(post == 2) >= 0.90
