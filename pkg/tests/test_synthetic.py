"""Tests for the built-in mixture population."""

import numpy as np
import pytest

from ordimpute import mixture_cell_probability, mixture_population
from ordimpute.synthetic import (
    MIXTURE_PMFS,
    MIXTURE_WEIGHTS,
    SYNTHETIC_VARIABLES,
)


class TestConstants:
    def test_weights_sum_to_one(self):
        assert abs(MIXTURE_WEIGHTS.sum() - 1.0) < 1e-12

    def test_pmf_rows_sum_to_one(self):
        for pmf in MIXTURE_PMFS:
            assert pmf.shape[0] == MIXTURE_WEIGHTS.size
            np.testing.assert_allclose(pmf.sum(axis=1), 1.0, atol=1e-12)

    def test_variable_layout(self):
        assert [v.name for v in SYNTHETIC_VARIABLES] == ["V1", "V2", "V3", "V4", "V5"]
        assert [v.cardinality for v in SYNTHETIC_VARIABLES] == [2, 3, 4, 5, 5]


class TestCellProbability:
    # Hand-computed from the weight and pmf constants.
    def test_marginal_v1_level1(self):
        # 0.45*0.80 + 0.35*0.35 + 0.20*0.15
        assert abs(mixture_cell_probability([(0, 1)]) - 0.5125) < 1e-12

    def test_marginal_v3_level4(self):
        # 0.45*0.08 + 0.35*0.10 + 0.20*0.50
        assert abs(mixture_cell_probability([(2, 4)]) - 0.171) < 1e-12

    def test_joint_pair(self):
        # 0.45*0.80*0.60 + 0.35*0.35*0.15 + 0.20*0.15*0.10
        got = mixture_cell_probability([(0, 1), (1, 1)])
        assert abs(got - 0.237375) < 1e-12

    def test_joint_triple(self):
        # 0.45*0.20*0.10*0.05 + 0.35*0.65*0.25*0.10 + 0.20*0.85*0.65*0.40
        got = mixture_cell_probability([(0, 2), (1, 3), (3, 5)])
        assert abs(got - 0.0503375) < 1e-12

    def test_marginals_sum_to_one(self):
        for j, pmf in enumerate(MIXTURE_PMFS):
            total = sum(
                mixture_cell_probability([(j, d)]) for d in range(1, pmf.shape[1] + 1)
            )
            assert abs(total - 1.0) < 1e-12

    def test_joint_grid_sums_to_one(self):
        total = sum(
            mixture_cell_probability([(0, d1), (1, d2)])
            for d1 in (1, 2)
            for d2 in (1, 2, 3)
        )
        assert abs(total - 1.0) < 1e-12

    def test_variables_are_dependent(self):
        # The latent class induces association; the benchmark would be
        # trivial on an independent population.
        joint = mixture_cell_probability([(0, 1), (1, 1)])
        prod = mixture_cell_probability([(0, 1)]) * mixture_cell_probability([(1, 1)])
        assert joint > prod + 0.05

    def test_duplicate_variable_rejected(self):
        with pytest.raises(ValueError, match="distinct"):
            mixture_cell_probability([(0, 1), (0, 2)])

    def test_level_out_of_range(self):
        with pytest.raises(ValueError, match="out of range"):
            mixture_cell_probability([(0, 3)])
        with pytest.raises(ValueError, match="out of range"):
            mixture_cell_probability([(1, 0)])


class TestPopulation:
    def test_shape_and_levels(self):
        pop = mixture_population(n_rows=2000, seed=1)
        assert pop.n_rows == 2000
        assert pop.variables == SYNTHETIC_VARIABLES
        for j, v in enumerate(pop.variables):
            col = pop.cells[:, j]
            assert col.min() >= 1
            assert col.max() <= v.cardinality

    def test_seed_determinism(self):
        a = mixture_population(n_rows=500, seed=7)
        b = mixture_population(n_rows=500, seed=7)
        c = mixture_population(n_rows=500, seed=8)
        assert np.array_equal(a.cells, b.cells)
        assert not np.array_equal(a.cells, c.cells)

    def test_empirical_matches_exact(self):
        pop = mixture_population()  # default 100,000 rows, pinned seed
        emp_v1 = float((pop.cells[:, 0] == 1).mean())
        assert abs(emp_v1 - 0.5125) < 0.01
        emp_pair = float(((pop.cells[:, 0] == 1) & (pop.cells[:, 1] == 1)).mean())
        assert abs(emp_pair - 0.237375) < 0.01

    def test_n_rows_validation(self):
        with pytest.raises(ValueError, match="positive"):
            mixture_population(n_rows=0)
