import numpy as np
import pytest

from ordimpute.data import (
    MISSING_SENTINEL,
    ImputationResult,
    IncompleteDataset,
    OrdinalDataset,
    VariableSpec,
    as_incomplete,
    check_result_against,
    draw_sample,
    from_array,
    load_csv,
    load_dictionary,
    marginal_pmf,
    masked_copy,
    observed_pmf,
    save_csv,
    save_dictionary,
)

from conftest import make_dataset


class TestVariableSpec:
    def test_valid(self):
        s = VariableSpec("AGE", 5)
        assert s.name == "AGE" and s.cardinality == 5

    def test_cardinality_too_small(self):
        with pytest.raises(ValueError, match="cardinality"):
            VariableSpec("X", 1)

    def test_empty_name(self):
        with pytest.raises(ValueError):
            VariableSpec("", 3)


class TestOrdinalDataset:
    def test_basic(self, tiny):
        assert tiny.n_rows == 6
        assert tiny.n_vars == 2
        assert list(tiny.cardinalities) == [2, 3]
        assert tiny.column_index("B") == 1

    def test_level_out_of_range(self):
        with pytest.raises(ValueError, match="row 1.*'B'.*level 4"):
            make_dataset([[1, 2], [2, 4]], cardinalities=[2, 3], names=["A", "B"])

    def test_level_zero_rejected(self):
        with pytest.raises(ValueError, match="level 0"):
            make_dataset([[1, 0]], cardinalities=[2, 3])

    def test_non_integer_rejected(self):
        with pytest.raises(ValueError, match="integers"):
            OrdinalDataset((VariableSpec("A", 3),), np.array([[1.5]]))

    def test_immutability(self, tiny):
        with pytest.raises(ValueError):
            tiny.cells[0, 0] = 2

    def test_wrong_column_count(self):
        with pytest.raises(ValueError, match="columns"):
            OrdinalDataset((VariableSpec("A", 2),), np.ones((3, 2), dtype=int))

    def test_unknown_name(self, tiny):
        with pytest.raises(KeyError):
            tiny.column_index("Z")


class TestIncompleteDataset:
    def test_sentinel_enforced(self):
        specs = (VariableSpec("A", 2), VariableSpec("B", 3))
        cells = np.array([[1, 2], [2, 3]], dtype=np.int32)
        mask = np.array([[False, True], [False, False]])
        with pytest.raises(ValueError, match="sentinel"):
            IncompleteDataset(specs, cells, mask)

    def test_valid_and_fractions(self):
        specs = (VariableSpec("A", 2), VariableSpec("B", 3))
        cells = np.array([[1, 0], [2, 3], [0, 1], [1, 1]], dtype=np.int32)
        mask = np.array([[False, True], [False, False], [True, False], [False, False]])
        inc = IncompleteDataset(specs, cells, mask)
        assert inc.missing_fraction().tolist() == [0.25, 0.25]
        assert inc.complete_case_fraction() == 0.5

    def test_mask_must_be_boolean(self):
        specs = (VariableSpec("A", 2),)
        with pytest.raises(ValueError, match="boolean"):
            IncompleteDataset(specs, np.array([[1]]), np.array([[0]]))

    def test_shape_mismatch(self):
        specs = (VariableSpec("A", 2),)
        with pytest.raises(ValueError, match="shape"):
            IncompleteDataset(specs, np.array([[1], [2]]), np.zeros((3, 1), dtype=bool))

    def test_observed_out_of_range(self):
        specs = (VariableSpec("A", 2),)
        with pytest.raises(ValueError, match="level 3"):
            IncompleteDataset(specs, np.array([[3]]), np.zeros((1, 1), dtype=bool))


class TestMaskedCopy:
    def test_places_sentinel(self, tiny):
        mask = np.zeros((6, 2), dtype=bool)
        mask[0, 1] = True
        inc = masked_copy(tiny, mask)
        assert inc.cells[0, 1] == MISSING_SENTINEL
        assert inc.cells[0, 0] == tiny.cells[0, 0]

    def test_as_incomplete_roundtrip(self, tiny):
        inc = as_incomplete(tiny)
        assert not inc.mask.any()
        assert (inc.cells == tiny.cells).all()


class TestCsv:
    def test_roundtrip_complete(self, tiny, tmp_path):
        path = tmp_path / "d.csv"
        save_csv(tiny, path)
        back = load_csv(path, tiny.variables)
        assert (back.cells == tiny.cells).all()
        assert not back.mask.any()

    def test_roundtrip_with_missing(self, tiny, tmp_path):
        mask = np.zeros((6, 2), dtype=bool)
        mask[1, 0] = mask[4, 1] = True
        inc = masked_copy(tiny, mask)
        path = tmp_path / "d.csv"
        save_csv(inc, path)
        back = load_csv(path, tiny.variables)
        assert (back.mask == inc.mask).all()
        assert (back.cells == inc.cells).all()

    def test_na_token(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("A,B\n1,NA\n2,3\n", encoding="utf-8")
        specs = (VariableSpec("A", 2), VariableSpec("B", 3))
        inc = load_csv(path, specs)
        assert inc.mask[0, 1] and not inc.mask.all()

    def test_header_mismatch(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("A,C\n1,2\n", encoding="utf-8")
        specs = (VariableSpec("A", 2), VariableSpec("B", 3))
        with pytest.raises(ValueError, match="header"):
            load_csv(path, specs)

    def test_bad_value_reports_location(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("A,B\n1,2\nx,1\n", encoding="utf-8")
        specs = (VariableSpec("A", 2), VariableSpec("B", 3))
        with pytest.raises(ValueError, match=r"d\.csv:3.*'A'.*'x'"):
            load_csv(path, specs)

    def test_out_of_range_reports_location(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("A,B\n1,9\n", encoding="utf-8")
        specs = (VariableSpec("A", 2), VariableSpec("B", 3))
        with pytest.raises(ValueError, match=r"d\.csv:2.*'B'.*level 9"):
            load_csv(path, specs)

    def test_field_count(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("A,B\n1\n", encoding="utf-8")
        specs = (VariableSpec("A", 2), VariableSpec("B", 3))
        with pytest.raises(ValueError, match="fields"):
            load_csv(path, specs)


class TestDictionary:
    def test_roundtrip(self, tmp_path):
        specs = (VariableSpec("A", 2), VariableSpec("B", 19))
        path = tmp_path / "dict.csv"
        save_dictionary(specs, path)
        assert load_dictionary(path) == specs

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "dict.csv"
        path.write_text("A,2\nB\n", encoding="utf-8")
        with pytest.raises(ValueError, match="dict.csv:2"):
            load_dictionary(path)

    def test_duplicate_names(self, tmp_path):
        path = tmp_path / "dict.csv"
        path.write_text("A,2\nA,3\n", encoding="utf-8")
        with pytest.raises(ValueError, match="duplicate"):
            load_dictionary(path)


class TestDrawSample:
    def test_deterministic(self, tiny):
        a = draw_sample(tiny, 4, seed=7)
        b = draw_sample(tiny, 4, seed=7)
        assert (a.cells == b.cells).all()

    def test_seed_changes_sample(self):
        pop = make_dataset(np.arange(1, 201).reshape(-1, 1) % 5 + 1, cardinalities=[5])
        a = draw_sample(pop, 50, seed=1)
        b = draw_sample(pop, 50, seed=2)
        assert (a.cells != b.cells).any()

    def test_without_replacement_is_subset(self):
        rows = np.arange(1, 101).reshape(-1, 2)
        rows = rows % 4 + 1
        pop = make_dataset(rows, cardinalities=[4, 4])
        s = draw_sample(pop, 50, seed=3)
        assert s.n_rows == 50

    def test_marginals_close_to_population(self):
        rng = np.random.Generator(np.random.PCG64(0))
        cells = rng.integers(1, 5, size=(50000, 1))
        pop = make_dataset(cells, cardinalities=[4])
        s = draw_sample(pop, 20000, seed=11)
        assert np.abs(marginal_pmf(s, 0) - marginal_pmf(pop, 0)).max() < 0.02

    def test_bad_n(self, tiny):
        with pytest.raises(ValueError):
            draw_sample(tiny, 0, seed=1)
        with pytest.raises(ValueError):
            draw_sample(tiny, 7, seed=1)


class TestPmf:
    def test_marginal_pmf_matches_loop(self, tiny):
        pmf = marginal_pmf(tiny, "B")
        expect = np.array(
            [sum(tiny.cells[:, 1] == d) for d in (1, 2, 3)], dtype=float
        ) / tiny.n_rows
        assert np.allclose(pmf, expect)
        assert pmf.sum() == pytest.approx(1.0)

    def test_observed_pmf_ignores_masked(self, tiny):
        mask = np.zeros((6, 2), dtype=bool)
        mask[tiny.cells[:, 1] == 2, 1] = True
        inc = masked_copy(tiny, mask)
        pmf = observed_pmf(inc, 1)
        assert pmf[1] == 0.0
        assert pmf.sum() == pytest.approx(1.0)

    def test_observed_pmf_all_masked_uniform(self, tiny):
        mask = np.zeros((6, 2), dtype=bool)
        mask[:, 1] = True
        inc = masked_copy(tiny, mask)
        assert np.allclose(observed_pmf(inc, 1), 1.0 / 3.0)


class TestImputationResult:
    def test_observed_agreement_enforced(self, tiny):
        mask = np.zeros((6, 2), dtype=bool)
        mask[0, 0] = True
        inc = masked_copy(tiny, mask)
        altered = tiny.cells.copy()
        altered[1, 1] = 3  # observed cell changed
        bad = OrdinalDataset(tiny.variables, altered)
        res = ImputationResult(completed=(bad,), method="x", seed=0)
        with pytest.raises(ValueError, match="observed cell"):
            check_result_against(res, inc)

    def test_accepts_valid_completion(self, tiny):
        mask = np.zeros((6, 2), dtype=bool)
        mask[0, 0] = True
        inc = masked_copy(tiny, mask)
        filled = inc.cells.copy()
        filled[0, 0] = 2
        good = OrdinalDataset(tiny.variables, filled)
        res = ImputationResult(completed=(good, good), method="x", seed=0)
        check_result_against(res, inc)
        assert res.n_imputations == 2

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            ImputationResult(completed=(), method="x", seed=0)


class TestFromArray:
    def test_nan_becomes_mask(self):
        x = np.array([[1.0, np.nan], [2.0, 3.0]])
        inc = from_array(x, [2, 3], names=["A", "B"])
        assert inc.mask[0, 1] and inc.mask.sum() == 1
        assert inc.cells[1, 1] == 3

    def test_non_integer_rejected(self):
        with pytest.raises(ValueError):
            from_array(np.array([[1.5]]), [3])
