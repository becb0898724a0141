import numpy as np
import pytest

from sfvrom.config import ArtifactIOError, ConfigurationError, NumericalError
from sfvrom.models import Euler
from sfvrom.models.physics import primitive_to_conserved
from sfvrom.stats import (
    FieldStats,
    convergence_order,
    error_ratio,
    field_stats,
    mean,
    primitive_stats,
    read_matrix,
    read_stats_csv,
    relative_l1,
    stats_means,
    std,
    write_csv,
    write_matrix,
    write_slice_csv,
)


class TestMoments:
    def test_two_cell_example(self):
        U = np.array([1.0, 3.0]).reshape(1, 2, 1)
        weights = np.array([0.5, 0.5])
        np.testing.assert_allclose(mean(U, weights), [[2.0]])
        np.testing.assert_allclose(std(U, weights), [[1.0]])

    def test_constant_field_has_zero_std(self):
        U = np.full((4, 5, 2), 0.3)
        np.testing.assert_array_equal(std(U, np.full(5, 0.2)), 0.0)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(0)
        U = rng.normal(size=(3, 6, 2))
        weights = rng.uniform(size=6)
        weights /= weights.sum()
        order = rng.permutation(6)
        np.testing.assert_allclose(mean(U[:, order], weights[order]), mean(U, weights), rtol=0, atol=1e-14)
        np.testing.assert_allclose(std(U[:, order], weights[order]), std(U, weights), rtol=0, atol=1e-14)

    def test_inconsistent_weights(self):
        U = np.array([1.0, 3.0]).reshape(1, 2, 1)
        with pytest.raises(NumericalError):
            std(U, np.array([1.0, 1.0]) * 2)

    def test_primitive_stats(self):
        law = Euler()
        U = primitive_to_conserved(np.array([[[1.0, 0.5, 1.0], [2.0, 0.5, 3.0]]]))
        stats = primitive_stats(U, np.array([0.5, 0.5]), [0.5], law)
        assert stats.names == ("u", "p")
        np.testing.assert_allclose(stats.mean, [[0.5, 2.0]], rtol=1e-14)
        np.testing.assert_allclose(stats.std, [[0.0, 1.0]], atol=1e-7)


class TestErrors:
    def test_relative_l1(self):
        a = np.array([[1.0], [2.0]])
        b = np.array([[1.0], [4.0]])
        report = relative_l1(a, b, [0.5, 0.5], ["u"])
        assert report.per_component["u"] == pytest.approx(2.0 / 5.0)
        assert report.aggregate == pytest.approx(2.0 / 5.0)

    def test_identical_fields(self):
        a = np.random.default_rng(1).uniform(1, 2, size=(8, 3))
        assert relative_l1(a, a, np.full(8, 0.125)).aggregate == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ConfigurationError):
            relative_l1(np.ones((3, 1)), np.ones((4, 1)), np.ones(3))

    def test_zero_reference(self):
        with pytest.raises(NumericalError):
            relative_l1(np.ones((3, 1)), np.zeros((3, 1)), np.ones(3))

    def test_convergence_order(self):
        assert convergence_order(4e-2, 1e-2) == pytest.approx(2.0)
        assert convergence_order(1e-2, 1e-2) == 0.0
        assert convergence_order(0.0, 1e-2) is None
        assert error_ratio(3e-2, 1e-2) == pytest.approx(3.0)


class TestMatrixFiles:
    def test_round_trip_is_bit_exact(self, tmp_path):
        matrix = np.random.default_rng(2).normal(size=(5, 3))
        matrix[1, 2] = np.nan
        matrix[4, 0] = -0.0
        write_matrix(tmp_path / "m.sfvm", matrix)
        back = read_matrix(tmp_path / "m.sfvm")
        np.testing.assert_array_equal(back.view(np.uint64), matrix.view(np.uint64))

    def test_header_layout(self, tmp_path):
        write_matrix(tmp_path / "m.sfvm", np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]))
        raw = (tmp_path / "m.sfvm").read_bytes()
        assert raw[:8] == b"SFVM0001"
        assert np.frombuffer(raw[8:24], dtype="<u8").tolist() == [3, 2]
        np.testing.assert_array_equal(np.frombuffer(raw[24:], dtype="<f8"), [1, 3, 5, 2, 4, 6])

    def test_bad_files(self, tmp_path):
        with pytest.raises(ArtifactIOError):
            read_matrix(tmp_path / "missing.sfvm")
        (tmp_path / "bad.sfvm").write_bytes(b"NOTAMATRIX" + bytes(20))
        with pytest.raises(ArtifactIOError):
            read_matrix(tmp_path / "bad.sfvm")
        write_matrix(tmp_path / "short.sfvm", np.ones((2, 2)))
        raw = (tmp_path / "short.sfvm").read_bytes()
        (tmp_path / "short.sfvm").write_bytes(raw[:-8])
        with pytest.raises(ArtifactIOError):
            read_matrix(tmp_path / "short.sfvm")

    def test_empty_path(self):
        with pytest.raises(ArtifactIOError):
            write_matrix("", np.ones((1, 1)))


class TestCsv:
    def test_euler_header(self, tmp_path):
        names = ("rho", "rhou", "E")
        stats = FieldStats(np.array([0.25, 0.75]), np.ones((2, 3)), np.zeros((2, 3)), names)
        extra = FieldStats(stats.x, np.ones((2, 2)), np.zeros((2, 2)), ("u", "p"))
        write_csv(tmp_path / "stats.csv", stats, extra)
        header, table = read_stats_csv(tmp_path / "stats.csv")
        assert header == [
            "x", "mean_rho", "mean_rhou", "mean_E", "mean_u", "mean_p",
            "std_rho", "std_rhou", "std_E", "std_u", "std_p",
        ]
        assert table.shape == (2, 11)

    def test_single_cell_file_has_two_lines(self, tmp_path):
        stats = field_stats(np.array([[[2.0]]]), np.array([1.0]), [0.5], ["u"])
        write_csv(tmp_path / "one.csv", stats)
        lines = (tmp_path / "one.csv").read_text().splitlines()
        assert lines == ["x,mean_u,std_u", "0.5,2,0"]

    def test_values_round_trip(self, tmp_path):
        x = np.linspace(0.05, 0.95, 10)
        means = np.random.default_rng(3).normal(size=(10, 1))
        write_csv(tmp_path / "s.csv", FieldStats(x, means, np.abs(means), ("u",)))
        xs, read = stats_means(tmp_path / "s.csv", ["u"])
        np.testing.assert_array_equal(xs, x)
        np.testing.assert_array_equal(read, means)
        with pytest.raises(ArtifactIOError):
            stats_means(tmp_path / "s.csv", ["rho"])

    def test_slice_file(self, tmp_path):
        write_slice_csv(tmp_path / "slice.csv", [0.25, 0.75], [0.5, 0.1], np.array([[1.0], [2.0]]), ["u"])
        lines = (tmp_path / "slice.csv").read_text().splitlines()
        assert lines[0] == "x,y1,y2,u"
        assert lines[2] == "0.75,0.5,0.10000000000000001,2"
