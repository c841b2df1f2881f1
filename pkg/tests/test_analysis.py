import numpy as np
import pytest

from t4v.analysis import (
    convergence_curves,
    correlation_map,
    epochs_to_reach,
    export_map,
    read_map_csv,
)
from t4v.classifiers import build_random_orthogonal, build_textual
from t4v.datastore import SyntheticSpec, generate_synthetic
from t4v.errors import AlignmentError, DegenerateRowError
from t4v.numkit import RngState
from t4v.training import EpochRecord, RunLog


class TestCorrelationMap:
    def test_orthogonal_gives_identity(self):
        W = build_random_orthogonal(16, 8, RngState(0))
        m = correlation_map(W)
        np.testing.assert_allclose(m.matrix, np.eye(8), atol=1e-10)

    def test_duplicate_rows_give_unit_offdiagonal(self):
        rows = np.array([[1.0, 2.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 1.0]])
        W = build_textual(rows, list("abc"))
        m = correlation_map(W)
        assert abs(m.matrix[0, 1] - 1.0) < 1e-12

    def test_synthetic_block_structure(self):
        spec = SyntheticSpec(classes=6, groups=[3, 3], rho_in=0.6, rho_out=0.1,
                             samples_per_class=2, noise_std=0.1, frames=2, dim=12, seed=1)
        _, _, protos = generate_synthetic(spec)
        m = correlation_map(build_textual(protos, [f"c{i}" for i in range(6)]))
        for i in range(6):
            for j in range(6):
                expect = 1.0 if i == j else (0.6 if (i < 3) == (j < 3) else 0.1)
                assert abs(m.matrix[i, j] - expect) < 0.02

    def test_unit_diagonal_always(self):
        W = build_textual(RngState(2).generator().standard_normal((5, 9)), list("abcde"))
        m = correlation_map(W)
        np.testing.assert_allclose(np.diag(m.matrix), 1.0, atol=1e-12)
        np.testing.assert_allclose(m.matrix, m.matrix.T, atol=1e-12)


class TestExportMap:
    def test_identity_extremes(self, tmp_path):
        W = build_random_orthogonal(8, 4, RngState(1))
        m = correlation_map(W)
        export_map(m, 0.0, 1.0, tmp_path / "m.csv", tmp_path / "m.ppm")
        raw = (tmp_path / "m.ppm").read_bytes()
        assert raw.startswith(b"P6\n4 4\n255\n")
        pixels = np.frombuffer(raw[raw.index(b"255\n") + 4 :], dtype=np.uint8).reshape(4, 4, 3)
        # diagonal at ramp top (red), off-diagonal near the bottom (blue-ish)
        np.testing.assert_array_equal(pixels[0, 0], [255, 0, 0])
        assert pixels[0, 1, 2] == 255

    def test_constant_map_uniform_image(self, tmp_path):
        rows = np.tile(np.array([1.0, 0.0]), (3, 1))
        m = correlation_map(build_textual(rows, list("abc")))
        export_map(m, 0.0, 1.0, tmp_path / "m.csv", tmp_path / "m.ppm")
        raw = (tmp_path / "m.ppm").read_bytes()
        pixels = np.frombuffer(raw[raw.index(b"255\n") + 4 :], dtype=np.uint8).reshape(-1, 3)
        assert (pixels == pixels[0]).all()

    def test_csv_round_trip_exact(self, tmp_path):
        W = build_textual(RngState(3).generator().standard_normal((4, 7)), list("abcd"))
        m = correlation_map(W)
        export_map(m, -1.0, 1.0, tmp_path / "m.csv", tmp_path / "m.ppm")
        names, values = read_map_csv(tmp_path / "m.csv")
        assert names == m.class_names
        np.testing.assert_array_equal(values, m.matrix)

    def test_clipping_idempotent(self, tmp_path):
        W = build_textual(RngState(4).generator().standard_normal((4, 7)), list("abcd"))
        m = correlation_map(W)
        export_map(m, 0.0, 0.5, tmp_path / "a.csv", tmp_path / "a.ppm")
        clipped = type(m)(m.class_names, np.clip(m.matrix, 0.0, 0.5), m.source)
        export_map(clipped, 0.0, 0.5, tmp_path / "b.csv", tmp_path / "b.ppm")
        assert (tmp_path / "a.ppm").read_bytes() == (tmp_path / "b.ppm").read_bytes()

    def test_zero_row_rejected(self):
        with pytest.raises(DegenerateRowError):
            correlation_map(build_textual(np.eye(3), list("abc")).with_weights(
                np.array([[1.0, 0, 0], [0, 0, 0], [0, 0, 1.0]])
            ))


def fake_log(losses):
    log = RunLog(config={})
    for i, loss in enumerate(losses):
        log.epochs.append(EpochRecord(i, loss, 1e-3, 0.0))
    return log


class TestConvergenceCurves:
    def test_single_log(self, tmp_path):
        convergence_curves([fake_log([2.0, 1.0, 0.5])], tmp_path / "c.csv")
        lines = (tmp_path / "c.csv").read_text().strip().splitlines()
        assert lines[0] == "epoch,run_0"
        assert len(lines) == 4

    def test_identical_logs_identical_columns(self, tmp_path):
        logs = [fake_log([2.0, 1.0]), fake_log([2.0, 1.0])]
        convergence_curves(logs, tmp_path / "c.csv", names=["a", "b"])
        for line in (tmp_path / "c.csv").read_text().strip().splitlines()[1:]:
            _, a, b = line.split(",")
            assert a == b

    def test_epoch_mismatch_rejected(self, tmp_path):
        with pytest.raises(AlignmentError):
            convergence_curves([fake_log([1.0]), fake_log([1.0, 0.5])], tmp_path / "c.csv")

    def test_epochs_to_reach(self):
        log = fake_log([2.0, 0.9, 0.4, 0.2])
        assert epochs_to_reach(log, 0.5) == 2
        assert epochs_to_reach(log, 0.1) == float("inf")
