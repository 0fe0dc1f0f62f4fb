import numpy as np
import pytest

from lasir import SemConfig, SimConfig, fit_sem, simulate_cube
from lasir.bundles import (load_basis, load_fit, load_truth, save_basis,
                           save_fit, save_truth)
from lasir.io import config_hash, read_kv, read_matrix_bundle, write_kv, write_matrix_bundle


class TestKeyValue:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "conf"
        write_kv(path, {"alpha": "0.05", "dims": "5 5 5"})
        assert dict(read_kv(path)) == {"alpha": "0.05", "dims": "5 5 5"}

    def test_comments_and_blanks_skipped(self, tmp_path):
        path = tmp_path / "conf"
        path.write_text("# comment\n\nkey: value\n")
        assert dict(read_kv(path)) == {"key": "value"}

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "conf"
        path.write_text("no separator here\n")
        with pytest.raises(ValueError, match="malformed header line 1"):
            read_kv(path)

    def test_duplicate_key(self, tmp_path):
        path = tmp_path / "conf"
        path.write_text("a: 1\na: 2\n")
        with pytest.raises(ValueError, match="duplicate key"):
            read_kv(path)

    def test_config_hash_stable_under_ordering(self):
        assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})
        assert config_hash({"a": 1}) != config_hash({"a": 2})


class TestMatrixBundle:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        mats = {"one": rng.standard_normal((4, 3)), "vec": rng.standard_normal(5)}
        write_matrix_bundle(tmp_path / "b", mats, meta={"kind": "test", "n": 7})
        back, meta = read_matrix_bundle(tmp_path / "b")
        assert np.array_equal(back["one"], mats["one"])
        assert np.array_equal(back["vec"].ravel(), mats["vec"])
        assert meta == {"kind": "test", "n": "7"}

    def test_truncated_payload_detected(self, tmp_path):
        write_matrix_bundle(tmp_path / "b", {"m": np.ones((3, 3))})
        data = (tmp_path / "b.dat").read_bytes()
        (tmp_path / "b.dat").write_bytes(data[:-16])
        with pytest.raises(ValueError, match="past payload end"):
            read_matrix_bundle(tmp_path / "b")

    def test_wrong_format_line(self, tmp_path):
        write_kv(tmp_path / "b.hdr", {"format": "something-else"})
        with pytest.raises(ValueError, match="expected format"):
            read_matrix_bundle(tmp_path / "b")


@pytest.fixture(scope="module")
def sim():
    cfg = SimConfig(dims=(5, 5, 5), n=60, n_groups=2, sigma=1.0, seed=2, n_sites=3)
    return simulate_cube(cfg)


class TestBundles:
    def test_basis_round_trip(self, tmp_path, sim):
        _, _, lattice, basis = sim
        save_basis(basis, tmp_path / "basis")
        back = load_basis(tmp_path / "basis")
        assert np.array_equal(back.psi, basis.psi)
        assert np.array_equal(back.eigvals, basis.eigvals)
        assert back.h == basis.h
        assert back.params.b == basis.params.b

    def test_fit_round_trip(self, tmp_path, sim):
        dataset, truth, lattice, basis = sim
        fit = fit_sem(dataset, basis, 2, SemConfig(restarts=2, seed=4))
        save_fit(fit, tmp_path / "fit")
        back = load_fit(tmp_path / "fit")
        assert np.array_equal(back.labels, fit.labels)
        assert np.array_equal(back.params.theta_alpha, fit.params.theta_alpha)
        assert np.array_equal(back.params.w, fit.params.w)
        assert np.array_equal(back.q_trace, fit.q_trace)
        assert back.converged == fit.converged
        assert back.method == fit.method

    def test_truth_round_trip(self, tmp_path, sim):
        dataset, truth, lattice, basis = sim
        save_truth(truth, tmp_path / "truth")
        back = load_truth(tmp_path / "truth")
        assert np.array_equal(back.labels, truth.labels)
        assert np.array_equal(back.alpha, truth.alpha)
        assert np.array_equal(back.gating, truth.gating)

    def test_kind_checked(self, tmp_path, sim):
        dataset, truth, lattice, basis = sim
        save_truth(truth, tmp_path / "truth")
        with pytest.raises(ValueError, match="not a fit bundle"):
            load_fit(tmp_path / "truth")
