import numpy as np
import pytest

from lasir import SemConfig, SimConfig, param_count, select_k, simulate_cube
from lasir.selection import BicRecord, _choose


class TestParamCount:
    def test_reported_example(self):
        # 2730 + 1365 + 10010 + 4 + 455
        assert param_count(3, 455, 1, 1, 21) == 14564

    def test_single_group_instantiation(self):
        L, p, q, S = 20, 2, 3, 4
        assert param_count(1, L, p, q, S) == L * (p + 1) + L + (S + q) * L + L

    def test_affine_increasing_in_groups(self):
        L, p, q, S = 10, 1, 2, 3
        counts = [param_count(K, L, p, q, S) for K in range(1, 6)]
        steps = np.diff(counts)
        assert np.all(steps == steps[0])
        assert steps[0] > 0


class TestChoose:
    def test_minimizer_wins(self):
        records = [BicRecord(1, 10, -5.0, 100.0), BicRecord(2, 20, -4.0, 90.0),
                   BicRecord(3, 30, -3.0, 95.0)]
        assert _choose(records).n_groups == 2

    def test_tie_breaks_toward_fewer_groups(self):
        records = [BicRecord(3, 30, -3.0, 90.0), BicRecord(2, 20, -4.0, 90.0)]
        assert _choose(records).n_groups == 2


class TestSelectK:
    def test_single_candidate(self):
        cfg = SimConfig(dims=(5, 5, 5), n=60, n_groups=1, sigma=1.0, seed=0, n_sites=3)
        dataset, truth, lattice, basis = simulate_cube(cfg)
        best, records, fits = select_k(dataset, basis, [2], SemConfig(restarts=2, seed=1))
        assert best == 2
        assert len(records) == 1
        assert 2 in fits

    def test_bic_recomputable_from_record(self):
        cfg = SimConfig(dims=(5, 5, 5), n=60, n_groups=1, sigma=1.0, seed=0, n_sites=3)
        dataset, truth, lattice, basis = simulate_cube(cfg)
        _, records, _ = select_k(dataset, basis, [1, 2], SemConfig(restarts=2, seed=1))
        for rec in records:
            expect = rec.n_params * np.log(dataset.n * basis.L) - 2.0 * rec.q
            assert rec.bic == pytest.approx(expect, rel=1e-12)

    def test_prefers_single_group_on_homogeneous_data(self):
        cfg = SimConfig(dims=(6, 6, 6), n=150, n_groups=1, sigma=1.0, seed=5)
        dataset, truth, lattice, basis = simulate_cube(cfg)
        best, records, _ = select_k(dataset, basis, [1, 2], SemConfig(restarts=3, seed=2))
        assert best == 1

    def test_recovers_three_groups(self):
        cfg = SimConfig(dims=(8, 8, 8), n=300, n_groups=3, sigma=1.0, seed=17)
        dataset, truth, lattice, basis = simulate_cube(cfg)
        best, records, _ = select_k(dataset, basis, [1, 2, 3, 4],
                                    SemConfig(restarts=3, seed=6))
        assert best == 3

    def test_empty_candidates(self):
        cfg = SimConfig(dims=(5, 5, 5), n=50, n_groups=1, sigma=1.0, seed=0, n_sites=2)
        dataset, truth, lattice, basis = simulate_cube(cfg)
        with pytest.raises(ValueError, match="no candidate"):
            select_k(dataset, basis, [], SemConfig())
