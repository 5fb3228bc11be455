import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import norm

import ssvi
from ssvi.dictionary import (BasisId, DictionaryDegenerateError,
                             cell_down_mean, cell_up_mean, ramp_mean)


class TestSizeAndOrdering:
    def test_size_formula_small(self):
        # d=2, R=1, delta=1: N=2, p = 2 + 2*4 + 3*2 = 16
        spec = ssvi.build_dictionary(2, 1.0, 1.0)
        assert spec.N == 2
        assert spec.p == 16

    def test_size_formula_general(self):
        for d, R, delta in ((3, 2.0, 0.5), (4, 1.0, 0.5), (2, 4.0, 0.25)):
            spec = ssvi.build_dictionary(d, R, delta)
            N = int(round(2 * R / delta))
            assert spec.p == N + 2 * (d - 1) * N * N + 3 * (d - 1) * N

    def test_index_id_roundtrip(self):
        spec = ssvi.build_dictionary(3, 1.0, 0.5)
        for idx in range(spec.p):
            bid = spec.id_of(idx)
            assert spec.index_of(bid) == idx

    def test_ordering_version_exposed(self):
        spec = ssvi.build_dictionary(2, 1.0, 1.0)
        assert spec.ordering_version == "class-major-v1"
        assert spec.metadata()["ordering_version"] == "class-major-v1"

    def test_rejects_bad_geometry(self):
        with pytest.raises(ValueError):
            ssvi.build_dictionary(1, 1.0, 1.0)
        with pytest.raises(ValueError):
            ssvi.build_dictionary(2, 1.0, 0.3)


class TestCentering:
    def test_ramp_mean_closed_form(self):
        for b, delta in ((-1.0, 1.0), (0.5, 0.5), (2.0, 0.25)):
            num = quad(lambda x: ssvi.ramp((x - b) / delta) * norm.pdf(x),
                       -12, 12, limit=200)[0]
            assert np.isclose(ramp_mean(b, delta), num, atol=1e-9)

    def test_cell_means_closed_form(self):
        for b, delta in ((-0.5, 0.5), (1.0, 1.0)):
            up = quad(lambda x: ((x - b) / delta) * norm.pdf(x),
                      b, b + delta)[0]
            down = quad(lambda x: (1 - (x - b) / delta) * norm.pdf(x),
                        b, b + delta)[0]
            assert np.isclose(cell_up_mean(b, delta), up, atol=1e-12)
            assert np.isclose(cell_down_mean(b, delta), down, atol=1e-12)

    def test_centering_makes_bases_mean_zero(self):
        spec = ssvi.build_dictionary(2, 1.0, 1.0)
        rng = np.random.default_rng(0)
        X = rng.standard_normal((500000, 2))
        for idx in range(spec.p):
            bid = spec.id_of(idx)
            vals = np.array([spec.basis_eval(bid, x)[1] for x in X[:50000]])
            assert abs(vals.mean()) < 5 * vals.std() / np.sqrt(50000) + 1e-4


class TestGram:
    def test_positive_definite(self, coarse_spec, coarse_gram):
        eigs = np.linalg.eigvalsh(coarse_gram.Q)
        assert eigs.min() > 0

    def test_matches_monte_carlo(self, coarse_spec, coarse_gram):
        # same-coordinate blocks against a brute-force MC inner product
        rng = np.random.default_rng(1)
        X = rng.standard_normal((300000, 2))
        vals = np.empty((coarse_spec.p, len(X)))
        coord = np.empty(coarse_spec.p, dtype=int)
        for idx in range(coarse_spec.p):
            bid = coarse_spec.id_of(idx)
            coord[idx] = 0 if bid.cls == "M0" else bid.i
            t = np.clip(((X[:, 0] if bid.cls in ("M0", "M5")
                          else X[:, bid.i]) - bid.b) / coarse_spec.delta,
                        0, 1)
            if bid.cls in ("M1", "M2"):
                u = (X[:, 0] - bid.bprime) / coarse_spec.delta
                gate = (u >= 0) & (u < 1)
                t = t * np.where(bid.cls == "M1", np.clip(u, 0, 1),
                                 1 - np.clip(u, 0, 1)) * gate
            elif bid.cls == "M3":
                t = t * (X[:, 0] >= coarse_spec.R)
            elif bid.cls == "M4":
                t = t * (X[:, 0] < -coarse_spec.R)
            vals[idx] = t - coarse_spec.centering[idx]
        Qmc = vals @ vals.T / len(X)
        same = coord[:, None] == coord[None, :]
        assert np.abs((Qmc - coarse_gram.Q)[same]).max() < 5e-3

    def test_off_coordinate_blocks_zero(self, coarse_spec, coarse_gram):
        diff = coarse_spec.coord[:, None] != coarse_spec.coord[None, :]
        assert np.abs(coarse_gram.Q[diff]).max() == 0.0

    def test_solve_and_inverse(self, coarse_gram):
        rng = np.random.default_rng(2)
        x = rng.normal(size=coarse_gram.spec.p)
        assert np.allclose(coarse_gram.Q @ coarse_gram.solve(x), x,
                           atol=1e-10)
        assert np.allclose(coarse_gram.inverse @ coarse_gram.Q,
                           np.eye(coarse_gram.spec.p), atol=1e-8)

    def test_inv_norm_matches_dense(self, coarse_gram):
        dense = 1.0 / np.linalg.eigvalsh(coarse_gram.Q).min()
        assert np.isclose(coarse_gram.inv_norm, dense, rtol=1e-4)

    def test_cache_roundtrip(self, tmp_path, coarse_spec, coarse_gram):
        g1 = ssvi.gram_matrix(coarse_spec, cache_dir=str(tmp_path))
        files = list(tmp_path.iterdir())
        assert len(files) == 1
        g2 = ssvi.gram_matrix(coarse_spec, cache_dir=str(tmp_path))
        assert np.array_equal(g1.Q, g2.Q)
        assert np.array_equal(g1.Q, coarse_gram.Q)

    def test_binary_format_magic(self, tmp_path, coarse_gram):
        path = tmp_path / "g.bin"
        ssvi.save_gram_bytes(path, coarse_gram.Q)
        assert path.read_bytes()[:8] == b"SSVIGRAM"
        Q = ssvi.load_gram_bytes(path, coarse_gram.spec.p)
        assert np.array_equal(Q, coarse_gram.Q)

    def test_corrupt_file_rejected(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOTAGRAM" + b"\x00" * 24)
        with pytest.raises(ValueError):
            ssvi.load_gram_bytes(path)


class TestJacobianSpectralBound:
    def test_cone_differential_bound(self):
        # unit-norm nonnegative coefficients: ||DT'(x)||_2 <= 3/delta
        spec = ssvi.build_dictionary(3, 1.0, 0.5)
        rng = np.random.default_rng(3)
        lam = rng.uniform(0.0, 1.0, spec.p)
        lam[~spec.constrained] = 0.0
        lam /= np.linalg.norm(lam)
        X = rng.normal(0.0, 1.5, size=(1000, 3))
        bound = 3.0 / spec.delta
        for x in X:
            M = np.zeros((3, 3))
            for idx in np.flatnonzero(lam):
                bid = spec.id_of(idx)
                c = 0 if bid.cls == "M0" else bid.i
                dd, dr = spec.basis_partials(bid, x)
                M[c, c] += lam[idx] * dd
                if c != 0:
                    M[c, 0] += lam[idx] * dr
            assert np.linalg.norm(M, 2) <= bound + 1e-9
