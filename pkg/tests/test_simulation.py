import math
import struct

import numpy as np
import pytest

from bmlab.errors import EmbeddingError, FormatError, InvalidParameterError
from bmlab.hermite import HermiteCombination
from bmlab.simulation import (
    CirculantSampler,
    Method,
    NoiseStream,
    PathBatch,
    iter_batches,
    simulate_causal,
    simulate_circulant,
)
from bmlab.spectral import CovarianceSequence, FGNModel, fgn_covariance, parse_model
from bmlab.stats import v_statistics
from bmlab.wold import CausalCoefficients, factorize


def lag_estimates(paths: np.ndarray, k: int) -> tuple[float, float]:
    """Batch estimate of E[X_t X_{t+k}] and its standard error from per-path averages."""
    per_path = np.mean(paths[:, : paths.shape[1] - k] * paths[:, k:], axis=1)
    return per_path.mean(), per_path.std(ddof=1) / math.sqrt(len(per_path))


@pytest.fixture(scope="module")
def fgn07_rho():
    return FGNModel(0.7).covariance(4096)


class TestNoise:
    def test_reproducible_and_distinct(self):
        a = NoiseStream(5, 3).normals(16)
        np.testing.assert_array_equal(a, NoiseStream(5, 3).normals(16))
        assert not np.array_equal(a, NoiseStream(5, 4).normals(16))
        assert not np.array_equal(a, NoiseStream(6, 3).normals(16))

    def test_streams_uncorrelated(self):
        x = np.array([NoiseStream(1, i).normals(4000) for i in range(50)])
        c = np.corrcoef(x)
        off = c[~np.eye(50, dtype=bool)]
        assert np.max(np.abs(off)) < 5 / math.sqrt(4000)


class TestCirculant:
    def test_white(self):
        rho = CovarianceSequence(np.eye(1, 65)[0])
        batch = simulate_circulant(rho, 64, 500, seed=1)
        est, _ = lag_estimates(batch.paths, 1)
        assert abs(est) < 4 / math.sqrt(64 * 500)

    def test_fgn_lag_one(self, fgn07_rho):
        batch = simulate_circulant(fgn07_rho, 1 << 12, 2000, seed=2)
        est, se = lag_estimates(batch.paths, 1)
        assert abs(est - 0.319508) < 4 * se

    def test_determinism(self, fgn07_rho):
        a = simulate_circulant(fgn07_rho, 300, 40, seed=9)
        b = simulate_circulant(fgn07_rho, 300, 40, seed=9)
        np.testing.assert_array_equal(a.paths, b.paths)
        c = simulate_circulant(fgn07_rho, 300, 40, seed=10)
        assert not np.array_equal(a.paths, c.paths)

    def test_chunking_and_workers_do_not_matter(self, fgn07_rho):
        ref = simulate_circulant(fgn07_rho, 128, 37, seed=3).paths
        np.testing.assert_array_equal(simulate_circulant(fgn07_rho, 128, 37, seed=3, chunk=5, workers=3).paths, ref)
        parts = [b.paths for b in iter_batches(Method.CIRCULANT, fgn07_rho, 128, 37, seed=3, chunk=8, workers=2)]
        np.testing.assert_array_equal(np.concatenate(parts), ref)

    def test_first_stream_offsets(self, fgn07_rho):
        full = simulate_circulant(fgn07_rho, 64, 10, seed=4).paths
        tail = simulate_circulant(fgn07_rho, 64, 4, seed=4, first_stream=6).paths
        np.testing.assert_array_equal(full[6:], tail)

    def test_marginal_moments(self, fgn07_rho):
        M = 20_000
        x0 = simulate_circulant(fgn07_rho, 16, M, seed=5).paths[:, 0]
        assert abs(x0.mean()) < 4 / math.sqrt(M)
        assert abs(x0.var(ddof=1) - 1) < 4 * math.sqrt(2 / M)
        kurt = np.mean(x0 ** 4) / np.mean(x0 ** 2) ** 2
        assert abs(kurt - 3) < 8 / math.sqrt(M)

    def test_embedding_failure(self):
        rho = CovarianceSequence(np.array([1.0, 0.9, -0.9]))
        with pytest.raises(EmbeddingError, match="double"):
            simulate_circulant(rho, 3, 10, seed=0)

    def test_clipping_reported(self, fgn07_rho):
        batch = simulate_circulant(fgn07_rho, 256, 4, seed=0)
        assert batch.provenance["clipped_mass"] >= 0.0
        assert batch.provenance["embedding_size"] == 512

    def test_preconditions(self, fgn07_rho):
        with pytest.raises(InvalidParameterError):
            simulate_circulant(fgn07_rho, 1, 4, seed=0)
        with pytest.raises(InvalidParameterError):
            simulate_circulant(fgn07_rho, 8000, 4, seed=0)
        with pytest.raises(InvalidParameterError):
            simulate_circulant(fgn07_rho, 8, 0, seed=0)
        with pytest.raises(InvalidParameterError):
            simulate_circulant(fgn07_rho, 8, 1, seed=-1)

    def test_exact_covariance_of_map(self, fgn07_rho):
        # the linear noise-to-path map reproduces the Toeplitz covariance exactly
        n = 32
        s = CirculantSampler(fgn07_rho, n)
        A = s.transform(np.eye(s.size))  # row i = image of basis vector i
        cov = A.T @ A
        idx = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
        np.testing.assert_allclose(cov, fgn_covariance(0.7, idx), atol=1e-12)


class TestCausal:
    def test_identity_filter(self):
        psi = CausalCoefficients(np.array([1.0]), 0.0)
        batch = simulate_causal(psi, 50, 3, seed=8, burn_in=7)
        for i in range(3):
            np.testing.assert_array_equal(batch.paths[i], NoiseStream(8, i).normals(57)[7:])

    def test_ma1(self):
        psi = factorize(parse_model("ma1:theta=0.5"), 16)
        batch = simulate_causal(psi, 1024, 2000, seed=11)
        est1, se1 = lag_estimates(batch.paths, 1)
        est2, se2 = lag_estimates(batch.paths, 2)
        assert abs(est1 - 0.4) < 4 * se1
        assert abs(est2) < 4 * se2

    def test_fgn(self):
        psi = factorize(FGNModel(0.7), 4096)
        batch = simulate_causal(psi, 1 << 11, 2000, seed=12)
        for k in range(9):
            est, se = lag_estimates(batch.paths, k)
            assert abs(est - fgn_covariance(0.7, k)) < 4 * se + psi.residual_mass

    def test_burn_in_guard(self):
        psi = factorize(parse_model("ma1:theta=0.5"), 16)
        with pytest.raises(InvalidParameterError):
            simulate_causal(psi, 10, 2, seed=0, burn_in=15)
        assert simulate_causal(psi, 10, 2, seed=0).provenance["burn_in"] == 16

    def test_chunk_invariance(self):
        psi = factorize(parse_model("arfima:d=0.2"), 2048)
        ref = simulate_causal(psi, 100, 13, seed=1).paths
        np.testing.assert_array_equal(simulate_causal(psi, 100, 13, seed=1, chunk=4, workers=2).paths, ref)
        parts = [b.paths for b in iter_batches(Method.CAUSAL_MA, psi, 100, 13, seed=1, chunk=5)]
        np.testing.assert_array_equal(np.concatenate(parts), ref)


class TestAgreement:
    @pytest.mark.parametrize("spec,L", [("fgn:H=0.6", 4096), ("arfima:d=0,ar=1/-0.5,ma=1/0.4", 256)])
    def test_h2_functional_means(self, spec, L):
        model = parse_model(spec)
        n, M = 256, 4000
        f = HermiteCombination({2: 1.0})
        a = v_statistics(simulate_circulant(model.covariance(n), n, M, seed=21).paths, f)
        b = v_statistics(simulate_causal(factorize(model, L), n, M, seed=22).paths, f)
        se = math.sqrt(a.var(ddof=1) / M + b.var(ddof=1) / M)
        assert abs(a.mean() - b.mean()) < 5 * se


class TestFile:
    def test_round_trip(self, tmp_path, fgn07_rho):
        batch = simulate_circulant(fgn07_rho, 33, 5, seed=2 ** 63 + 5)
        path = tmp_path / "b.bmpb"
        batch.save(path)
        raw = path.read_bytes()
        assert raw[:4] == b"BMPB"
        magic, version, n, M, seed, method = struct.unpack_from("<4sIQQQB", raw)
        assert (version, n, M, seed, method) == (1, 33, 5, 2 ** 63 + 5, 0)
        assert len(raw) == struct.calcsize("<4sIQQQB") + 8 * 33 * 5
        back = PathBatch.load(path)
        np.testing.assert_array_equal(back.paths, batch.paths)
        assert back.method is Method.CIRCULANT and back.seed == batch.seed

    def test_corrupt(self, tmp_path, fgn07_rho):
        path = tmp_path / "b.bmpb"
        simulate_circulant(fgn07_rho, 8, 2, seed=0).save(path)
        raw = path.read_bytes()
        path.write_bytes(b"XXXX" + raw[4:])
        with pytest.raises(FormatError):
            PathBatch.load(path)
        path.write_bytes(raw[:-8])
        with pytest.raises(FormatError):
            PathBatch.load(path)
        path.write_bytes(raw[:10])
        with pytest.raises(FormatError):
            PathBatch.load(path)
