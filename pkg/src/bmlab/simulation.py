"""Seeded batches of stationary Gaussian paths.

Every path ``i`` of a batch draws its white noise from its own stream
``(seed, first_stream + i)``, so a batch is reproducible bit for bit no
matter how it is chunked or how many worker threads produce it.
"""
from __future__ import annotations

import enum
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np
from scipy import signal

from .errors import EmbeddingError, FormatError, InvalidParameterError
from .spectral import CovarianceSequence
from .wold import CausalCoefficients

EIGEN_TOL = 1e-8
MAGIC = b"BMPB"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIQQQB")
DEFAULT_CHUNK = 256


class Method(enum.IntEnum):
    CIRCULANT = 0
    CAUSAL_MA = 1


@dataclass(frozen=True)
class NoiseStream:
    seed: int
    stream_index: int

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_index,))
        return np.random.Generator(np.random.PCG64(ss))

    def normals(self, size: int) -> np.ndarray:
        return self.generator().standard_normal(size)


def worker_count() -> int:
    """Worker cap from ``BM_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("BM_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class PathBatch:
    paths: np.ndarray
    seed: int
    method: Method
    model_id: str = ""
    first_stream: int = 0
    provenance: dict = field(default_factory=dict)

    @property
    def M(self) -> int:
        return self.paths.shape[0]

    @property
    def n(self) -> int:
        return self.paths.shape[1]

    def save(self, path) -> None:
        """Little-endian header then ``M * n`` doubles, row-major."""
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, self.n, self.M, self.seed, int(self.method)))
            fh.write(np.ascontiguousarray(self.paths, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "PathBatch":
        raw = Path(path).read_bytes()
        if len(raw) < _HEADER.size:
            raise FormatError(f"{path}: truncated header")
        magic, version, n, M, seed, method = _HEADER.unpack_from(raw)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        body = raw[_HEADER.size:]
        if len(body) != 8 * n * M:
            raise FormatError(f"{path}: expected {n * M} doubles, found {len(body) / 8:g}")
        try:
            method = Method(method)
        except ValueError as exc:
            raise FormatError(f"{path}: unknown method code {method}") from exc
        paths = np.frombuffer(body, dtype="<f8").reshape(M, n).astype(float)
        return cls(paths, seed, method)


def _check_seed(seed: int) -> None:
    if not 0 <= seed < 2 ** 64:
        raise InvalidParameterError("seed must be an unsigned 64-bit integer")


def _noise_block(seed: int, first: int, rows: int, length: int) -> np.ndarray:
    out = np.empty((rows, length))
    for r in range(rows):
        NoiseStream(seed, first + r).generator().standard_normal(out=out[r])
    return out


def _run_chunks(fn, M: int, chunk: int, workers: int) -> np.ndarray:
    starts = list(range(0, M, chunk))
    jobs = [(s, min(chunk, M - s)) for s in starts]
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda job: fn(*job), jobs))
    else:
        parts = [fn(*job) for job in jobs]
    return np.concatenate(parts, axis=0)


class CirculantSampler:
    """Exact sampler for ``rho(0..n-1)`` by circulant embedding.

    With ``rho`` known to lag ``n`` the embedding has size ``2n``, otherwise
    ``2(n - 1)``.  Eigenvalues in ``[-1e-8, 0)`` are clipped to zero and the
    clipped mass is kept in :attr:`clipped_mass`.
    """

    def __init__(self, rho: CovarianceSequence, n: int):
        if n < 2:
            raise InvalidParameterError("path length n must be at least 2")
        if rho.L_max < n - 1:
            raise InvalidParameterError(f"covariance needed to lag {n - 1}, have {rho.L_max}")
        lag = n if rho.L_max >= n else n - 1
        self.n = n
        self.size = 2 * lag
        eig = rho.circulant_spectrum(lag)
        low = float(eig.min())
        if low < -EIGEN_TOL:
            raise EmbeddingError(
                f"circulant embedding of size {self.size} has eigenvalue {low:.3g} < -{EIGEN_TOL}; "
                "double the embedding size (supply rho to a larger lag)"
            )
        self.clipped_mass = float(np.abs(eig[eig < 0]).sum())
        self.sqrt_eig = np.sqrt(np.clip(eig, 0.0, None))
        self.model_id = rho.model_id

    def transform(self, noise: np.ndarray) -> np.ndarray:
        """Map rows of i.i.d. N(0,1) of length ``size`` to paths of length ``n``."""
        spec = np.fft.rfft(noise, axis=-1)
        return np.fft.irfft(spec * self.sqrt_eig, self.size, axis=-1)[..., : self.n]

    def sample(self, seed: int, first: int, rows: int) -> np.ndarray:
        return self.transform(_noise_block(seed, first, rows, self.size))


class CausalSampler:
    """``X_k = sum_{j<=L} psi_j w_{k-j}`` with the first ``burn_in`` outputs discarded."""

    def __init__(self, psi: CausalCoefficients, n: int, burn_in: int | None = None):
        L = psi.truncation_L
        burn_in = L if burn_in is None else burn_in
        if burn_in < L:
            raise InvalidParameterError(f"burn_in {burn_in} shorter than truncation L={L}")
        if n < 1:
            raise InvalidParameterError("path length n must be positive")
        self.psi = psi.psi
        self.n = n
        self.burn_in = burn_in
        self.size = n + burn_in
        self.model_id = psi.model_id

    def transform(self, noise: np.ndarray) -> np.ndarray:
        noise = np.atleast_2d(noise)
        if len(self.psi) == 1:
            return self.psi[0] * noise[:, self.burn_in:self.burn_in + self.n]
        full = signal.fftconvolve(noise, self.psi[None, :], axes=1)
        return full[:, self.burn_in:self.burn_in + self.n]

    def sample(self, seed: int, first: int, rows: int) -> np.ndarray:
        return self.transform(_noise_block(seed, first, rows, self.size))


def _batch(sampler, method, n, M, seed, first_stream, chunk, workers) -> PathBatch:
    _check_seed(seed)
    if M < 1:
        raise InvalidParameterError("batch size M must be positive")
    workers = worker_count() if workers is None else workers
    paths = _run_chunks(lambda s, rows: sampler.sample(seed, first_stream + s, rows), M, chunk, workers)
    prov = {"embedding_size": sampler.size}
    if method is Method.CIRCULANT:
        prov["clipped_mass"] = sampler.clipped_mass
    else:
        prov["burn_in"] = sampler.burn_in
    return PathBatch(paths, seed, method, sampler.model_id, first_stream, prov)


def simulate_circulant(rho: CovarianceSequence, n: int, M: int, seed: int, *, first_stream: int = 0,
                       chunk: int = DEFAULT_CHUNK, workers: int | None = None) -> PathBatch:
    """``M`` exact stationary paths of length ``n`` with covariance ``rho``."""
    return _batch(CirculantSampler(rho, n), Method.CIRCULANT, n, M, seed, first_stream, chunk, workers)


def simulate_causal(psi: CausalCoefficients, n: int, M: int, seed: int, burn_in: int | None = None, *,
                    first_stream: int = 0, chunk: int = DEFAULT_CHUNK, workers: int | None = None) -> PathBatch:
    """``M`` paths from the truncated causal representation; ``burn_in`` defaults to ``L``."""
    return _batch(CausalSampler(psi, n, burn_in), Method.CAUSAL_MA, n, M, seed, first_stream, chunk, workers)


def iter_batches(sampler_kind: Method, source, n: int, M: int, seed: int, *, chunk: int = 2048,
                 burn_in: int | None = None, workers: int | None = None) -> Iterator[PathBatch]:
    """Yield ``M`` paths as consecutive sub-batches of at most ``chunk`` rows.

    Concatenating the yielded paths reproduces the single-batch result, which
    lets callers reduce very large batches without holding them in memory.
    """
    if sampler_kind is Method.CIRCULANT:
        sampler = CirculantSampler(source, n)
    else:
        sampler = CausalSampler(source, n, burn_in)
    workers = worker_count() if workers is None else workers
    inner = max(1, -(-chunk // workers))
    for start in range(0, M, chunk):
        rows = min(chunk, M - start)
        yield _batch(sampler, sampler_kind, n, rows, seed, start, inner, workers)
