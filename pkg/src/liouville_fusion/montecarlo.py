"""Seeded, chunked Monte Carlo runner and the estimate record.

Samples are produced in fixed-size chunks.  Chunk k draws from the k-th child
of ``SeedSequence(master_seed, spawn_key=(label,))``, so the sample stream
depends only on (master seed, label, chunk size) and never on the worker
count.  Chunks are concatenated in index order and reduced with numpy's
pairwise summation, which makes results byte-identical for any number of
workers.
"""
from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .kernels import DomainError


class ValidationError(ValueError):
    """Invalid run configuration (maps to CLI exit status 2)."""


def canonical(obj):
    if isinstance(obj, dict):
        return {str(k): canonical(v) for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))}
    if isinstance(obj, (list, tuple)):
        return [canonical(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def config_digest(cfg: dict) -> str:
    """Stable short hash of a configuration; timestamps must not be passed in."""
    blob = json.dumps(canonical(cfg), sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _label_key(label: str) -> int:
    return int.from_bytes(hashlib.sha256(label.encode()).digest()[:4], "little")


@dataclass(frozen=True)
class MCConfig:
    n_samples: int
    seed: int | None
    workers: int = 1
    chunk: int = 250

    def __post_init__(self):
        if self.n_samples < 2:
            raise ValidationError("n_samples must be at least 2")
        if self.workers < 1 or self.chunk < 1:
            raise ValidationError("workers and chunk must be positive")

    def require_seed(self) -> int:
        if self.seed is None:
            raise ValidationError("master_seed (--seed) is required for Monte Carlo commands")
        return int(self.seed)

    def with_samples(self, n: int) -> "MCConfig":
        return MCConfig(n, self.seed, self.workers, self.chunk)

    def describe(self) -> dict:
        return {"n_samples": self.n_samples, "seed": self.seed, "chunk": self.chunk}


def chunk_rngs(mc: MCConfig, label: str):
    seed = mc.require_seed()
    n_chunks = math.ceil(mc.n_samples / mc.chunk)
    ss = np.random.SeedSequence(seed, spawn_key=(_label_key(label),))
    sizes = [min(mc.chunk, mc.n_samples - k * mc.chunk) for k in range(n_chunks)]
    return [(np.random.default_rng(c), m) for c, m in zip(ss.spawn(n_chunks), sizes)]


def run_chunked(fn, mc: MCConfig, label: str):
    """Apply ``fn(rng, size)`` to every chunk and concatenate results in chunk order.

    ``fn`` returns an array with leading dimension ``size`` or a tuple of such arrays.
    """
    tasks = chunk_rngs(mc, label)
    if mc.workers == 1:
        parts = [fn(r, m) for r, m in tasks]
    else:
        with ThreadPoolExecutor(max_workers=mc.workers) as ex:
            parts = list(ex.map(lambda rm: fn(*rm), tasks))
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate([p[i] for p in parts], axis=0) for i in range(len(parts[0])))
    return np.concatenate(parts, axis=0)


@dataclass
class MomentEstimate:
    value: float
    stderr: float
    n: int
    seed: int | None = None
    digest: str | None = None
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return canonical(asdict(self))

    def scaled(self, c: float) -> "MomentEstimate":
        return MomentEstimate(self.value * c, self.stderr * abs(c), self.n, self.seed, self.digest, dict(self.extra))


def mean_estimate(x, seed=None, digest=None, **extra) -> MomentEstimate:
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        raise DomainError("need at least two samples")
    sd = 0.0 if np.all(x == x.flat[0]) else float(np.std(x, ddof=1))
    return MomentEstimate(float(np.mean(x)), sd / math.sqrt(x.size), int(x.size), seed, digest, extra)


def combined_z(a: MomentEstimate, b: MomentEstimate) -> float:
    se = math.hypot(a.stderr, b.stderr)
    return (a.value - b.value) / se if se > 0 else (0.0 if a.value == b.value else math.inf)
