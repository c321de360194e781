"""Reproducible random streams and chunked Monte Carlo reduction."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

#: Replicas per chunk; part of the reproducibility contract.
CHUNK = 1000

THREADS_ENV = "LIOUVILLE_THREADS"


@dataclass(frozen=True)
class RngStream:
    """A named, independent stream: ``(seed, stream_id)`` plus an optional sub-path."""

    seed: int
    stream_id: int = 0
    path: tuple = ()

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,) + tuple(self.path))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, *index: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id, tuple(self.path) + tuple(int(i) for i in index))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def chunked(fn, replicas: int, rng: RngStream, chunk: int = CHUNK, threads: int | None = None):
    """Run ``fn(generator, size)`` over fixed-size chunks and concatenate in chunk order.

    Chunk ``j`` always draws from ``rng.child(j)``, so the result does not
    depend on the number of worker threads.
    """
    if replicas <= 0:
        raise ValueError("replicas must be positive")
    sizes = [chunk] * (replicas // chunk)
    if replicas % chunk:
        sizes.append(replicas % chunk)
    jobs = [(rng.child(j), s) for j, s in enumerate(sizes)]
    threads = thread_count() if threads is None else threads

    def run(job):
        stream, size = job
        return fn(stream.generator(), size)

    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate(p, axis=0) for p in zip(*parts))
    return np.concatenate(parts, axis=0)
