"""Execution strategy: serial or row/column-partitioned thread parallelism.

Every data-parallel stage is expressed as ``fn(lo, hi)`` over an index range
(rows for x/temporal/flow stages, columns for the y stage).  The executor
splits the range into one contiguous block per worker.  Because each index is
processed by exactly one worker and the per-index arithmetic never depends on
the partition, serial and parallel runs produce bit-identical results.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor, wait
from dataclasses import dataclass

__all__ = ["ExecStrategy", "BlockExecutor"]


@dataclass(frozen=True)
class ExecStrategy:
    """Either ``serial`` or ``parallel`` with a worker count >= 1."""

    mode: str = "serial"
    workers: int = 1

    def __post_init__(self):
        if self.mode not in ("serial", "parallel"):
            raise ValueError(f"strategy mode must be serial|parallel, got {self.mode!r}")
        if self.mode == "parallel" and self.workers < 1:
            raise ValueError(f"parallel strategy needs workers >= 1, got {self.workers}")

    @classmethod
    def parse(cls, text: str) -> "ExecStrategy":
        """Parse ``"serial"``, ``"parallel"`` or ``"parallel:N"``."""
        if text == "serial":
            return cls("serial")
        if text == "parallel":
            return cls("parallel", workers=4)
        if text.startswith("parallel:"):
            return cls("parallel", workers=int(text.split(":", 1)[1]))
        raise ValueError(f"unknown strategy {text!r}")

    @property
    def name(self) -> str:
        return "serial" if self.mode == "serial" else f"parallel:{self.workers}"


class BlockExecutor:
    """Runs ``fn(lo, hi)`` over ``[0, n)`` per the configured strategy.

    The worker threads call numba kernels compiled with ``nogil=True``, so
    they genuinely overlap.  Exceptions from workers are re-raised.
    """

    def __init__(self, strategy: ExecStrategy):
        self.strategy = strategy
        self._pool = None
        if strategy.mode == "parallel":
            self._pool = ThreadPoolExecutor(
                max_workers=strategy.workers, thread_name_prefix="cwhiten"
            )

    def map_blocks(self, fn, n: int) -> None:
        if self._pool is None or n <= 1:
            fn(0, n)
            return
        workers = self.strategy.workers
        step = -(-n // workers)  # ceil
        futures = [
            self._pool.submit(fn, lo, min(lo + step, n)) for lo in range(0, n, step)
        ]
        wait(futures)
        for fut in futures:
            fut.result()

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False
