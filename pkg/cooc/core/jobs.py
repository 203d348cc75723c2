from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Generic, List, Optional, Sequence, TypeVar

from cooc.config import worker_threads

log = logging.getLogger(__name__)

T = TypeVar("T")


@dataclass(frozen=True)
class Job(Generic[T]):
    name: str
    fn: Callable[[], T]


def _run(job: Job[T]) -> T:
    log.debug("job %s started", job.name)
    out = job.fn()
    log.debug("job %s finished", job.name)
    return out


def run_jobs(jobs: Sequence[Job[T]], workers: Optional[int] = None) -> List[T]:
    """
    Run independent jobs, at most `workers` at a time (default: COOC_THREADS).
    Results come back in submission order; the first failing job's error is raised.
    """
    n = worker_threads() if workers is None else max(1, workers)
    if n == 1 or len(jobs) < 2:
        return [_run(j) for j in jobs]

    log.info("running %d jobs on %d threads", len(jobs), min(n, len(jobs)))
    with ThreadPoolExecutor(max_workers=min(n, len(jobs))) as pool:
        futures = [pool.submit(_run, j) for j in jobs]
        return [f.result() for f in futures]
