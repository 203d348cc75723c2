from __future__ import annotations

import threading
import time

import pytest

from cooc.config import THREADS_ENV, worker_threads
from cooc.core.jobs import Job, run_jobs


def sleeper(i: int, seen: set) -> Job[int]:
    def fn() -> int:
        # later jobs finish first when they run in parallel
        time.sleep(0.02 * (5 - i))
        seen.add(threading.get_ident())
        return i * i

    return Job(name=f"job{i}", fn=fn)


def test_results_keep_submission_order() -> None:
    seen: set = set()
    assert run_jobs([sleeper(i, seen) for i in range(5)], workers=4) == [0, 1, 4, 9, 16]
    assert len(seen) > 1


def test_single_worker_runs_inline() -> None:
    seen: set = set()
    assert run_jobs([sleeper(i, seen) for i in range(3)], workers=1) == [0, 1, 4]
    assert seen == {threading.get_ident()}


def test_first_error_is_raised() -> None:
    def boom() -> int:
        raise ValueError("fold failed")

    with pytest.raises(ValueError, match="fold failed"):
        run_jobs([Job("ok", lambda: 1), Job("bad", boom)], workers=2)


def test_worker_threads_from_environment(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.delenv(THREADS_ENV, raising=False)
    assert worker_threads() == 1
    monkeypatch.setenv(THREADS_ENV, "3")
    assert worker_threads() == 3
    monkeypatch.setenv(THREADS_ENV, "zero")
    assert worker_threads() == 1
    monkeypatch.setenv(THREADS_ENV, "-2")
    assert worker_threads() == 1
