import asyncio
import time
from concurrent.futures import Executor, ProcessPoolExecutor
from typing import Any, Callable, Generic, Hashable, TypeVar

import structlog
from pydantic import BaseModel, ConfigDict, Field

from ris_lab.core.observability import job_duration, jobs_counter

R = TypeVar("R")


class JobSpec(BaseModel):
    """One independent sweep point: a picklable callable, its kwargs and the key it sorts by."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    key: tuple
    func: Callable[..., Any]
    kwargs: dict[str, Any] = Field(default_factory=dict)


def _timed_call(func: Callable[..., Any], kwargs: dict[str, Any]) -> tuple[Any, float]:
    start = time.perf_counter()
    result = func(**kwargs)
    return result, time.perf_counter() - start


class BaseJobRunner(Generic[R]):
    """Run independent seeded jobs under a concurrency bound; results come back ordered by key."""

    def __init__(self, kind: str, max_concurrent: int = 1) -> None:  # Bound parallel jobs with a semaphore !!!
        if max_concurrent < 1:
            raise ValueError("max_concurrent must be >= 1")
        self.kind = kind
        self.max_concurrent = max_concurrent
        self.semaphore = asyncio.Semaphore(max_concurrent)
        self.logger = structlog.get_logger()
        self.completed_jobs = 0

    async def run_single(self, job: JobSpec, executor: Executor | None) -> tuple[Hashable, R]:
        async with self.semaphore:
            self.logger.debug("Starting job", kind=self.kind, key=job.key)
            try:
                if executor is None:
                    result, elapsed = _timed_call(job.func, job.kwargs)
                else:
                    loop = asyncio.get_running_loop()
                    result, elapsed = await loop.run_in_executor(executor, _timed_call, job.func, job.kwargs)
            except Exception as e:
                # guardrail: count and log the failed job before it aborts the sweep
                jobs_counter.labels(kind=self.kind, status="error").inc()
                self.logger.error("Job failed", kind=self.kind, key=job.key, error=str(e))
                raise
            jobs_counter.labels(kind=self.kind, status="ok").inc()
            job_duration.observe(elapsed)
            self.completed_jobs += 1
            self.logger.info("Job completed", kind=self.kind, key=job.key, seconds=round(elapsed, 3))
            return job.key, result

    async def run_batch(self, jobs: list[JobSpec]) -> list[R]:
        """All jobs, inline when ``max_concurrent == 1`` and in worker processes otherwise."""
        self.logger.info("Starting job batch", kind=self.kind, jobs=len(jobs), parallel=self.max_concurrent)
        if self.max_concurrent == 1:
            results = [await self.run_single(job, None) for job in jobs]
        else:
            with ProcessPoolExecutor(max_workers=self.max_concurrent) as executor:
                results = await asyncio.gather(*(self.run_single(job, executor) for job in jobs))
        ordered = sorted(results, key=lambda item: item[0])
        self.logger.info("Job batch completed", kind=self.kind, completed=self.completed_jobs)
        return [result for _, result in ordered]
