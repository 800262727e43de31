import pytest

from ris_lab.domain.services.base import BaseJobRunner, JobSpec


def square(x: int) -> int:
    return x * x


def explode(x: int) -> int:
    raise RuntimeError(f"job {x} failed")


class TestBaseJobRunner:
    def test_rejects_zero_concurrency(self):
        with pytest.raises(ValueError):
            BaseJobRunner("test", max_concurrent=0)

    @pytest.mark.asyncio
    async def test_results_ordered_by_key(self):
        runner = BaseJobRunner("test")
        jobs = [JobSpec(key=(x,), func=square, kwargs={"x": x}) for x in (3, 1, 2)]
        assert await runner.run_batch(jobs) == [1, 4, 9]
        assert runner.completed_jobs == 3

    @pytest.mark.asyncio
    async def test_parallel_matches_inline(self):
        jobs = [JobSpec(key=(x,), func=square, kwargs={"x": x}) for x in range(4)]
        inline = await BaseJobRunner("test").run_batch(jobs)
        parallel = await BaseJobRunner("test", max_concurrent=2).run_batch(jobs)
        assert parallel == inline

    @pytest.mark.asyncio
    async def test_failure_propagates(self):
        runner = BaseJobRunner("test")
        with pytest.raises(RuntimeError, match="job 1 failed"):
            await runner.run_batch([JobSpec(key=(1,), func=explode, kwargs={"x": 1})])
        assert runner.completed_jobs == 0
