"""
Job runner for SecLand
Runs independent training/evaluation jobs concurrently with failure rows instead of aborts
"""

import asyncio
import logging
import time
from dataclasses import dataclass
from typing import Any, Callable, List, Optional, Sequence, Tuple

from rich.console import Console
from rich.progress import BarColumn, Progress, SpinnerColumn, TaskProgressColumn, TextColumn, TimeElapsedColumn

from ..utils.errors import SeclandError
from ..utils.logger import get_logger

console = Console(stderr=True)


@dataclass
class JobResult:
    key: str
    value: Any = None
    error: Optional[str] = None
    error_kind: Optional[str] = None
    duration: float = 0.0

    @property
    def ok(self) -> bool:
        return self.error is None


class JobRunner:
    """Bounded-concurrency executor for blocking jobs; results come back in submission order"""

    def __init__(self, threads: int = 1, logger: Optional[logging.Logger] = None,
                 description: str = "Running jobs..."):
        self.threads = max(int(threads), 1)
        self.logger = logger or get_logger('core.runner')
        self.description = description

    async def run_job(self, key: str, job: Callable[[], Any]) -> JobResult:
        """Run one job on a worker thread"""
        self.logger.debug(f"Starting job: {key}")
        started = time.perf_counter()
        value = await asyncio.to_thread(job)
        self.logger.debug(f"Completed job: {key}")
        return JobResult(key, value, duration=time.perf_counter() - started)

    async def run_batch(self, jobs: Sequence[Tuple[str, Callable[[], Any]]],
                        on_done: Optional[Callable[[JobResult], None]] = None) -> List[JobResult]:
        """Run a batch of jobs concurrently"""
        semaphore = asyncio.Semaphore(self.threads)

        async def run_with_semaphore(key: str, job: Callable[[], Any]):
            async with semaphore:
                try:
                    result = await self.run_job(key, job)
                except Exception as e:
                    result = self._failure(key, e)
                if on_done:
                    on_done(result)
                return result

        tasks = [run_with_semaphore(key, job) for key, job in jobs]
        results = await asyncio.gather(*tasks, return_exceptions=True)

        # Handle exceptions that escaped the per-job guard
        processed = []
        for (key, _), result in zip(jobs, results):
            if isinstance(result, BaseException):
                processed.append(self._failure(key, result))
            else:
                processed.append(result)
        return processed

    def _failure(self, key: str, error: BaseException) -> JobResult:
        kind = error.kind if isinstance(error, SeclandError) else type(error).__name__
        self.logger.error(f"Job {key} failed: {error}")
        return JobResult(key, error=str(error), error_kind=kind)

    def run(self, jobs: Sequence[Tuple[str, Callable[[], Any]]], show_progress: bool = True) -> List[JobResult]:
        """Run all jobs with optional progress tracking"""
        if not jobs:
            return []
        if not show_progress:
            return asyncio.run(self.run_batch(jobs))

        progress = Progress(
            SpinnerColumn(),
            TextColumn("[progress.description]{task.description}"),
            BarColumn(),
            TaskProgressColumn(),
            TimeElapsedColumn(),
            console=console,
        )
        with progress:
            task = progress.add_task(self.description, total=len(jobs))
            results = asyncio.run(self.run_batch(jobs, lambda _: progress.update(task, advance=1)))
        failed = sum(1 for r in results if not r.ok)
        self.logger.info(f"Jobs completed: {len(results) - failed} succeeded, {failed} failed")
        return results
