"""The bdrylib worker threads."""

import functools
import queue
import threading
from typing import TYPE_CHECKING, Generic, TypeVar

from bdrylib.logger import logger

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

T = TypeVar("T")
R = TypeVar("R")

###############################################################################
# Class: ThreadCommon
###############################################################################


class ThreadCommon:
    """A class that handle common thread logic."""

    def __init__(
        self,
        target: "Callable[[], None]",
        init: "Callable[[], None] | None" = None,
        final: "Callable[[], None] | None" = None,
        name: str | None = None,
    ) -> None:
        """Initialize common thread.

        :param target: callable invoked in a loop until stop is requested
        :param init: optional one time initialization
        :param final: optional one time finalization
        :param name: thread name
        """
        assert callable(target)
        if init:
            assert callable(init)
        if final:
            assert callable(final)
        self._target = target
        self._init = init
        self._final = final
        self._thrd: threading.Thread | None = None
        self._stop_flag = threading.Event()
        self._name = name

    def _stop_is_set(self) -> bool:
        """Return stop flag state."""
        return self._stop_flag.is_set()

    def _thread_loop(self) -> None:
        if self._init:
            self._init()

        while not self._stop_is_set():
            self._target()

        if self._final:
            self._final()

    def stop_set(self) -> None:
        """Set stop flag."""
        self._stop_flag.set()

    def thread_is_alive(self) -> bool:
        """Return true is thread is alive."""
        if self._thrd is None:
            return False

        return self._thrd.is_alive()

    def thread_join(self) -> None:
        """Wait for the thread to finish on its own."""
        if self._thrd is not None:
            self._thrd.join()
            self._thrd = None

    def thread_stop(self) -> None:
        """Stop thread."""
        if self._thrd is None:
            return

        self.stop_set()
        self.thread_join()

    def thread_start(self) -> None:
        """Start thread."""
        if not self._thrd:
            self._stop_flag.clear()
            self._thrd = threading.Thread(
                target=self._thread_loop, name=self._name
            )
            self._thrd.start()


###############################################################################
# Class: WorkerPool
###############################################################################


class WorkerPool(Generic[T, R]):
    """Bounded pool of ThreadCommon workers.

    Items are processed in any order, results are returned in input order
    so the output never depends on the number of workers.
    """

    def __init__(
        self, func: "Callable[[int, T], R]", threads: int = 1
    ) -> None:
        """Initialize a worker pool.

        :param func: work function called with (index, item)
        :param threads: number of worker threads
        """
        assert callable(func)
        assert threads >= 1
        self._func = func
        self._threads = threads
        self._queue: queue.Queue[tuple[int, T]] = queue.Queue()
        self._results: dict[int, R] = {}
        self._errors: dict[int, BaseException] = {}
        self._workers: list[ThreadCommon] = []
        self._lock = threading.Lock()

    def _worker(self, wid: int) -> None:
        try:
            index, item = self._queue.get_nowait()
        except queue.Empty:
            self._workers[wid].stop_set()
            return

        try:
            result = self._func(index, item)
        except Exception as exc:  # noqa: BLE001
            logger.debug("worker item %d failed: %s", index, exc)
            with self._lock:
                self._errors[index] = exc
        else:
            with self._lock:
                self._results[index] = result

    def map(self, items: "Sequence[T]") -> list[R]:
        """Process all items and return results in input order.

        The first failing item (by index) re-raises its exception.

        :param items: work items
        """
        self._results = {}
        self._errors = {}
        for i, item in enumerate(items):
            self._queue.put((i, item))

        count = min(self._threads, max(len(items), 1))
        self._workers = [
            ThreadCommon(
                functools.partial(self._worker, i), name=f"bdry-worker-{i}"
            )
            for i in range(count)
        ]
        if count == 1:
            # run inline, no thread needed
            while not self._workers[0]._stop_is_set():
                self._worker(0)
        else:
            for thr in self._workers:
                thr.thread_start()
            for thr in self._workers:
                thr.thread_join()

        if self._errors:
            raise self._errors[min(self._errors)]
        return [self._results[i] for i in range(len(items))]
