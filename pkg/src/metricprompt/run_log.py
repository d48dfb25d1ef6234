import logging
import threading
from collections import deque
from contextlib import contextmanager
from pathlib import Path
from typing import List, Union

PACKAGE_LOGGER = "metricprompt"


class RunLog:
    """Captures the package's log records while one seed's pipeline runs."""

    _global_lock = threading.Lock()

    def __init__(self, max_records: int = 10000, verbose_mode: bool = False, logger_name: str = PACKAGE_LOGGER):
        """Initialize the run log with a maximum buffer size.

        Args:
            max_records: Maximum number of log records to keep (oldest are dropped)
            verbose_mode: If True, keep DEBUG records too (default: False)
            logger_name: Logger whose records are captured
        """
        self.max_records = max_records
        self.buffer = deque(maxlen=max_records)
        self.verbose_mode = verbose_mode
        self.logger_name = logger_name
        self.lock = threading.Lock()
        self._is_capturing = False

        class BufferHandler(logging.Handler):
            """A logging handler that appends records to the run log's buffer."""
            def __init__(self, run_log: "RunLog"):
                super().__init__()
                self.run_log = run_log

            def emit(self, record: logging.LogRecord):
                if not self.run_log._is_capturing:
                    return
                if record.levelno == logging.DEBUG and not self.run_log.verbose_mode:
                    return
                msg = self.format(record)
                # Only include level name for WARNING or higher
                if record.levelno >= logging.WARNING:
                    self.run_log._store(f"{record.levelname}: {msg}")
                else:
                    self.run_log._store(msg)

        self._handler = BufferHandler(self)
        self._handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
        self._handler.setLevel(logging.NOTSET)

    def _store(self, text: str) -> None:
        if text.strip():
            with self.lock:
                self.buffer.append(text)

    def start(self) -> None:
        if self._is_capturing:
            return
        with self._global_lock:
            self._is_capturing = True
            logging.getLogger(self.logger_name).addHandler(self._handler)

    def stop(self) -> None:
        if not self._is_capturing:
            return
        with self._global_lock:
            logging.getLogger(self.logger_name).removeHandler(self._handler)
            self._is_capturing = False

    def get_logs(self) -> List[str]:
        with self.lock:
            return list(self.buffer)

    def clear(self) -> None:
        with self.lock:
            self.buffer.clear()

    def write(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(self.get_logs()) + "\n", encoding="utf-8")
        return path

    @contextmanager
    def capture(self):
        """Context manager to start/stop capturing automatically."""
        try:
            self.start()
            yield self
        finally:
            self.stop()
