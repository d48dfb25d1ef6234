import logging
import threading
import time

import pytest

from metricprompt.run_log import PACKAGE_LOGGER, RunLog


@pytest.fixture
def package_logger():
    logger = logging.getLogger(PACKAGE_LOGGER)
    previous = logger.level
    logger.setLevel(logging.DEBUG)
    yield logging.getLogger(f"{PACKAGE_LOGGER}.tests")
    logger.setLevel(previous)


def test_capture_package_records(package_logger):
    """Records of the package logger are captured with their logger name."""
    run_log = RunLog(max_records=10)
    with run_log.capture():
        package_logger.info("Scored 4 queries")
    assert run_log.get_logs() == [f"{PACKAGE_LOGGER}.tests: Scored 4 queries"]


def test_level_prefix_and_debug_filter(package_logger):
    run_log = RunLog(max_records=10)
    with run_log.capture():
        package_logger.error("Stage failed")
        package_logger.warning("Noisy accuracy is higher")
        package_logger.info("Seed 1 done")
        package_logger.debug("Batch 3")  # dropped outside verbose mode
    logs = run_log.get_logs()
    assert any(log.startswith("ERROR: ") and "Stage failed" in log for log in logs)
    assert any(log.startswith("WARNING: ") and "Noisy accuracy" in log for log in logs)
    assert any(log == f"{PACKAGE_LOGGER}.tests: Seed 1 done" for log in logs)
    assert not any("Batch 3" in log for log in logs)


def test_verbose_mode_keeps_debug(package_logger):
    run_log = RunLog(verbose_mode=True)
    with run_log.capture():
        package_logger.debug("Batch 3")
    assert run_log.get_logs() == [f"{PACKAGE_LOGGER}.tests: Batch 3"]


def test_other_loggers_are_ignored(package_logger):
    run_log = RunLog()
    with run_log.capture():
        logging.getLogger("somewhere.else").error("not ours")
    assert run_log.get_logs() == []


def test_nothing_captured_outside_the_context(package_logger):
    run_log = RunLog()
    package_logger.info("before")
    with run_log.capture():
        package_logger.info("during")
    package_logger.info("after")
    assert [log.split(": ", 1)[1] for log in run_log.get_logs()] == ["during"]
    assert run_log._handler not in logging.getLogger(PACKAGE_LOGGER).handlers


def test_max_records(package_logger):
    """Only the newest records survive once the buffer is full."""
    run_log = RunLog(max_records=5)
    with run_log.capture():
        for i in range(10):
            package_logger.info(f"Message {i}")
    logs = run_log.get_logs()
    assert len(logs) == 5
    for i, msg in enumerate(logs):
        assert msg.endswith(f"Message {i + 5}")


def test_thread_safety(package_logger):
    run_log = RunLog(max_records=100)

    def log_messages(thread_id, count):
        for i in range(count):
            package_logger.info(f"Thread {thread_id} log {i}")
            time.sleep(0.01)

    with run_log.capture():
        threads = [threading.Thread(target=log_messages, args=(i, 5)) for i in range(3)]
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()

    logs = run_log.get_logs()
    assert len(logs) == 15
    for thread_id in range(3):
        assert len([log for log in logs if f"Thread {thread_id} log" in log]) == 5


def test_start_and_stop_are_idempotent(package_logger):
    run_log = RunLog()
    run_log.start()
    run_log.start()
    package_logger.info("once")
    run_log.stop()
    run_log.stop()
    assert len(run_log.get_logs()) == 1
    assert run_log._handler not in logging.getLogger(PACKAGE_LOGGER).handlers


def test_clear_and_write(tmp_path, package_logger):
    run_log = RunLog()
    with run_log.capture():
        package_logger.info("first")
        package_logger.info("second")
    path = run_log.write(tmp_path / "seed-1" / "run.log")
    assert path.read_text(encoding="utf-8").splitlines() == [
        f"{PACKAGE_LOGGER}.tests: first",
        f"{PACKAGE_LOGGER}.tests: second",
    ]
    run_log.clear()
    assert run_log.get_logs() == []
