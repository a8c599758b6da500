import contextlib
import time

RESULTS = []


@contextlib.contextmanager
def criterion(number, title, limit=None):
    """Record one PASS/FAIL line for an acceptance criterion, with an optional time limit."""
    start = time.perf_counter()
    ok = False
    try:
        yield
        elapsed = time.perf_counter() - start
        assert limit is None or elapsed < limit, f"took {elapsed:.1f}s, limit {limit}s"
        ok = True
    finally:
        elapsed = time.perf_counter() - start
        RESULTS.append((number, title, ok, elapsed))
        print(f"{'PASS' if ok else 'FAIL'}  criterion {number}: {title} ({elapsed:.2f}s)")


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, elapsed in sorted(RESULTS):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {number:>2}: {title} ({elapsed:.2f}s)")
