"""Collects acceptance-criterion outcomes and prints one line per criterion."""

import contextlib

import pytest

_RESULTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_RESULTS] = {}


@pytest.fixture
def criterion(request):
    """``with criterion(3, "title") as c: ...``; set ``c["detail"]`` for the summary line."""
    results = request.config.stash[_RESULTS]

    @contextlib.contextmanager
    def record(number: int, title: str):
        info = {"detail": ""}
        try:
            yield info
        except BaseException as e:
            results.setdefault(number, [title, []])[1].append((False, f"{type(e).__name__}: {e}".splitlines()[0]))
            raise
        results.setdefault(number, [title, []])[1].append((True, info["detail"]))

    return record


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_RESULTS, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        title, parts = results[number]
        ok = all(p for p, _ in parts)
        details = "; ".join(dict.fromkeys(d for p, d in parts if d and p == ok)) or "ok"
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number}: {title} ({details})")
