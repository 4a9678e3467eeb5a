import random

import pytest

from lsmkv import DB, Garnering, Leveling, KiB, PolicyConfig


def small_config(policy=None, **kw) -> PolicyConfig:
    kw.setdefault("memtable_bytes", 64 * KiB)
    kw.setdefault("block_bytes", 1 * KiB)
    return PolicyConfig(policy=policy or Garnering(0.8, 2), **kw)


@pytest.fixture
def rng():
    return random.Random(1234)


@pytest.fixture(params=["garnering", "leveling"])
def any_policy(request):
    return Garnering(0.8, 2) if request.param == "garnering" else Leveling(2)


@pytest.fixture
def open_db(tmp_path):
    opened = []

    def _open(config=None, *, name="db", background=False, **kw):
        db = DB.open(str(tmp_path / name), config or small_config(), background=background, **kw)
        opened.append(db)
        return db

    yield _open
    for db in opened:
        try:
            db.close()
        except Exception:
            pass


# one line per acceptance criterion, shown in the terminal summary
ACCEPTANCE_LINES: dict = {}


def record_acceptance(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
