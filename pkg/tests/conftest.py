import pytest

from dlmsgd.baselines import keep_lzma_buffers_in_heap

from dlmsgd.dlms import DateTime, Reading
from dlmsgd.synth import generate_fleet

SEED_HOUSEHOLDS = 10
SEED_DAYS = 30
SEED = 2020


def make_reading(i=0, **kw):
    base = dict(log_id=1000 + i, timestamp=DateTime(2020, 1, 1).shifted(15 * i),
                log_status=0, data_quality=0, a14=50_000 + 7 * i, a23=0,
                r12=9_000 + i, r34=800)
    base.update(kw)
    return Reading(**base)


@pytest.fixture(scope="session")
def committed_fleet():
    """The committed synthetic seed: 10 households, 30 days of 15-minute readings."""
    return generate_fleet(SEED_HOUSEHOLDS, seed=SEED, days=SEED_DAYS)


ACCEPTANCE_RESULTS = []


def pytest_configure(config):
    keep_lzma_buffers_in_heap()


def record_acceptance(number, title, ok, detail):
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title} ({detail})"
    ACCEPTANCE_RESULTS.append((number, line))
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_RESULTS):
            terminalreporter.write_line(line)
