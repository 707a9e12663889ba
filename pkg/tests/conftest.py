import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from seqbps import _accel  # noqa: E402

BACKENDS = ["numba", "numpy"] if _accel.NUMBA_AVAILABLE else ["numpy"]


@pytest.fixture(params=BACKENDS)
def backend(request):
    prev = _accel.set_backend(request.param)
    yield request.param
    _accel.set_backend(prev)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---------------------------------------------------------------- acceptance ledger
_VERDICTS: list[tuple[str, str, bool, str]] = []


@pytest.fixture
def verdict():
    """Record one acceptance outcome.

    ``criterion`` is the criterion number as a string. Entries with a
    non-empty ``variant`` are supporting runs (for example on the synthetic
    surrogate) and do not decide the criterion.
    """

    def record(criterion: str, ok: bool, detail: str, variant: str = "") -> bool:
        _VERDICTS.append((criterion, variant, bool(ok), detail))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted({c for c, *_ in _VERDICTS}, key=int):
        main = [(ok, d) for c, v, ok, d in _VERDICTS if c == crit and not v]
        if main:
            status = "PASS" if all(ok for ok, _ in main) else "FAIL"
            tr.write_line(f"criterion {crit:>2}: {status} | " + " | ".join(d for _, d in main))
        for c, v, ok, d in _VERDICTS:
            if c == crit and v:
                tr.write_line(f"    [{v}] {'pass' if ok else 'fail'} | {d}")
