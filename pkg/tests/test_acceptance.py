"""Acceptance suite on the full profile; one PASS/FAIL line per criterion.

Run directly (``python3 tests/test_acceptance.py``) for the lines alone; under
pytest they are also repeated in the terminal summary.
"""

import json
import subprocess
import sys
import time

import pytest

from pathkac import acceptance, hermite
from pathkac.acceptance import CRITERIA, run_criterion

LINES = []


def _record(number, name, passed, detail=""):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {name}" + (f" ({detail})" if detail else "")
    LINES.append(line)
    print(line)


@pytest.mark.slow
@pytest.mark.parametrize("number,name", [(n, name) for n, name, _ in CRITERIA], ids=lambda v: str(v))
def test_criterion(number, name):
    res = run_criterion(number, "full")
    _record(number, name, res.passed, f"{res.seconds:.1f}s")
    assert res.passed, json.dumps(res.metrics, indent=1)[:4000]


def _accept_cli(out):
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pathkac.cli", "accept", "profile=quick", "-o", str(out)],
                          capture_output=True, text=True)
    return proc, time.perf_counter() - t0


@pytest.mark.slow
def test_criterion_12_reproducible_quick_profile(tmp_path):
    first, secs_a = _accept_cli(tmp_path / "a")
    second, secs_b = _accept_cli(tmp_path / "b")
    same = (tmp_path / "a" / "accept.json").read_bytes() == (tmp_path / "b" / "accept.json").read_bytes()
    ok = first.returncode == second.returncode == 0 and same and max(secs_a, secs_b) <= 120.0
    _record(12, "deterministic quick profile", ok, f"{secs_a:.1f}s / {secs_b:.1f}s")
    assert first.returncode == 0, first.stdout + first.stderr
    assert same
    assert max(secs_a, secs_b) <= 120.0


def test_corrupted_recurrence_is_caught(monkeypatch):
    good = hermite._recurrence

    def corrupted(N, x):
        out = good(N, x)
        if N >= 5:
            out[5] = out[5] * (1 + 1e-3)
        return out

    monkeypatch.setattr(hermite, "_recurrence", corrupted)
    assert not run_criterion(5, "quick").passed
    monkeypatch.setattr(hermite, "_recurrence", good)
    assert run_criterion(5, "quick").passed


if __name__ == "__main__":
    for number, name, _ in CRITERIA:
        r = run_criterion(number, "full")
        _record(number, name, r.passed, f"{r.seconds:.1f}s")
    r = acceptance.determinism_probe("quick", 20240601)
    _record(12, r.name, r.passed, f"{r.seconds:.1f}s")
