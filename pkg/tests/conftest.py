import os
import sys
from collections import OrderedDict

sys.path.insert(0, os.path.dirname(__file__))

# criterion -> part -> (passed, detail); filled by test_acceptance
ACCEPTANCE = OrderedDict()


def record(criterion: int, part: str, passed: bool, detail: str):
    ACCEPTANCE.setdefault(criterion, OrderedDict())[part] = (bool(passed), detail)
    print(f"criterion {criterion} [{part}]: {'PASS' if passed else 'FAIL'} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[crit]
        ok = all(p for p, _ in parts.values())
        tr.write_line(f"criterion {crit:2d}: {'PASS' if ok else 'FAIL'}")
        for name, (passed, detail) in parts.items():
            tr.write_line(f"    {'pass' if passed else 'FAIL'}  {name}: {detail}")
