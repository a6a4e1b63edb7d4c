import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    verdicts = getattr(mod, "VERDICTS", None)
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for key in mod.CRITERIA:
        if key in verdicts:
            ok, detail = verdicts[key]
            terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {key} {detail}")
        else:
            terminalreporter.write_line(f"[SKIP] criterion {key} {mod.CRITERIA[key][0]}: not run")
