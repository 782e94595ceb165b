import re


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per acceptance criterion at the end of the run."""
    lines = {}
    for status, label in (("passed", "PASS"), ("failed", "FAIL"), ("error", "FAIL")):
        for rep in terminalreporter.stats.get(status, []):
            nodeid = str(getattr(rep, "nodeid", ""))
            if "test_acceptance" not in nodeid:
                continue
            if getattr(rep, "when", "call") not in ("call", "setup"):
                continue
            m = re.search(r"test_criterion_(\d+)_(\w+)", nodeid)
            if not m:
                continue
            num = int(m.group(1))
            name = m.group(2).replace("_", " ")
            if num not in lines or label == "FAIL":
                lines[num] = (label, name)
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for num in sorted(lines):
            label, name = lines[num]
            terminalreporter.write_line(f"[{label}] criterion {num}: {name}")
