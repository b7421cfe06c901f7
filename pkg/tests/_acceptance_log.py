"""Collects one pass/fail line per acceptance criterion for the terminal summary."""

RESULTS = []


def record(number, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {detail}"
    RESULTS.append(line)
    print(line, flush=True)
    return passed
