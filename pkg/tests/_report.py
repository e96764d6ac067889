"""Collects one verdict line per acceptance criterion for the terminal summary."""

RESULTS: list[str] = []


def record(number, title: str, passed: bool, detail: str) -> bool:
    line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
    RESULTS.append(line)
    print(line)
    return passed
