"""Collects one verdict line per acceptance criterion for the terminal summary."""

RESULTS: list[str] = []


def record(label: str, ok: bool, detail: str) -> bool:
    line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
    RESULTS.append(line)
    print(line)
    return ok
