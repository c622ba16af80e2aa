"""Collects one verdict line per acceptance criterion for the run summary."""

_RESULTS: dict[int, str] = {}


def record(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} -- {detail}"
    _RESULTS[number] = line
    print(line)


def lines() -> list[str]:
    return [_RESULTS[k] for k in sorted(_RESULTS)]
