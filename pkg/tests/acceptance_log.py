"""Collects one verdict line per acceptance criterion for the terminal summary."""

RESULTS: list[tuple[int, str, str]] = []


def record(criterion: int, ok: bool, detail: str) -> None:
    RESULTS.append((criterion, "PASS" if ok else "FAIL", detail))
    print(f"criterion {criterion}: {'PASS' if ok else 'FAIL'} {detail}")


def skip(criterion: int, detail: str) -> None:
    RESULTS.append((criterion, "SKIP", detail))
