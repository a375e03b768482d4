"""Per-criterion outcomes collected by the acceptance tests."""
RESULTS: dict[int, tuple[bool, str]] = {}


def record(n: int, ok: bool, line: str) -> None:
    RESULTS[n] = (bool(ok), line)
    print(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {line}")
