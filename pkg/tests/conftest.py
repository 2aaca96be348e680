import pytest

# criterion label -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def record(label: str, passed: bool, detail: str = "") -> None:
    ACCEPTANCE[label] = (passed, detail)
    print(f"[{'PASS' if passed else 'FAIL'}] {label} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(ACCEPTANCE, key=lambda s: int(s.split()[0][1:])):
        passed, detail = ACCEPTANCE[label]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {label}  {detail}")


@pytest.fixture
def small_cfg():
    from dagsim.config import RunConfig
    return RunConfig(nodes=10, k_neighbors=4, duration_s=2.0, bps=20.0, seed=7)
