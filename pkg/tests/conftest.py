import time

import pytest

_CRITERIA: dict[int, tuple[str, bool, str]] = {}


def record_criterion(number: int, name: str, passed: bool, detail: str = "") -> None:
    _CRITERIA[number] = (name, bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        name, ok, detail = _CRITERIA[n]
        line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {name}"
        terminalreporter.write_line(line + (f"  ({detail})" if detail else ""))


@pytest.fixture(scope="session")
def trained_run(tmp_path_factory):
    """Default-config training on case A (seed 0), shared by the training and evaluation criteria."""
    from safesep.harness import cli

    out = tmp_path_factory.mktemp("acceptance_train")
    t0 = time.perf_counter()
    assert cli.main(["train", "--seed", "0", "--out", str(out)]) == 0
    return out, time.perf_counter() - t0
