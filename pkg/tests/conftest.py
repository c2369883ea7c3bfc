"""Collects acceptance verdicts and prints one line per criterion at the end
of the session, so they show up without ``-s``."""

ACCEPTANCE = {}
NAMES = {
    1: "many-to-one statistics",
    2: "score-sharing multiplier",
    3: "ablation ordering",
    4: "consistency regularization effect",
    5: "toy consistency reproduction",
    6: "initialization coverage",
    7: "oracle equivalences",
    8: "determinism",
}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (bool(passed), detail)
    print(_line(number))


def _line(number: int) -> str:
    if number not in ACCEPTANCE:
        return f"criterion {number} ({NAMES[number]}): NOT RUN"
    passed, detail = ACCEPTANCE[number]
    verdict = "PASS" if passed else "FAIL"
    return f"criterion {number} ({NAMES[number]}): {verdict}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in NAMES:
        terminalreporter.write_line(_line(number))
