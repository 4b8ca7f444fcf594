import json
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = FIXTURES / "golden"

_acceptance_lines: list[str] = []


def record_acceptance(line: str) -> None:
    _acceptance_lines.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


def write_jsonl(path, records):
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write((r if isinstance(r, str) else json.dumps(r)) + "\n")
    return path


@pytest.fixture
def jsonl(tmp_path):
    def _write(name, records):
        return write_jsonl(tmp_path / name, records)
    return _write


def paper(pid="10.1/a", authors=("Liyue Chen", "Jielan Ding"), statement=None, **kw):
    rec = {"paper_id": pid, "journal": "Nature", "year": 2020, "disciplines": [], "authors": list(authors)}
    if statement is not None:
        rec["contribution_statement"] = statement
    rec.update(kw)
    return rec


def context(cid, pid="10.1/a", text="see [target cited reference] here", **kw):
    rec = {"context_id": cid, "cited_paper_id": pid, "text": text}
    rec.update(kw)
    return rec
