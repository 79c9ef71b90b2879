"""
Shared fixtures.
"""

from __future__ import annotations

import pytest

from fdpm.ensembles import MP, MatrixSampleSpec, sample_matrix, symmetric_eigenvalues


@pytest.fixture(scope="session")
def mp_sample_4000():
    """Eigenvalues of an n=4000 MP(0.25) matrix."""
    return symmetric_eigenvalues(sample_matrix(MatrixSampleSpec(4000, 11, MP(0.25))),
                                 overwrite=True)


# ==================
# Acceptance summary
# ==================

_NOTES = {"8": "large-scale tables out of scope; metric machinery checked"}


def pytest_terminal_summary(terminalreporter):
    rows = []
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion_" not in nodeid or rep.when != "call" \
                    and key != "error":
                continue
            num = nodeid.split("test_criterion_")[1].split("_")[0]
            rows.append((int(num), "PASS" if key == "passed" else "FAIL", rep.duration))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for num, status, dur in sorted(rows):
        note = _NOTES.get(str(num))
        extra = f" ({note})" if note else ""
        terminalreporter.write_line(f"criterion {num}: {status} [{dur:.1f} s]{extra}")
