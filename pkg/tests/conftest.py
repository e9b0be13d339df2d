import pytest

from lbconfine import potential as P


@pytest.fixture(scope="session")
def presets():
    """Normalized preset potentials in two dimensions."""
    return {
        "harmonic": P.normalize(P.harmonic(2)),
        "phi1": P.normalize(P.phi1(2, beta=1.0, alpha=1.0)),
        "phi2": P.normalize(P.phi2(2)),
        "phi3": P.normalize(P.phi3(2)),
        "quartic": P.normalize(P.quartic_separable(2)),
    }


# one summary line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
