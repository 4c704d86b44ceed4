"""Repo-shipped scenario fixtures and coefficient files.

Every study and acceptance check runs against these files rather than
regenerating scenarios at test time, so results do not depend on the
runtime RNG.  The CSVs were produced by tools/make_fixtures.py with the
seeds recorded in their sidecars.
"""

from __future__ import annotations

from pathlib import Path

_HERE = Path(__file__).resolve().parent

FIXTURES = {
    "analytic_uniform_1000": "analytic_uniform_1000.csv",
    "analytic_uniform_20": "analytic_uniform_20.csv",
    "farmer_beet_yield_1000": "farmer_beet_yield_1000.csv",
    "flare_flow_2000": "flare_flow_2000.csv",
    "farmer_coefficients": "farmer_coefficients.txt",
    "flare_coefficients": "flare_coefficients.txt",
    "report_schema": "report_schema.json",
}


def fixture_path(name: str) -> Path:
    """Absolute path of a named fixture file."""
    try:
        return _HERE / FIXTURES[name]
    except KeyError:
        raise KeyError("unknown fixture %r; known: %s"
                       % (name, ", ".join(sorted(FIXTURES)))) from None
