"""Flat key-value coefficient files.

Study coefficients ship as plain text so they can be inspected and
swapped without touching code:

    # comment
    version = 1
    land_capacity = 500
    purchase_price_beets = inf

One ``key = value`` pair per line, ``#`` starts a comment, values are
floats (``inf`` allowed where a market or cap is absent).  The
``version`` key is required and pins the schema of the remaining keys.
"""

from __future__ import annotations

__all__ = ["CoefficientError", "read_coefficient_file"]


class CoefficientError(ValueError):
    """Malformed coefficient file or out-of-range coefficient."""


def read_coefficient_file(path, expected_version: int = 1) -> dict:
    """Parse ``key = value`` lines into a dict of floats.

    The ``version`` entry is checked against ``expected_version`` and
    removed from the result.  Duplicate keys and unparseable lines are
    errors.
    """
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CoefficientError(
                    "%s:%d: expected 'key = value', got %r" % (path, lineno, raw.rstrip()))
            key, _, text = line.partition("=")
            key, text = key.strip(), text.strip()
            if not key or not text:
                raise CoefficientError(
                    "%s:%d: empty key or value" % (path, lineno))
            if key in values:
                raise CoefficientError(
                    "%s:%d: duplicate key %r" % (path, lineno, key))
            try:
                values[key] = float(text)
            except ValueError:
                raise CoefficientError(
                    "%s:%d: value of %r is not a number: %r"
                    % (path, lineno, key, text)) from None
    if "version" not in values:
        raise CoefficientError("%s: missing required key 'version'" % path)
    version = values.pop("version")
    if version != expected_version:
        raise CoefficientError(
            "%s: version %g, expected %d" % (path, version, expected_version))
    return values


def take(values: dict, key: str, path) -> float:
    """Pop a required key, raising CoefficientError when absent."""
    try:
        return values.pop(key)
    except KeyError:
        raise CoefficientError("%s: missing key %r" % (path, key)) from None


def reject_extras(values: dict, path) -> None:
    """Error out on unconsumed keys (typos should not pass silently)."""
    if values:
        raise CoefficientError(
            "%s: unknown keys %s" % (path, ", ".join(sorted(values))))
