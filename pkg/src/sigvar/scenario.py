"""Reproducible scenario generation and CSV persistence.

Scenarios are drawn from a product distribution (independent marginals,
one per coordinate) by inverse-CDF transform of uniforms produced by the
Philox counter-based generator, so a (spec, count, seed) triple always
yields the same matrix on every platform.  Scenario sets round-trip
through CSV bit-identically (17 significant digits) with a small JSON
sidecar carrying count/dim/seed/distribution metadata.

Marginal parameterizations:

* ``Uniform(lo, hi)``     on [lo, hi)
* ``Normal(mean, sd)``    via the inverse normal CDF
* ``Exponential(mean)``   parameterized by its MEAN, x = -mean log(1 - u)
"""

from __future__ import annotations

import datetime
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtri

__all__ = [
    "DimensionMismatchError",
    "DistributionSpec",
    "Exponential",
    "FORMAT_VERSION",
    "MalformedScenarioFileError",
    "NonFiniteEntryError",
    "Normal",
    "ScenarioFileError",
    "ScenarioSet",
    "Uniform",
    "generate",
    "load",
    "save",
]

FORMAT_VERSION = 1


class ScenarioFileError(ValueError):
    """Base class for scenario file problems."""


class MalformedScenarioFileError(ScenarioFileError):
    """The CSV body or JSON sidecar could not be parsed."""


class NonFiniteEntryError(ScenarioFileError):
    """A NaN or infinity was found in the scenario matrix."""

    def __init__(self, row: int, col: int):
        self.row = row
        self.col = col
        super().__init__("non-finite entry at row %d, column %d (1-based)"
                         % (row, col))


class DimensionMismatchError(ScenarioFileError):
    """CSV shape disagrees with the sidecar metadata."""


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.lo < self.hi):
            raise ValueError("Uniform requires finite lo < hi, got %r, %r"
                             % (self.lo, self.hi))

    def transform(self, u: np.ndarray) -> np.ndarray:
        return self.lo + (self.hi - self.lo) * u

    def spec_string(self) -> str:
        return "uniform:%s,%s" % (_fmt(self.lo), _fmt(self.hi))


@dataclass(frozen=True)
class Normal:
    mean: float
    sd: float

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.sd) and self.sd > 0):
            raise ValueError("Normal requires finite mean and sd > 0, got %r, %r"
                             % (self.mean, self.sd))

    def transform(self, u: np.ndarray) -> np.ndarray:
        # u in [0, 1); guard the left edge so every sample stays finite
        return self.mean + self.sd * ndtri(np.maximum(u, np.finfo(float).tiny))

    def spec_string(self) -> str:
        return "normal:%s,%s" % (_fmt(self.mean), _fmt(self.sd))


@dataclass(frozen=True)
class Exponential:
    """Exponential marginal given by its mean (not its rate)."""

    mean: float

    def __post_init__(self):
        if not (math.isfinite(self.mean) and self.mean > 0):
            raise ValueError("Exponential requires mean > 0, got %r" % (self.mean,))

    def transform(self, u: np.ndarray) -> np.ndarray:
        return -self.mean * np.log1p(-u)

    def spec_string(self) -> str:
        return "exponential:%s" % _fmt(self.mean)


def _fmt(x: float) -> str:
    return repr(float(x))


_MARGINAL_RE = re.compile(r"^(uniform|normal|exponential):([^;]*)$")


@dataclass(frozen=True)
class DistributionSpec:
    """Product distribution: a tuple of independent marginals."""

    marginals: tuple

    def __post_init__(self):
        if len(self.marginals) == 0:
            raise ValueError("DistributionSpec needs at least one marginal")
        object.__setattr__(self, "marginals", tuple(self.marginals))

    @property
    def dim(self) -> int:
        return len(self.marginals)

    def spec_string(self) -> str:
        return ";".join(m.spec_string() for m in self.marginals)

    @classmethod
    def parse(cls, text: str) -> "DistributionSpec":
        """Parse "uniform:0,1;normal:20,5;exponential:21000.0"."""
        marginals = []
        for part in text.strip().split(";"):
            m = _MARGINAL_RE.match(part.strip())
            if m is None:
                raise ValueError("cannot parse marginal %r" % (part,))
            name, args = m.group(1), m.group(2).split(",")
            try:
                vals = [float(a) for a in args]
            except ValueError:
                raise ValueError("cannot parse marginal %r" % (part,)) from None
            if name == "uniform" and len(vals) == 2:
                marginals.append(Uniform(*vals))
            elif name == "normal" and len(vals) == 2:
                marginals.append(Normal(*vals))
            elif name == "exponential" and len(vals) == 1:
                marginals.append(Exponential(vals[0]))
            else:
                raise ValueError("wrong argument count in marginal %r" % (part,))
        return cls(tuple(marginals))


class ScenarioSet:
    """Immutable matrix of scenarios (one row per scenario).

    Attributes
    ----------
    samples : ndarray, shape (count, dim)
        Read-only scenario matrix; every entry finite.
    seed : int or None
        Generator seed, when known.
    distribution : str or None
        Distribution spec string, when known.
    created : str or None
        ISO-8601 creation timestamp, when known.
    """

    __slots__ = ("samples", "seed", "distribution", "created")

    def __init__(self, samples, seed=None, distribution=None, created=None):
        arr = np.asarray(samples, dtype=float)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError("samples must be a non-empty 2-d array, got shape %r"
                             % (arr.shape,))
        bad = ~np.isfinite(arr)
        if bad.any():
            r, c = np.argwhere(bad)[0]
            raise NonFiniteEntryError(int(r) + 1, int(c) + 1)
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "seed", seed)
        object.__setattr__(self, "distribution", distribution)
        object.__setattr__(self, "created", created)

    def __setattr__(self, name, value):
        raise AttributeError("ScenarioSet is immutable")

    @property
    def count(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def column(self, j: int) -> np.ndarray:
        return self.samples[:, j]

    def __repr__(self):
        return "ScenarioSet(count=%d, dim=%d, seed=%r)" % (
            self.count, self.dim, self.seed)


def generate(spec: DistributionSpec, count: int, seed: int) -> ScenarioSet:
    """Draw ``count`` scenarios from the product distribution.

    Uniforms come from numpy's Philox (counter-based, 64-bit) generator
    keyed by ``seed`` and are filled row-major, then each column is pushed
    through its marginal's inverse CDF.  The same (spec, count, seed)
    always produces the same matrix.
    """
    if count <= 0:
        raise ValueError("count must be positive, got %r" % (count,))
    gen = np.random.Generator(np.random.Philox(key=int(seed)))
    u = gen.random((count, spec.dim))
    cols = [m.transform(u[:, j]) for j, m in enumerate(spec.marginals)]
    samples = np.column_stack(cols)
    return ScenarioSet(samples, seed=int(seed),
                       distribution=spec.spec_string(),
                       created=datetime.datetime.now(datetime.timezone.utc)
                       .strftime("%Y-%m-%dT%H:%M:%SZ"))


def sidecar_path(path) -> Path:
    """Metadata path for a scenario CSV: same name with .meta.json."""
    p = Path(path)
    return p.with_name(p.stem + ".meta.json")


def save(scen: ScenarioSet, path) -> None:
    """Write the scenario matrix as CSV plus a JSON metadata sidecar.

    Floats are written with 17 significant digits, so load() recovers the
    matrix bit-identically.
    """
    path = Path(path)
    np.savetxt(path, scen.samples, fmt="%.17g", delimiter=",")
    meta = {
        "format_version": FORMAT_VERSION,
        "count": scen.count,
        "dim": scen.dim,
        "seed": scen.seed,
        "distribution": scen.distribution,
        "created": scen.created,
    }
    with open(sidecar_path(path), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load(path) -> ScenarioSet:
    """Read a scenario CSV (and its sidecar, when present).

    Raises
    ------
    MalformedScenarioFileError
        Unparseable CSV body or sidecar, or unsupported format version.
    NonFiniteEntryError
        NaN or infinity in the matrix (reports 1-based row/column).
    DimensionMismatchError
        Sidecar count/dim disagree with the CSV shape.
    """
    path = Path(path)
    try:
        arr = np.loadtxt(path, delimiter=",", ndmin=2)
    except (ValueError, OSError) as exc:
        raise MalformedScenarioFileError("cannot read %s: %s" % (path, exc)) from exc

    meta = {}
    sp = sidecar_path(path)
    if sp.exists():
        try:
            with open(sp) as fh:
                meta = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MalformedScenarioFileError("bad sidecar %s: %s" % (sp, exc)) from exc
        version = meta.get("format_version")
        if version != FORMAT_VERSION:
            raise MalformedScenarioFileError(
                "unsupported format_version %r in %s" % (version, sp))
        if meta.get("count") != arr.shape[0] or meta.get("dim") != arr.shape[1]:
            raise DimensionMismatchError(
                "sidecar says %sx%s but CSV is %dx%d"
                % (meta.get("count"), meta.get("dim"), arr.shape[0], arr.shape[1]))

    return ScenarioSet(arr, seed=meta.get("seed"),
                       distribution=meta.get("distribution"),
                       created=meta.get("created"))
