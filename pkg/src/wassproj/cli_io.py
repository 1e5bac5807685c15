"""Dataset ingestion, fit documents and plot data.

A fit document is a JSON object with a ``schema_version`` field; floats are
written by :mod:`json`, which emits the shortest decimal that reads back to
the same double, so a write/read cycle reproduces every knot bit for bit.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .baselines import GrenanderFit
from .density import DensityModel
from .logconcave import LogConcaveFit
from .measures import EmpiricalMeasure, build_empirical
from .monotone import MonotoneFit
from .qpsolver import SolverReport
from .quantiles import Partition, StepQuantile

SCHEMA_VERSION = 1
PLOT_POINTS = 512


class InputError(ValueError):
    """Malformed user input (bad dataset row, unknown document, bad config)."""


class SchemaError(InputError):
    """A fit document with an unexpected schema version or shape."""


# --- datasets -------------------------------------------------------------------


def _split(line: str) -> list[str]:
    if "," in line:
        return [f.strip() for f in line.split(",")]
    return line.split()


def _parse_row(fields: list[str]) -> tuple[float, float]:
    if len(fields) not in (1, 2):
        raise ValueError(f"expected 'value' or 'value,weight', got {len(fields)} fields")
    value = float(fields[0])
    weight = float(fields[1]) if len(fields) == 2 else 1.0
    return value, weight


def load_dataset(path) -> EmpiricalMeasure:
    """Read one ``value`` or ``value,weight`` per line into an empirical measure.

    Blank lines and lines starting with ``#`` are skipped.  If the first
    remaining line does not parse as numbers it is taken as a header.
    Rows of weight zero are dropped.

    Raises
    ------
    OSError
        The file cannot be read.
    InputError
        A malformed row (the message names its line number), a negative or
        non-finite weight, a non-finite value, or no row of positive weight.
    """
    values, weights = [], []
    seen_first = False
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = _split(line)
            try:
                value, weight = _parse_row(fields)
            except ValueError as exc:
                if not seen_first:
                    seen_first = True
                    continue  # header
                raise InputError(f"{path}:{lineno}: malformed row {line!r}: {exc}") from None
            seen_first = True
            if not np.isfinite(value):
                raise InputError(f"{path}:{lineno}: value must be finite")
            if not np.isfinite(weight) or weight < 0:
                raise InputError(f"{path}:{lineno}: weight must be finite and non-negative")
            values.append(value)
            weights.append(weight)
    if not values:
        raise InputError(f"{path}: no data rows")
    w = np.array(weights)
    if not np.any(w > 0):
        raise InputError(f"{path}: all weights are zero")
    keep = w > 0
    return build_empirical(np.array(values)[keep], w[keep])


def save_values(values, path=None) -> str:
    """One value per line (shortest round-trip form); written to ``path`` if given."""
    text = "".join(f"{float(v)!r}\n" for v in np.asarray(values, dtype=float))
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


# --- fit documents -----------------------------------------------------------------


def _digest(data: StepQuantile) -> dict:
    return {
        "count": int(data.partition.K),
        "min": float(data.y[0]),
        "max": float(data.y[-1]),
        "mean": float(data.mean()),
    }


def fit_to_document(fit, digest: dict | None = None) -> dict:
    """The JSON-ready document of a monotone, log-concave or Grenander fit.

    ``digest`` summarises the raw input (count of atoms, min, max, mean);
    by default it is computed from the discretised data the fit carries.
    """
    if not isinstance(fit, (MonotoneFit, LogConcaveFit, GrenanderFit)):
        raise TypeError(f"cannot serialise {type(fit).__name__}")
    doc = {
        "schema_version": SCHEMA_VERSION,
        "model": fit.model,
        "u": fit.partition.u.tolist(),
        "q": np.asarray(fit.q).tolist(),
        "support": list(fit.support),
        "w2": float(fit.w2),
        "report": fit.report.as_dict(),
        "input": digest or _digest(fit.data),
        "data": {"u": fit.data.partition.u.tolist(), "y": fit.data.y.tolist()},
    }
    if isinstance(fit, MonotoneFit):
        doc["flat_steps"] = bool(fit.flat_steps)
    if isinstance(fit, LogConcaveFit):
        doc["c"] = float(fit.c)
        doc["h"] = None if fit.h is None else fit.h.tolist()
        doc["eps"] = float(fit.eps)
    point_mass = isinstance(fit, LogConcaveFit) and fit.is_point_mass
    doc["density"] = None if point_mass else fit.density().as_dict()
    return doc


def document_to_fit(doc: dict):
    """Rebuild the fit object from :func:`fit_to_document` output.

    Raises
    ------
    SchemaError
        Wrong ``schema_version``, unknown model or missing fields.
    """
    if not isinstance(doc, dict) or "schema_version" not in doc:
        raise SchemaError("not a fit document (no schema_version)")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise SchemaError(
            f"schema version {doc['schema_version']!r} is not supported (expected {SCHEMA_VERSION})"
        )
    try:
        model = doc["model"]
        data = StepQuantile(Partition(np.array(doc["data"]["u"])), np.array(doc["data"]["y"]))
        report = SolverReport.from_dict(doc["report"])
        q = np.array(doc["q"], dtype=float)
        w2 = float(doc["w2"])
        if model == "monotone":
            return MonotoneFit(Partition(np.array(doc["u"])), q, report, w2, data, bool(doc["flat_steps"]))
        if model == "logconcave":
            h = None if doc["h"] is None else np.array(doc["h"], dtype=float)
            return LogConcaveFit(
                Partition(np.array(doc["u"])), float(doc["c"]), h, q, report, w2, data, float(doc["eps"])
            )
        if model == "grenander":
            return GrenanderFit(Partition(np.array(doc["u"])), q, w2, data, report)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed fit document: {exc}") from exc
    raise SchemaError(f"unknown model {model!r}")


def write_fit(fit, path, digest: dict | None = None) -> None:
    """Write the fit document of ``fit`` to ``path`` as JSON."""
    text = json.dumps(fit_to_document(fit, digest), indent=1, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def read_fit(path):
    """Read a fit written by :func:`write_fit`.

    Raises
    ------
    OSError
        Unreadable file.
    SchemaError
        Not valid JSON, or a document this version cannot read.
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not JSON: {exc}") from exc
    return document_to_fit(doc)


def digest_of(m: EmpiricalMeasure) -> dict:
    """Count of atoms, min, max and mean of a raw data set."""
    return {"count": int(len(m)), "min": float(m.x[0]), "max": float(m.x[-1]), "mean": m.mean()}


# --- plot data ---------------------------------------------------------------------


def plot_rows(density: DensityModel, n: int = PLOT_POINTS) -> tuple[np.ndarray, np.ndarray]:
    """``n`` equally spaced abscissae across the support and the density there."""
    return density.plot_grid(n)


def write_plot(density: DensityModel, path, n: int = PLOT_POINTS) -> None:
    """CSV with header ``x,density`` and ``n`` rows."""
    x, f = plot_rows(density, n)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "density"])
        for xi, fi in zip(x, f):
            w.writerow([repr(float(xi)), repr(float(fi))])


__all__ = [
    "InputError",
    "SchemaError",
    "SCHEMA_VERSION",
    "load_dataset",
    "save_values",
    "fit_to_document",
    "document_to_fit",
    "write_fit",
    "read_fit",
    "digest_of",
    "plot_rows",
    "write_plot",
]
