import json

import numpy as np
import pytest

from wassproj.baselines import fit_grenander
from wassproj.cli_io import (
    InputError,
    SchemaError,
    document_to_fit,
    fit_to_document,
    load_dataset,
    read_fit,
    write_fit,
    write_plot,
)
from wassproj.logconcave import fit_logconcave
from wassproj.measures import build_empirical
from wassproj.monotone import fit_monotone


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_single_value(tmp_path):
    m = load_dataset(_write(tmp_path, "1\n"))
    assert m.x.tolist() == [1.0] and m.w.tolist() == [1.0]


def test_load_weighted(tmp_path):
    m = load_dataset(_write(tmp_path, "-1,0.5\n1,0.5\n"))
    assert m.x.tolist() == [-1.0, 1.0] and m.w.tolist() == [0.5, 0.5]


def test_load_header_comments_and_zero_weights(tmp_path):
    m = load_dataset(_write(tmp_path, "x,w\n# note\n\n2,1\n3,0\n1,3\n"))
    assert m.x.tolist() == [1.0, 2.0] and m.w.tolist() == [0.75, 0.25]


@pytest.mark.parametrize(
    "text, where",
    [("1\nabc\n", ":2:"), ("1\n2,3,4\n", ":2:"), ("1,-1\n", ":1:"), ("nan\n", ":1:"), ("1,0\n2,0\n", "zero"), ("# only\n", "no data")],
)
def test_load_errors(tmp_path, text, where):
    with pytest.raises(InputError, match=where):
        load_dataset(_write(tmp_path, text))


def test_load_missing_file(tmp_path):
    with pytest.raises(OSError):
        load_dataset(tmp_path / "missing.csv")


@pytest.mark.parametrize("maker", [
    lambda m: fit_monotone(m, 50),
    lambda m: fit_logconcave(m, 50),
    fit_grenander,
    lambda m: fit_logconcave(build_empirical([2.0]), 8),
])
def test_round_trip(tmp_path, rng, maker):
    fit = maker(build_empirical(rng.exponential(size=20)))
    path = tmp_path / "fit.json"
    write_fit(fit, path)
    back = read_fit(path)
    assert type(back) is type(fit)
    assert np.array_equal(back.q, fit.q) and np.array_equal(back.partition.u, fit.partition.u)
    assert back.w2 == fit.w2 and back.report.status == fit.report.status
    if fit.model == "logconcave":
        assert back.c == fit.c and (fit.h is None or np.array_equal(back.h, fit.h))


def test_document_point_mass_support():
    doc = fit_to_document(fit_monotone(build_empirical([1.0]), 200))
    assert doc["support"][1] == pytest.approx(1.5, abs=1e-6)
    json.dumps(doc, allow_nan=False)


def test_schema_errors(tmp_path):
    doc = fit_to_document(fit_monotone(build_empirical([1.0]), 4))
    with pytest.raises(SchemaError):
        document_to_fit({**doc, "schema_version": 99})
    with pytest.raises(SchemaError):
        document_to_fit({**doc, "model": "nope"})
    with pytest.raises(SchemaError):
        document_to_fit({k: v for k, v in doc.items() if k != "q"})
    bad = _write(tmp_path, "{not json", "bad.json")
    with pytest.raises(SchemaError):
        read_fit(bad)


def test_plot_monotone(tmp_path, rng):
    fit = fit_monotone(build_empirical(rng.exponential(size=30)), 100)
    path = tmp_path / "p.csv"
    write_plot(fit.density(), path)
    rows = path.read_text().splitlines()
    assert rows[0] == "x,density" and len(rows) == 513
    x, f = np.array([[float(v) for v in r.split(",")] for r in rows[1:]]).T
    assert np.all(np.diff(x) > 0) and np.all(np.diff(f) <= 0)
