from __future__ import annotations

import csv
import io
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from strategies import records
from vulnx.dataset import load_dataset, parse_dataset, records_to_csv, write_dataset
from vulnx.errors import ParseError
from vulnx.schema import serialize_record


@given(st.lists(records(), max_size=5))
def test_dataset_roundtrip(recs):
    text = json.dumps({"metadata": {"a": 1}, "records": [json.loads(serialize_record(r)) for r in recs], "gaps": []})
    back, meta = parse_dataset(text)
    assert back == recs and meta == {"a": 1}


def test_write_and_load(tmp_path):
    from vulnx.synth import generate_openvas_report

    rep = generate_openvas_report(3, seed=1)
    path = write_dataset(tmp_path / "sub" / "d.json", rep.baseline, {"seed": 1}, gaps=[])
    back, meta = load_dataset(path)
    assert back == rep.baseline and meta == {"seed": 1}
    assert json.loads(path.read_text())["gaps"] == []


def test_bare_array_accepted():
    assert parse_dataset('[{"scanner": "openvas", "id": "a"}]')[0][0].id == "a"


@pytest.mark.parametrize("text", ['{"records": 3}', "{", '[{"id": "no scanner"}]', '"x"'])
def test_parse_errors(text):
    with pytest.raises(ParseError):
        parse_dataset(text, "f.json")


def test_csv_export(tmp_path):
    from vulnx.synth import generate_openvas_report

    rep = generate_openvas_report(3, seed=1)
    rows = list(csv.DictReader(io.StringIO(records_to_csv(rep.baseline))))
    assert len(rows) == 3 and "raw_fields" not in rows[0]
    assert rows[0]["scanner"] == "openvas"
    assert rows[0]["cves"] == "|".join(rep.baseline[0].cves)
